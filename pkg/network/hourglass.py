"""
Hourglass encoder-decoder networks built on the autodiff tape.

Two variants share one builder:

- ``2d``: feature maps are H x W x F. The first layer sees all C bands at
  once (its kernels have depth C) and the last layer emits exactly C bands.
- ``3d``: the cube is treated as a single-feature volume H x W x C x 1 and
  every layer uses small cubic kernels. Downsampling and upsampling also act
  on the spectral axis (see ``spectral_downsampling``).
"""
import logging
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from autodiff.init import LINEAR_GAIN, ParamSpec, init_params, leaky_relu_gain
from autodiff.tape import Tape
from core.errors import ArchitectureError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_CHANNELS = {
    "2d": [16, 32, 64, 128, 128],
    "3d": [4, 8, 32, 192, 192],
}
DEFAULT_LEVELS = 5
DEFAULT_SKIP_CHANNELS = 4
OUTPUT_LAYER = "output"


class ArchSpec(BaseModel):
    """
    Declarative description of an hourglass network.

    ``channels_per_level`` holds feature-map counts for the 2D variant and
    feature multiplicities for the 3D variant; when omitted the defaults for
    the variant are used (truncated or extended to ``levels``).
    """
    model_config = ConfigDict(frozen=True)

    variant: Literal["2d", "3d"] = "2d"
    levels: int = Field(DEFAULT_LEVELS, ge=1)
    channels_per_level: List[int] = Field(default_factory=list)
    kernel_size: int = Field(3, ge=1)
    skip: List[bool] = Field(default_factory=list)
    skip_channels: int = Field(DEFAULT_SKIP_CHANNELS, ge=1)
    upsample_mode: Literal["nearest", "linear"] = "linear"
    input_shape: Tuple[int, int, int]
    leaky_slope: float = Field(0.1, gt=0, lt=1)
    spectral_downsampling: Literal["auto", "strict", "off"] = "auto"

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        variant = str(data.get("variant", "2d")).lower()
        data["variant"] = variant
        levels = int(data.get("levels", DEFAULT_LEVELS))
        if not data.get("channels_per_level"):
            defaults = DEFAULT_CHANNELS.get(variant, DEFAULT_CHANNELS["2d"])
            data["channels_per_level"] = [defaults[min(i, len(defaults) - 1)] for i in range(levels)]
        skip = data.get("skip", True)
        if isinstance(skip, bool) or skip is None:
            data["skip"] = [bool(skip if skip is not None else True)] * levels
        return data

    def check(self) -> None:
        """
        Verify the cross-field invariants.

        Raises:
            ArchitectureError: naming the offending field
        """
        if len(self.channels_per_level) != self.levels:
            raise ArchitectureError(
                f"channels_per_level has {len(self.channels_per_level)} entries for {self.levels} levels",
                field="channels_per_level",
            )
        if any(c < 1 for c in self.channels_per_level):
            raise ArchitectureError("channel counts must be positive", field="channels_per_level")
        if len(self.skip) != self.levels:
            raise ArchitectureError(f"skip has {len(self.skip)} entries for {self.levels} levels", field="skip")
        if self.kernel_size % 2 == 0:
            raise ArchitectureError(f"kernel_size must be odd, got {self.kernel_size}", field="kernel_size")
        height, width, bands = self.input_shape
        if min(self.input_shape) < 1:
            raise ArchitectureError(f"input_shape must be positive, got {self.input_shape}", field="input_shape")
        scale = 2 ** self.levels
        for extent, label in ((height, "height"), (width, "width")):
            if extent % scale:
                raise ArchitectureError(
                    f"{label} {extent} is not divisible by 2^{self.levels} = {scale}", field=label,
                )
        if self.variant == "3d" and self.spectral_downsampling == "strict" and bands % scale:
            raise ArchitectureError(
                f"Spectral extent {bands} would vanish under {self.levels} halvings (needs a multiple of {scale})",
                field="bands",
            )

    def spectral_halvings(self) -> List[bool]:
        """Whether encoder level i halves the spectral axis (3D variant)."""
        if self.variant != "3d" or self.spectral_downsampling == "off":
            return [False] * self.levels
        halvings, bands = [], self.input_shape[2]
        for _ in range(self.levels):
            halve = bands % 2 == 0
            halvings.append(halve)
            if halve:
                bands //= 2
        return halvings


class HourglassNetwork:
    """
    A built hourglass network: a tape plus its input and output node ids.
    """

    def __init__(self, spec: ArchSpec, tape: Tape, input_id: int, output_id: int):
        self.spec = spec
        self.tape = tape
        self.input_id = input_id
        self.output_id = output_id

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return tuple(self.spec.input_shape)

    @property
    def parameter_count(self) -> int:
        return self.tape.parameter_count

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: value.shape for name, value in self.tape.trainable_params().items()}

    def forward(self, z: np.ndarray) -> np.ndarray:
        """
        Evaluate f_theta(z).

        Raises:
            ShapeMismatchError: z does not have the image shape
        """
        z = np.asarray(z, dtype=np.float64)
        if z.shape != self.input_shape:
            raise ShapeMismatchError(
                f"Network input must have shape {self.input_shape}, got {z.shape}",
                field="z", expected=self.input_shape, actual=z.shape,
            )
        self.tape.run({"z": z}, until=self.output_id)
        return self.tape.value(self.output_id).copy()


class _HourglassBuilder:
    """Appends conv blocks to a tape and records their parameter specs."""

    def __init__(self, spec: ArchSpec):
        self.spec = spec
        self.tape = Tape()
        self.spatial = 2 if spec.variant == "2d" else 3
        self.param_specs: List[ParamSpec] = []

    def _param(self, name: str, shape: Sequence[int], fan_in: int, gain: float = 1.0) -> int:
        self.param_specs.append(ParamSpec(name=name, shape=tuple(shape), fan_in=fan_in, gain=gain))
        return self.tape.param(name, np.zeros(shape))

    def conv(self, x: int, features: int, kernel: int, stride, name: str,
             activation: bool = True) -> int:
        in_features = self.tape.shape(x)[-1]
        fan_in = kernel ** self.spatial * in_features
        gain = leaky_relu_gain(self.spec.leaky_slope) if activation else LINEAR_GAIN
        weight = self._param(f"{name}.weight", (kernel,) * self.spatial + (in_features, features), fan_in, gain)
        bias = self._param(f"{name}.bias", (features,), fan_in)
        h = self.tape.conv(x, weight, stride=stride, pad=kernel // 2, name=name)
        h = self.tape.apply("bias_add", h, bias)
        if activation:
            h = self.tape.leaky_relu(h, self.spec.leaky_slope)
        return h

    def build(self) -> Tuple[int, int]:
        spec = self.spec
        height, width, bands = spec.input_shape
        k = spec.kernel_size
        z = self.tape.input("z", spec.input_shape)
        x = z if self.spatial == 2 else self.tape.apply("reshape", z, shape=(height, width, bands, 1))

        halvings = spec.spectral_halvings()
        skips: List[Optional[int]] = []
        for level, features in enumerate(spec.channels_per_level):
            skip = None
            if spec.skip[level]:
                skip = self.conv(x, spec.skip_channels, 1, 1, f"enc{level}.skip")
            skips.append(skip)
            stride = (2, 2) if self.spatial == 2 else (2, 2, 2 if halvings[level] else 1)
            x = self.conv(x, features, k, stride, f"enc{level}.down")
            x = self.conv(x, features, k, 1, f"enc{level}.conv")

        for level in reversed(range(spec.levels)):
            factors = (2, 2) if self.spatial == 2 else (2, 2, 2 if halvings[level] else 1)
            x = self.tape.upsample(x, factors, spec.upsample_mode)
            if skips[level] is not None:
                x = self.tape.apply("concat", x, skips[level])
            features = spec.channels_per_level[level]
            x = self.conv(x, features, k, 1, f"dec{level}.conv")
            x = self.conv(x, features, 1, 1, f"dec{level}.conv1x1")

        out_features = bands if self.spatial == 2 else 1
        x = self.conv(x, out_features, 1, 1, OUTPUT_LAYER, activation=False)
        x = self.tape.apply("sigmoid", x)
        if self.spatial == 3:
            x = self.tape.apply("reshape", x, shape=(height, width, bands))
        return z, x


def build_network(spec: ArchSpec, seed: int) -> HourglassNetwork:
    """
    Build the hourglass described by ``spec`` with seeded random weights.

    Args:
        spec: Architecture description (its input_shape is the image shape)
        seed: Parameter initialisation seed

    Returns:
        HourglassNetwork

    Raises:
        ArchitectureError: ``spec`` fails ArchSpec.check()
    """
    spec.check()
    builder = _HourglassBuilder(spec)
    input_id, output_id = builder.build()
    if builder.tape.shape(output_id) != tuple(spec.input_shape):
        raise ArchitectureError(
            f"Network output shape {builder.tape.shape(output_id)} differs from {spec.input_shape}",
            field="input_shape",
        )
    builder.tape.load_params(init_params(seed, builder.param_specs))
    net = HourglassNetwork(spec, builder.tape, input_id, output_id)
    logger.info(
        f"Built {spec.variant} hourglass: {spec.levels} levels, channels {spec.channels_per_level}, "
        f"{net.parameter_count} parameters"
    )
    return net
