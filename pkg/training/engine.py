"""
The restoration loop.

A randomly initialised hourglass f_theta maps a fixed noise input z to a
cube; its weights are optimised with ADAM so that the task energy between
f_theta(z) (pushed through the task degradation) and the observation x0
decreases. The best-energy iterate is returned together with the run history.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import ADAM_DEFAULTS, TASK_BUDGETS, settings
from core.errors import ConfigError, NonFiniteError, ShapeMismatchError
from core.seeding import derive_seeds, iteration_rng, make_rng
from evaluation.metrics import mpsnr
from hsio.tables import write_csv
from network.hourglass import ArchSpec, build_network
from training.adam import AdamState, adam_step
from training.objectives import attach_energy, validate_mask

logger = logging.getLogger(__name__)

TaskKind = Literal["denoise", "inpaint", "superres"]


class FixedIters(BaseModel):
    """Run the whole iteration budget."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["fixed"] = "fixed"


class Patience(BaseModel):
    """Stop once the best energy improved by less than ``min_delta`` over ``window`` iterations."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["patience"] = "patience"
    window: int = Field(200, ge=1)
    min_delta: float = Field(1e-6, gt=0)


StopPolicy = Union[FixedIters, Patience]


class TaskConfig(BaseModel):
    """One restoration job."""
    model_config = ConfigDict(frozen=True)

    task: TaskKind
    arch: ArchSpec
    iters: int = Field(gt=0)
    lr: float = Field(ADAM_DEFAULTS["lr"], gt=0)
    beta1: float = Field(ADAM_DEFAULTS["beta1"], gt=0, lt=1)
    beta2: float = Field(ADAM_DEFAULTS["beta2"], gt=0, lt=1)
    eps: float = Field(ADAM_DEFAULTS["eps"], gt=0)
    seed: int = Field(settings.seed, ge=0)
    input_noise_range: float = Field(settings.input_noise_range, gt=0)
    perturb_sigma: float = Field(settings.perturb_sigma, ge=0)
    sr_factor: Optional[int] = Field(None, ge=1)
    stop_policy: StopPolicy = Field(default_factory=FixedIters, discriminator="kind")
    log_every: int = Field(settings.log_every, gt=0)

    @model_validator(mode="after")
    def _task_fields(self):
        if self.task == "superres" and self.sr_factor is None:
            raise ValueError("sr_factor is required for superres")
        if self.task != "superres" and self.sr_factor is not None:
            raise ValueError(f"sr_factor is only valid for superres, not {self.task}")
        return self

    @classmethod
    def for_task(cls, task: str, input_shape, **overrides) -> "TaskConfig":
        """
        Config with the default budget and architecture for ``task``.

        ``input_shape`` is the shape of the restored cube (the high-resolution
        shape for super-resolution).
        """
        arch = overrides.pop("arch", None) or ArchSpec(input_shape=tuple(input_shape))
        iters = overrides.pop("iters", None) or TASK_BUDGETS[task]
        return cls(task=task, arch=arch, iters=iters, **overrides)


@dataclass
class RunHistory:
    """Per-iteration trajectory of one run."""
    energies: List[float] = field(default_factory=list)
    mpsnr: Optional[List[float]] = None
    millis: List[float] = field(default_factory=list)
    best_iteration: int = -1

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def best_energy(self) -> float:
        return self.energies[self.best_iteration] if self.energies else float("inf")

    def to_frame(self, timing: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame({"iteration": np.arange(len(self.energies)), "energy": self.energies})
        if self.mpsnr is not None:
            frame["mpsnr"] = self.mpsnr
        if timing:
            frame["millis"] = self.millis
        return frame

    def to_csv(self, path: str, timing: bool = False, overwrite: bool = False) -> None:
        write_csv(self.to_frame(timing), path, overwrite=overwrite, field="history")


@dataclass(frozen=True)
class ProgressSnapshot:
    """Read-only view of a run, handed to progress callbacks."""
    iteration: int
    energy: float
    best_energy: float
    best_iteration: int
    mpsnr: Optional[float] = None


def make_input_noise(shape, seed: int, b: float = 0.1) -> np.ndarray:
    """
    I.i.d. uniform noise on [0, b] with the image shape.
    """
    if b <= 0:
        raise ValueError(f"Noise range bound must be positive, got {b}")
    return make_rng(seed).uniform(0.0, b, size=tuple(shape))


def perturb_input(z: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """
    ``z`` plus N(0, sigma^2) noise drawn from ``rng``; ``z`` is never modified.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return z
    return z + rng.normal(0.0, sigma, size=z.shape)


def check_stop(history: RunHistory, policy: StopPolicy, iters: int) -> bool:
    """
    True when the run should stop after the last recorded iteration.
    """
    if len(history) == 0:
        raise ValueError("check_stop needs a nonempty history")
    if len(history) >= iters:
        return True
    if isinstance(policy, Patience):
        if len(history) <= policy.window:
            return False
        energies = history.energies
        before = min(energies[:-policy.window])
        recent = min(energies[-policy.window:])
        return before - recent < policy.min_delta
    return False


def _output_shape(config: TaskConfig, x0: np.ndarray) -> Tuple[int, int, int]:
    if config.task == "superres":
        height, width, bands = x0.shape
        return height * config.sr_factor, width * config.sr_factor, bands
    return tuple(x0.shape)


def restore(config: TaskConfig, x0: np.ndarray, mask: Optional[np.ndarray] = None,
            reference: Optional[np.ndarray] = None,
            progress: Optional[Callable[[ProgressSnapshot], None]] = None) -> Tuple[np.ndarray, RunHistory]:
    """
    Restore ``x0`` by fitting an untrained hourglass network to it.

    Args:
        config: Task, architecture, optimiser and stopping settings
        x0: Observation in [0, 1] (low-resolution cube for superres)
        mask: Binary mask, required for inpainting (1 = observed)
        reference: Optional clean cube; MPSNR against it is tracked per iteration
        progress: Called every ``log_every`` iterations with a snapshot

    Returns:
        tuple: (f_theta(z) at the best-energy iterate, RunHistory)

    Raises:
        ConfigError: mask presence does not match the task
        ShapeMismatchError: architecture, mask or reference shape mismatch
        NonFiniteError: the energy became NaN/Inf
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 3:
        raise ShapeMismatchError(f"Observation must be H x W x C, got shape {x0.shape}", field="x0")
    if not np.all(np.isfinite(x0)) or x0.min() < 0 or x0.max() > 1:
        raise ValueError("Observation values must be finite and lie in [0, 1]")
    if config.task == "inpaint" and mask is None:
        raise ConfigError("Inpainting requires a mask", field="mask")
    if config.task != "inpaint" and mask is not None:
        raise ConfigError(f"A mask is only used for inpainting, not {config.task}", field="mask")

    out_shape = _output_shape(config, x0)
    if tuple(config.arch.input_shape) != out_shape:
        raise ShapeMismatchError(
            f"Architecture input_shape {tuple(config.arch.input_shape)} must equal output shape {out_shape}",
            field="arch.input_shape", expected=out_shape, actual=tuple(config.arch.input_shape),
        )
    if reference is not None:
        reference = np.asarray(reference, dtype=np.float64)
        if reference.shape != out_shape:
            raise ShapeMismatchError(
                f"Reference shape {reference.shape} differs from output shape {out_shape}",
                field="reference", expected=out_shape, actual=reference.shape,
            )

    feeds = {"x0": x0}
    if mask is not None:
        mask = validate_mask(mask, x0.shape)
        # Unobserved entries never reach the energy.
        feeds["x0"] = x0 * mask
        feeds["mask"] = mask

    seeds = derive_seeds(config.seed)
    net = build_network(config.arch, seeds.init)
    tape = net.tape
    energy_id = attach_energy(tape, net.output_id, config.task, x0.shape, mask=mask, sr_factor=config.sr_factor)
    z = make_input_noise(out_shape, seeds.input, config.input_noise_range)
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    logger.info(
        f"Restoring ({config.task}) {x0.shape} -> {out_shape} with {net.parameter_count} parameters, "
        f"{config.iters} iterations, seed {config.seed}"
    )

    history = RunHistory(mpsnr=[] if reference is not None else None)
    best_output: Optional[np.ndarray] = None
    best_params: Optional[Dict[str, np.ndarray]] = None
    for iteration in range(config.iters):
        started = time.perf_counter()
        feeds["z"] = perturb_input(z, config.perturb_sigma, iteration_rng(seeds.perturb, iteration))
        try:
            tape.run(feeds)
        except NonFiniteError as e:
            raise NonFiniteError(f"Iteration {iteration}: {e.message}", field=e.field) from e
        energy = float(tape.value(energy_id))
        output = tape.value(net.output_id)

        if best_output is None or energy < history.best_energy:
            best_output = output.copy()
            if config.perturb_sigma > 0:
                best_params = {name: value.copy() for name, value in tape.trainable_params().items()}
            history.best_iteration = iteration
        history.energies.append(energy)
        if reference is not None:
            history.mpsnr.append(mpsnr(output, reference))

        grads = tape.backward(energy_id)
        params, state = adam_step(state, tape.trainable_params(), grads)
        tape.load_params(params)
        history.millis.append((time.perf_counter() - started) * 1000.0)

        if (iteration + 1) % config.log_every == 0:
            snapshot = ProgressSnapshot(
                iteration=iteration, energy=energy, best_energy=history.best_energy,
                best_iteration=history.best_iteration,
                mpsnr=history.mpsnr[-1] if history.mpsnr else None,
            )
            message = f"Iteration {iteration + 1:05d}  energy {energy:.6e}  best {snapshot.best_energy:.6e}"
            if snapshot.mpsnr is not None:
                message += f"  MPSNR {snapshot.mpsnr:.3f} dB"
            logger.info(message)
            if progress is not None:
                progress(snapshot)

        if check_stop(history, config.stop_policy, config.iters):
            break

    if best_params is not None:
        # Perturbed runs select on f(z + n); the result is the same weights on the fixed z.
        tape.load_params(best_params)
        best_output = net.forward(z)

    logger.info(
        f"Finished after {len(history)} iterations; best energy {history.best_energy:.6e} "
        f"at iteration {history.best_iteration}"
    )
    return best_output, history
