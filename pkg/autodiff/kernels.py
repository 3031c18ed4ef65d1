"""
Dense numpy kernels for the hourglass networks and the task energies.

All arrays are channels-last: a 2D feature map is H x W x F, a 3D feature
volume is H x W x C x F. Convolution kernels are laid out as
(k_1, ..., k_s, F_in, F_out) for s spatial axes. Each forward kernel has a
matching ``*_backward`` that maps the upstream gradient onto its inputs.
"""
import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from core.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

UPSAMPLE_MODES = ("nearest", "linear")


def _per_axis(value: int | Sequence[int], count: int, name: str) -> Tuple[int, ...]:
    """Broadcast a scalar stride/pad/factor to one value per spatial axis."""
    if isinstance(value, (int, np.integer)):
        return (int(value),) * count
    values = tuple(int(v) for v in value)
    if len(values) != count:
        raise ShapeMismatchError(
            f"Expected {count} {name} values, got {len(values)}", field=name,
            expected=count, actual=len(values),
        )
    return values


# ---------------------------------------------------------------------------
# Reflection padding
# ---------------------------------------------------------------------------

def reflect_indices(extent: int, pad: int) -> np.ndarray:
    """
    Source index for every position of a reflection-padded axis.

    Reflection excludes the edge sample (``dcba|abcd|dcba`` minus repeats),
    matching ``np.pad(mode="reflect")`` whenever ``pad < extent``. A single
    sample axis pads by repetition.
    """
    positions = np.arange(-pad, extent + pad)
    if extent == 1:
        return np.zeros_like(positions)
    period = 2 * (extent - 1)
    folded = np.mod(positions, period)
    return np.where(folded < extent, folded, period - folded)


def reflect_pad(x: np.ndarray, pad: Sequence[int]) -> np.ndarray:
    """Reflection-pad the leading ``len(pad)`` axes of ``x``."""
    out = x
    for axis, p in enumerate(pad):
        if p:
            out = np.take(out, reflect_indices(out.shape[axis], p), axis=axis)
    return out


def reflect_pad_backward(grad: np.ndarray, pad: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    """Fold the gradient of a padded array back onto the unpadded one."""
    out = grad
    for axis in reversed(range(len(pad))):
        p = pad[axis]
        if not p:
            continue
        extent = shape[axis]
        index = reflect_indices(extent, p)
        moved = np.moveaxis(out, axis, 0)
        folded = moved[p:p + extent].copy()
        for j in list(range(p)) + list(range(p + extent, extent + 2 * p)):
            folded[index[j]] += moved[j]
        out = np.moveaxis(folded, 0, axis)
    return out


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def conv_output_shape(in_shape: Sequence[int], kernel_shape: Sequence[int],
                      stride: int | Sequence[int] = 1, pad: int | Sequence[int] = 0) -> Tuple[int, ...]:
    """
    Output extents of ``conv_forward`` without evaluating it.

    Raises:
        ShapeMismatchError: rank, channel or extent mismatch
    """
    in_shape = tuple(in_shape)
    kernel_shape = tuple(kernel_shape)
    if len(in_shape) not in (3, 4):
        raise ShapeMismatchError(
            f"Convolution input must be rank 3 or 4, got rank {len(in_shape)}",
            field="input rank", expected=(3, 4), actual=len(in_shape),
        )
    spatial = len(in_shape) - 1
    if len(kernel_shape) != spatial + 2:
        raise ShapeMismatchError(
            f"Kernel rank {len(kernel_shape)} does not fit a rank-{len(in_shape)} input",
            field="kernel rank", expected=spatial + 2, actual=len(kernel_shape),
        )
    if kernel_shape[spatial] != in_shape[-1]:
        raise ShapeMismatchError(
            f"Kernel expects {kernel_shape[spatial]} input channels, input has {in_shape[-1]}",
            field="input channels", expected=kernel_shape[spatial], actual=in_shape[-1],
        )
    stride = _per_axis(stride, spatial, "stride")
    pad = _per_axis(pad, spatial, "pad")
    out = []
    for axis in range(spatial):
        if stride[axis] < 1:
            raise ShapeMismatchError(f"Stride must be positive, got {stride[axis]}", field=f"stride[{axis}]")
        padded = in_shape[axis] + 2 * pad[axis]
        if kernel_shape[axis] > padded:
            raise ShapeMismatchError(
                f"Kernel extent {kernel_shape[axis]} exceeds padded input extent {padded}",
                field=f"spatial axis {axis}", expected=f"<= {padded}", actual=kernel_shape[axis],
            )
        out.append((padded - kernel_shape[axis]) // stride[axis] + 1)
    return tuple(out) + (kernel_shape[-1],)


def _window(offset: Sequence[int], out_extents: Sequence[int], stride: Sequence[int]) -> tuple:
    """Strided slice selecting the input samples one kernel tap touches."""
    return tuple(
        slice(o, o + s * (n - 1) + 1, s) for o, n, s in zip(offset, out_extents, stride)
    ) + (slice(None),)


def conv_forward(x: np.ndarray, kernel: np.ndarray,
                 stride: int | Sequence[int] = 1, pad: int | Sequence[int] = 0) -> np.ndarray:
    """
    Reflection-padded strided cross-correlation.

    Args:
        x: H x W x F_in (2D) or H x W x C x F_in (3D) array
        kernel: (k_1, ..., k_s, F_in, F_out) array
        stride: Stride per spatial axis
        pad: Reflection padding per spatial axis

    Returns:
        np.ndarray: output with extents floor((n + 2p - k) / s) + 1 and F_out channels
    """
    spatial = x.ndim - 1
    out_shape = conv_output_shape(x.shape, kernel.shape, stride, pad)
    stride = _per_axis(stride, spatial, "stride")
    pad = _per_axis(pad, spatial, "pad")

    padded = reflect_pad(x, pad)
    out = np.zeros(out_shape, dtype=np.float64)
    # One matmul per kernel tap; taps are visited in a fixed order.
    for offset in np.ndindex(*kernel.shape[:spatial]):
        out += padded[_window(offset, out_shape[:spatial], stride)] @ kernel[offset]
    return out


def conv_backward(grad: np.ndarray, x: np.ndarray, kernel: np.ndarray,
                  stride: int | Sequence[int] = 1, pad: int | Sequence[int] = 0,
                  need_input: bool = True, need_kernel: bool = True):
    """
    Gradients of ``conv_forward`` with respect to its input and kernel.

    Returns:
        tuple: (grad_input or None, grad_kernel or None)
    """
    spatial = x.ndim - 1
    stride = _per_axis(stride, spatial, "stride")
    pad = _per_axis(pad, spatial, "pad")
    padded = reflect_pad(x, pad)
    out_extents = grad.shape[:spatial]
    axes = list(range(spatial))

    grad_padded = np.zeros_like(padded) if need_input else None
    grad_kernel = np.zeros_like(kernel) if need_kernel else None
    for offset in np.ndindex(*kernel.shape[:spatial]):
        window = _window(offset, out_extents, stride)
        if need_kernel:
            grad_kernel[offset] = np.tensordot(padded[window], grad, axes=(axes, axes))
        if need_input:
            grad_padded[window] += grad @ kernel[offset].T

    grad_input = reflect_pad_backward(grad_padded, pad, x.shape) if need_input else None
    return grad_input, grad_kernel


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    """Elementwise ``v if v >= 0 else slope * v``."""
    return np.where(x >= 0, x, slope * x)


def leaky_relu_backward(grad: np.ndarray, x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, grad, slope * grad)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid_backward(grad: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad * y * (1.0 - y)


# ---------------------------------------------------------------------------
# Upsampling
# ---------------------------------------------------------------------------

def linear_weights(extent: int, factor: int) -> np.ndarray:
    """
    Interpolation matrix (extent * factor, extent) for half-pixel-centred
    linear upsampling with edge clamping (align_corners=False).
    """
    size = extent * factor
    weights = np.zeros((size, extent), dtype=np.float64)
    src = (np.arange(size) + 0.5) / factor - 0.5
    src = np.maximum(src, 0.0)
    lower = np.minimum(np.floor(src).astype(int), extent - 1)
    upper = np.minimum(lower + 1, extent - 1)
    frac = src - lower
    rows = np.arange(size)
    np.add.at(weights, (rows, lower), 1.0 - frac)
    np.add.at(weights, (rows, upper), frac)
    return weights


def upsample(x: np.ndarray, factors: Sequence[int], mode: str = "nearest") -> np.ndarray:
    """
    Upsample the leading ``len(factors)`` axes of ``x``.

    ``nearest`` replicates samples, ``linear`` interpolates separably
    (bilinear in 2D, trilinear in 3D).
    """
    if mode not in UPSAMPLE_MODES:
        raise ValueError(f"Unknown upsample mode '{mode}', expected one of {UPSAMPLE_MODES}")
    out = x
    for axis, factor in enumerate(factors):
        if factor < 1:
            raise ShapeMismatchError(f"Upsample factor must be >= 1, got {factor}", field=f"factor[{axis}]")
        if factor == 1:
            continue
        if mode == "nearest":
            out = np.repeat(out, factor, axis=axis)
        else:
            weights = linear_weights(out.shape[axis], factor)
            out = np.moveaxis(np.tensordot(weights, out, axes=([1], [axis])), 0, axis)
    return out


def upsample_backward(grad: np.ndarray, in_shape: Sequence[int], factors: Sequence[int],
                      mode: str = "nearest") -> np.ndarray:
    out = grad
    for axis in reversed(range(len(factors))):
        factor = factors[axis]
        if factor == 1:
            continue
        extent = in_shape[axis]
        if mode == "nearest":
            split = out.shape[:axis] + (extent, factor) + out.shape[axis + 1:]
            out = out.reshape(split).sum(axis=axis + 1)
        else:
            weights = linear_weights(extent, factor)
            out = np.moveaxis(np.tensordot(weights.T, out, axes=([1], [axis])), 0, axis)
    return out


# ---------------------------------------------------------------------------
# Block averaging (the super-resolution degradation)
# ---------------------------------------------------------------------------

def block_mean(x: np.ndarray, factor: int) -> np.ndarray:
    """
    Average non-overlapping factor x factor blocks over the two leading axes.
    """
    height, width = x.shape[:2]
    if height % factor or width % factor:
        bad = "height" if height % factor else "width"
        raise ShapeMismatchError(
            f"Spatial extents {height}x{width} are not divisible by factor {factor}",
            field=bad, expected=f"multiple of {factor}", actual=(height, width),
        )
    if factor == 1:
        return x.copy()
    blocks = x.reshape((height // factor, factor, width // factor, factor) + x.shape[2:])
    return blocks.mean(axis=(1, 3))


def block_mean_backward(grad: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return grad.copy()
    spread = np.repeat(np.repeat(grad, factor, axis=0), factor, axis=1)
    return spread / float(factor * factor)
