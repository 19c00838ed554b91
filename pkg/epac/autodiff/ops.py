"""
The differentiable operations needed by the codec.

All operations are functions of tensors of the same graph. The subgradients
at the kinks are fixed: ``relu'(0) = 0``, the clamping passes the gradient
only within ``[0, 1]`` (inclusive), the floors pass it only above the floor.
"""
from typing import Sequence, Tuple

import numpy as np
import scipy.special
from numpy.lib.stride_tricks import sliding_window_view

from epac.autodiff.graphs import PreconditionError, Tensor, add, div, mul, neg, sub

__all__ = [
    'add', 'sub', 'mul', 'div', 'neg', 'scalar_mul',
    'relu', 'leaky_relu', 'clamp01', 'square', 'abs', 'sigmoid', 'softplus',
    'log2', 'floor_at', 'pow_scalar', 'round_ste', 'detach',
    'reduce_sum', 'reduce_mean', 'concat', 'broadcast_channels',
    'conv2d', 'upsample2x_nearest', 'avg_pool2x', 'bilinear_warp',
]


def scalar_mul(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return a.graph.record('scalar_mul', a.data * factor, (a,), lambda g: (g * factor,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return a.graph.record('relu', np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    return a.graph.record('leaky_relu', a.data * factor, (a,), lambda g: (g * factor,))


def clamp01(a: Tensor) -> Tensor:
    inside = (a.data >= 0.0) & (a.data <= 1.0)
    return a.graph.record('clamp01', np.clip(a.data, 0.0, 1.0), (a,), lambda g: (g * inside,))


def square(a: Tensor) -> Tensor:
    return a.graph.record('square', a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def abs(a: Tensor) -> Tensor:
    return a.graph.record('abs', np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def sigmoid(a: Tensor) -> Tensor:
    out = scipy.special.expit(a.data)
    return a.graph.record('sigmoid', out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.data)
    return a.graph.record('softplus', out, (a,), lambda g: (g * scipy.special.expit(a.data),))


def log2(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise PreconditionError("log2: all operands must be positive.")
    return a.graph.record('log2', np.log2(a.data), (a,), lambda g: (g / (a.data * np.log(2.0)),))


def floor_at(a: Tensor, floor: float) -> Tensor:
    above = a.data > floor
    return a.graph.record('floor_at', np.where(above, a.data, floor), (a,), lambda g: (g * above,))


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    if np.any(a.data <= 0):
        raise PreconditionError("pow_scalar: all operands must be positive.")
    out = np.power(a.data, exponent)
    return a.graph.record('pow', out, (a,), lambda g: (g * exponent * out / a.data,))


def round_ste(a: Tensor) -> Tensor:
    """ Round half away from zero; the gradient passes straight through. """
    out = np.sign(a.data) * np.floor(np.abs(a.data) + 0.5)
    return a.graph.record('round_ste', out, (a,), lambda g: (g,))


def detach(a: Tensor) -> Tensor:
    tensor = a.graph.constant(a.data)
    tensor.provenance = a.provenance
    return tensor


def reduce_sum(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise PreconditionError("reduce_sum: the tensor is empty.")
    shape = a.shape
    return a.graph.record('reduce_sum', np.sum(a.data), (a,), lambda g: (np.full(shape, float(g)),))


def reduce_mean(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise PreconditionError("reduce_mean: the tensor is empty.")
    shape, count = a.shape, a.data.size
    return a.graph.record('reduce_mean', np.mean(a.data), (a,), lambda g: (np.full(shape, float(g) / count),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise PreconditionError("concat: nothing to concatenate.")
    ranks = {t.data.ndim for t in tensors}
    if len(ranks) != 1:
        raise PreconditionError(f"concat: rank mismatch: {[t.shape for t in tensors]}.")
    for dim in range(tensors[0].data.ndim):
        sizes = {t.shape[dim] for t in tensors}
        if dim != axis and len(sizes) != 1:
            raise PreconditionError(f"concat: shape mismatch at dimension {dim}: {sorted(sizes)}.")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, splits, axis=axis)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return tensors[0].graph.record('concat', data, tuple(tensors), vjp)


def broadcast_channels(vector: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """ Spread a per-channel vector ``[C]`` over an ``[N, C, H, W]`` shape. """
    if len(shape) != 4 or vector.shape != (shape[1],):
        raise PreconditionError(f"broadcast_channels: shape mismatch at dimension 1: "
                                f"vector {vector.shape} vs target {shape}.")
    data = np.broadcast_to(vector.data.reshape(1, -1, 1, 1), shape).copy()
    return vector.graph.record('broadcast_channels', data, (vector,), lambda g: (g.sum(axis=(0, 2, 3)),))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, *, stride: int = 1, padding: int = 0) -> Tensor:
    if x.data.ndim != 4:
        raise PreconditionError(f"conv2d: the input must be [N, C, H, W], got rank {x.data.ndim}.")
    if weight.data.ndim != 4:
        raise PreconditionError(f"conv2d: the weight must be [Cout, Cin, kh, kw], got rank {weight.data.ndim}.")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise PreconditionError(f"conv2d: shape mismatch at dimension 1 (input channels): "
                                f"input has {cin}, weight expects {wcin}.")
    if bias.shape != (cout,):
        raise PreconditionError(f"conv2d: shape mismatch at dimension 0 (output channels): "
                                f"bias {bias.shape} vs {cout} filters.")
    if kh % 2 == 0 or kw % 2 == 0:
        raise PreconditionError(f"conv2d: kernel sizes must be odd, got {kh}x{kw}.")
    if stride not in (1, 2) or padding < 0:
        raise PreconditionError(f"conv2d: invalid stride={stride} or padding={padding}.")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise PreconditionError(f"conv2d: shape mismatch at dimension 2/3: "
                                f"{h}x{w} (padded by {padding}) is smaller than the {kh}x{kw} kernel.")

    s, p = stride, padding
    padded = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]  # N,Cin,Ho,Wo,kh,kw
    ho, wo = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # N,Ho,Wo,Cout
    out = out.transpose(0, 3, 1, 2) + bias.data.reshape(1, -1, 1, 1)

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        grad_b = g.sum(axis=(0, 2, 3))
        grad_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))  # Cout,Cin,kh,kw
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                part = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))  # N,Ho,Wo,Cin
                grad_padded[:, :, i:i + s * ho:s, j:j + s * wo:s] += part.transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, p:p + h, p:p + w]
        return grad_x, grad_w, grad_b

    return x.graph.record('conv2d', out, (x, weight, bias), vjp)


def upsample2x_nearest(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise PreconditionError(f"upsample2x_nearest: the input must be [N, C, H, W], got {x.shape}.")
    n, c, h, w = x.shape
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    return x.graph.record('upsample2x', data, (x,), lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),))


def avg_pool2x(x: Tensor) -> Tensor:
    if x.data.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise PreconditionError(f"avg_pool2x: the input must be [N, C, H, W] with even sizes, got {x.shape}.")
    n, c, h, w = x.shape
    data = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0,)

    return x.graph.record('avg_pool2x', data, (x,), vjp)


def bilinear_warp(image: Tensor, flow: Tensor) -> Tensor:
    """
    Sample the image at ``p + flow(p)`` with the bilinear interpolation.

    The flow is in pixels: channel 0 is horizontal, channel 1 is vertical.
    The sampling positions are clamped to the image borders; the gradient
    w.r.t. the flow is zero where the clamping is active.
    """
    if image.data.ndim != 4:
        raise PreconditionError(f"bilinear_warp: the image must be [N, C, H, W], got {image.shape}.")
    n, c, h, w = image.shape
    expected = (n, 2, h, w)
    if flow.shape != expected:
        dims = [dim for dim in range(4) if flow.data.ndim != 4 or flow.shape[dim] != expected[dim]]
        raise PreconditionError(f"bilinear_warp: shape mismatch at dimension {dims[0]}: "
                                f"the flow is {flow.shape}, expected {expected}.")

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing='ij')
    raw_x = xs[np.newaxis] + flow.data[:, 0]
    raw_y = ys[np.newaxis] + flow.data[:, 1]
    sx = np.clip(raw_x, 0.0, w - 1.0)
    sy = np.clip(raw_y, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (sx - x0)[:, np.newaxis]  # N,1,H,W
    wy = (sy - y0)[:, np.newaxis]

    batch = np.arange(n)[:, np.newaxis, np.newaxis]
    pixels = image.data.transpose(0, 2, 3, 1)  # N,H,W,C
    ia = pixels[batch, y0, x0].transpose(0, 3, 1, 2)
    ib = pixels[batch, y0, x1].transpose(0, 3, 1, 2)
    ic = pixels[batch, y1, x0].transpose(0, 3, 1, 2)
    id = pixels[batch, y1, x1].transpose(0, 3, 1, 2)
    out = (1 - wx) * (1 - wy) * ia + wx * (1 - wy) * ib + (1 - wx) * wy * ic + wx * wy * id

    free_x = ((raw_x >= 0.0) & (raw_x <= w - 1.0))
    free_y = ((raw_y >= 0.0) & (raw_y <= h - 1.0))

    def vjp(g: np.ndarray) -> Sequence[np.ndarray]:
        grad_pixels = np.zeros((n, h, w, c))
        corners = ((y0, x0, (1 - wx) * (1 - wy)), (y0, x1, wx * (1 - wy)),
                   (y1, x0, (1 - wx) * wy), (y1, x1, wx * wy))
        for yy, xx, weight in corners:
            np.add.at(grad_pixels, (batch, yy, xx), (g * weight).transpose(0, 2, 3, 1))
        grad_image = grad_pixels.transpose(0, 3, 1, 2)

        d_sx = ((1 - wy) * (ib - ia) + wy * (id - ic)) * g
        d_sy = ((1 - wx) * (ic - ia) + wx * (id - ib)) * g
        grad_flow = np.stack([d_sx.sum(axis=1) * free_x, d_sy.sum(axis=1) * free_y], axis=1)
        return grad_image, grad_flow

    return image.graph.record('bilinear_warp', out, (image, flow), vjp)
