"""
The distortion terms of the rate-distortion loss, as graph operations.

MSE is the default; ``1 − MS-SSIM`` is the optional alternative.
The differentiable MS-SSIM here is the same formula as `epac.metrics.quality.ms_ssim`,
with the Gaussian window applied as a fixed per-channel convolution.
"""
import numpy as np

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.metrics import quality

MS_SSIM_FLOOR = 1e-8


def mse(x: graphs.Tensor, y: graphs.Tensor) -> graphs.Tensor:
    return ops.reduce_mean(ops.square(x - y))


def ms_ssim(x: graphs.Tensor, y: graphs.Tensor, scales: int = 3) -> graphs.Tensor:
    n, c, h, w = x.shape
    needed = quality.min_size(scales)
    if min(h, w) < needed:
        raise quality.MetricError(f"MS-SSIM with {scales} scales needs frames of at least "
                                  f"{needed}x{needed}, got {w}x{h}.")
    graph = x.graph
    kernel = np.zeros((c, c, quality.WINDOW_SIZE, quality.WINDOW_SIZE))
    for channel in range(c):
        kernel[channel, channel] = quality.gaussian_window()
    window = graph.constant(kernel)
    zeros = graph.constant(np.zeros(c))

    def filt(t: graphs.Tensor) -> graphs.Tensor:
        return ops.conv2d(t, window, zeros, stride=1, padding=0)

    weights = quality.scale_weights(scales)
    result = None
    for scale in range(scales):
        mu_x, mu_y = filt(x), filt(y)
        var_x = filt(x * x) - mu_x * mu_x
        var_y = filt(y * y) - mu_y * mu_y
        cov = filt(x * y) - mu_x * mu_y
        cs = (2.0 * cov + quality.C2) / (var_x + var_y + quality.C2)
        if scale < scales - 1:
            value = ops.reduce_mean(ops.relu(cs))
            x, y = ops.avg_pool2x(x), ops.avg_pool2x(y)
        else:
            luminance = (2.0 * mu_x * mu_y + quality.C1) / (mu_x * mu_x + mu_y * mu_y + quality.C1)
            value = ops.reduce_mean(ops.relu(luminance * cs))
        term = ops.pow_scalar(ops.floor_at(value, MS_SSIM_FLOOR), float(weights[scale]))
        result = term if result is None else result * term
    assert result is not None
    return result


def distortion(x: graphs.Tensor, y: graphs.Tensor, kind: str = 'mse', scales: int = 3) -> graphs.Tensor:
    if kind == 'mse':
        return mse(x, y)
    elif kind == 'ms-ssim':
        return 1.0 - ms_ssim(x, y, scales)
    else:
        raise ValueError(f"Unknown distortion: {kind!r}")
