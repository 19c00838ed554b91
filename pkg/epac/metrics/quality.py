"""
The quality and rate metrics: PSNR, MS-SSIM, bits per pixel.

All frames are compared over all samples of all channels jointly
(RGB frames are not converted to luma); the peak value is 1.0.

MS-SSIM uses an 11×11 Gaussian window (σ=1.5) with valid filtering,
the standard stability constants, and the standard 5-scale weights
truncated and re-normalised to the requested number of scales. The desk-scale
frames are too small for 5 scales, so 3 scales are the default.
"""
import dataclasses
from typing import Union

import numpy as np
import scipy.signal

from epac.structs import errors
from epac.structs import frames

PSNR_CAP = 100.0
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03
C1, C2 = K1 ** 2, K2 ** 2
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

Samples = Union[frames.FrameBuffer, np.ndarray]


class MetricError(errors.DataError):
    """ The frames cannot be compared with the requested metric. """


@dataclasses.dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr: float
    ms_ssim: float = float('nan')


def _samples(frame: Samples) -> np.ndarray:
    return frame.samples if isinstance(frame, frames.FrameBuffer) else np.asarray(frame, dtype=np.float64)


def _pair(a: Samples, b: Samples) -> tuple:
    xa, xb = _samples(a), _samples(b)
    if xa.shape != xb.shape:
        raise MetricError(f"Frame geometries differ: {xa.shape} vs {xb.shape}.")
    return xa, xb


def mse(a: Samples, b: Samples) -> float:
    xa, xb = _pair(a, b)
    diff = xa - xb
    return float(np.mean(diff * diff))


def psnr_from_mse(value: float) -> float:
    return PSNR_CAP if value <= 0.0 else min(PSNR_CAP, float(10.0 * np.log10(1.0 / value)))


def psnr(a: Samples, b: Samples) -> float:
    return psnr_from_mse(mse(a, b))


def bits_per_pixel(nbytes: int, width: int, height: int, frame_count: int = 1) -> float:
    return 8.0 * nbytes / (width * height * frame_count)


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def scale_weights(scales: int) -> np.ndarray:
    weights = np.array(MS_SSIM_WEIGHTS[:scales])
    return weights / weights.sum()


def min_size(scales: int) -> int:
    return 16 * 2 ** (scales - 1)


def ms_ssim(a: Samples, b: Samples, scales: int = 3) -> float:
    xa, xb = _pair(a, b)
    if xa.ndim == 2:
        xa, xb = xa[np.newaxis], xb[np.newaxis]
    if not 1 <= scales <= len(MS_SSIM_WEIGHTS):
        raise MetricError(f"MS-SSIM supports 1..{len(MS_SSIM_WEIGHTS)} scales, got {scales}.")
    needed = min_size(scales)
    if min(xa.shape[-2:]) < needed:
        raise MetricError(f"MS-SSIM with {scales} scales needs frames of at least {needed}x{needed}, "
                          f"got {xa.shape[-1]}x{xa.shape[-2]}.")

    window = gaussian_window()
    weights = scale_weights(scales)
    values = []
    for scale in range(scales):
        cs_map, ssim_map = _ssim_maps(xa, xb, window)
        if scale < scales - 1:
            values.append(max(0.0, float(np.mean(cs_map))))
            xa, xb = _downsample(xa), _downsample(xb)
        else:
            values.append(max(0.0, float(np.mean(ssim_map))))
    result = float(np.prod([value ** weight for value, weight in zip(values, weights)]))
    return min(1.0, max(0.0, result))


def _ssim_maps(xa: np.ndarray, xb: np.ndarray, window: np.ndarray) -> tuple:
    cs_maps, ssim_maps = [], []
    for pa, pb in zip(xa, xb):
        def filt(plane: np.ndarray) -> np.ndarray:
            return scipy.signal.convolve2d(plane, window, mode='valid')
        mu_a, mu_b = filt(pa), filt(pb)
        var_a = filt(pa * pa) - mu_a * mu_a
        var_b = filt(pb * pb) - mu_b * mu_b
        cov = filt(pa * pb) - mu_a * mu_b
        cs = (2 * cov + C2) / (var_a + var_b + C2)
        luminance = (2 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1)
        cs_maps.append(cs)
        ssim_maps.append(luminance * cs)
    return np.stack(cs_maps), np.stack(ssim_maps)


def _downsample(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    x = x[:, :h - h % 2, :w - w % 2]
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
