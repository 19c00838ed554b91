import numpy as np
import pytest

from epac.metrics import quality
from epac.metrics.quality import MetricError, ms_ssim, psnr
from epac.structs import frames


def direct_ms_ssim(a, b, scales):
    """ The published formula, window by window, with the direct (two-pass) moments. """
    window = quality.gaussian_window()
    size = window.shape[0]
    weights = np.array(quality.MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    result = 1.0
    for scale in range(scales):
        h, w = a.shape
        cs_values, ssim_values = [], []
        for y in range(h - size + 1):
            for x in range(w - size + 1):
                pa, pb = a[y:y + size, x:x + size], b[y:y + size, x:x + size]
                mu_a, mu_b = np.sum(window * pa), np.sum(window * pb)
                var_a = np.sum(window * (pa - mu_a) ** 2)
                var_b = np.sum(window * (pb - mu_b) ** 2)
                cov = np.sum(window * (pa - mu_a) * (pb - mu_b))
                cs = (2 * cov + quality.C2) / (var_a + var_b + quality.C2)
                lum = (2 * mu_a * mu_b + quality.C1) / (mu_a ** 2 + mu_b ** 2 + quality.C1)
                cs_values.append(cs)
                ssim_values.append(cs * lum)
        if scale < scales - 1:
            result *= max(0.0, float(np.mean(cs_values))) ** weights[scale]
            a = (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]) / 4
            b = (b[0::2, 0::2] + b[1::2, 0::2] + b[0::2, 1::2] + b[1::2, 1::2]) / 4
        else:
            result *= max(0.0, float(np.mean(ssim_values))) ** weights[scale]
    return result


@pytest.fixture()
def plane():
    rng = np.random.default_rng(0)
    return rng.uniform(0.2, 0.8, size=(1, 64, 64))


def test_identical_frames_are_capped():
    frame = frames.FrameBuffer(np.full((1, 8, 8), 0.3))
    assert psnr(frame, frame) == 100.0


@pytest.mark.parametrize('offset, expected', [(0.1, 20.0), (0.01, 40.0)], ids=['mse-1e-2', 'mse-1e-4'])
def test_analytic_cases(offset, expected):
    a = np.full((3, 8, 8), 0.5)
    b = a + offset
    assert psnr(a, b) == pytest.approx(expected, abs=1e-9)


def test_psnr_is_symmetric(plane):
    other = np.clip(plane + 0.05, 0.0, 1.0)
    assert psnr(plane, other) == psnr(other, plane)


def test_psnr_is_joint_over_the_channels():
    a = np.zeros((3, 4, 4))
    b = a.copy()
    b[0] = 0.1  # one channel of three: mse = 0.01 / 3
    assert psnr(a, b) == pytest.approx(10 * np.log10(300.0), abs=1e-9)


def test_geometry_mismatch():
    with pytest.raises(MetricError, match="geometries differ"):
        psnr(np.zeros((1, 8, 8)), np.zeros((1, 8, 16)))


def test_ms_ssim_of_identical_frames(plane):
    assert ms_ssim(plane, plane) == 1.0


def test_ms_ssim_degrades_with_noise(plane):
    rng = np.random.default_rng(1)
    noise = rng.normal(size=plane.shape)
    light = ms_ssim(plane, plane + 0.01 * noise)
    heavy = ms_ssim(plane, plane + 0.05 * noise)
    assert heavy < light < 1.0


def test_ms_ssim_matches_the_direct_formula(plane):
    rng = np.random.default_rng(2)
    other = np.clip(plane + rng.normal(0.0, 0.1, size=plane.shape), 0.0, 1.0)
    assert ms_ssim(plane, other, 3) == pytest.approx(direct_ms_ssim(plane[0], other[0], 3), abs=1e-6)


def test_ms_ssim_needs_large_enough_frames():
    assert quality.min_size(3) == 64
    assert quality.min_size(5) == 256
    with pytest.raises(MetricError, match="at least 64x64"):
        ms_ssim(np.zeros((1, 32, 64)), np.zeros((1, 32, 64)), 3)
    with pytest.raises(MetricError, match="scales"):
        ms_ssim(np.zeros((1, 64, 64)), np.zeros((1, 64, 64)), 6)


def test_weights_are_renormalized():
    assert quality.scale_weights(3).sum() == pytest.approx(1.0, abs=1e-12)
    assert quality.scale_weights(5) == pytest.approx(np.array(quality.MS_SSIM_WEIGHTS) / sum(quality.MS_SSIM_WEIGHTS))


def test_window_is_normalized():
    window = quality.gaussian_window()
    assert window.shape == (11, 11)
    assert window.sum() == pytest.approx(1.0, abs=1e-12)


def test_bits_per_pixel():
    assert quality.bits_per_pixel(100, 16, 16, 2) == 800 / 512
