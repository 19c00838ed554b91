"""
The Bjøntegaard comparison of two rate-distortion curves.

Both metrics fit a cubic polynomial to each curve and average the difference
of the two fits over the overlap of the curves, with the exact integrals of
the polynomials:

* BD-rate: ``log10(rate)`` as a function of the quality, averaged over the
  common quality range; reported as ``(10^Δ − 1)·100`` percent, so negative
  values are the rate savings of the test curve;
* BD-PSNR: the quality as a function of ``log10(rate)``, averaged over the
  common rate range; in dB (or in the units of the chosen quality metric).
"""
import csv
import dataclasses
import logging
import pathlib
from typing import List, Sequence, Tuple

import numpy as np

from epac.metrics import quality
from epac.storage import files
from epac.structs import errors

logger = logging.getLogger(__name__)

MIN_POINTS = 4
DEGREE = 3
METRICS = ('psnr', 'ms_ssim')


class CurveError(errors.DataError):
    """ The curves cannot be compared: too few points, unordered, or not overlapping. """


@dataclasses.dataclass(frozen=True)
class RDCurve:
    points: Tuple[quality.RDPoint, ...]
    label: str = ''

    def __post_init__(self) -> None:
        if len(self.points) < MIN_POINTS:
            raise CurveError(f"An RD curve needs at least {MIN_POINTS} points, got {len(self.points)}.")
        rates = [point.bpp for point in self.points]
        if any(rate <= 0 or not np.isfinite(rate) for rate in rates):
            raise CurveError(f"The rates must be positive and finite: {rates}")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise CurveError(f"The rates must be strictly increasing: {rates}")
        for metric in METRICS:
            values = self.values(metric)
            if np.all(np.isfinite(values)) and np.any(np.diff(values) < 0):
                logger.warning(f"The {metric} of the curve {self.label!r} decreases with the rate: "
                               f"{list(values)}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[float, float]], label: str = '') -> 'RDCurve':
        return cls(points=tuple(quality.RDPoint(bpp=float(r), psnr=float(q)) for r, q in pairs), label=label)

    def rates(self) -> np.ndarray:
        return np.array([point.bpp for point in self.points])

    def values(self, metric: str = 'psnr') -> np.ndarray:
        if metric not in METRICS:
            raise CurveError(f"Unknown quality metric {metric!r}; use one of {METRICS}.")
        return np.array([getattr(point, metric) for point in self.points], dtype=np.float64)


def _fit(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.polyfit(x, y, DEGREE)


def _mean_over(poly: np.ndarray, low: float, high: float) -> float:
    integral = np.polyint(poly)
    return float((np.polyval(integral, high) - np.polyval(integral, low)) / (high - low))


def _overlap(a: np.ndarray, b: np.ndarray, what: str) -> Tuple[float, float]:
    low, high = max(a.min(), b.min()), min(a.max(), b.max())
    if not low < high:
        raise CurveError(f"The {what} ranges of the curves do not overlap: "
                         f"[{a.min()}, {a.max()}] vs [{b.min()}, {b.max()}].")
    return float(low), float(high)


def _checked(curve: RDCurve, metric: str) -> np.ndarray:
    values = curve.values(metric)
    if not np.all(np.isfinite(values)):
        raise CurveError(f"The curve {curve.label!r} has no {metric} values.")
    return values


def bd_rate(anchor: RDCurve, test: RDCurve, metric: str = 'psnr') -> float:
    """ The average rate difference of the test curve at equal quality, in percent. """
    qa, qt = _checked(anchor, metric), _checked(test, metric)
    ra, rt = np.log10(anchor.rates()), np.log10(test.rates())
    low, high = _overlap(qa, qt, metric)
    delta = _mean_over(_fit(qt, rt), low, high) - _mean_over(_fit(qa, ra), low, high)
    return float((10.0 ** delta - 1.0) * 100.0)


def bd_psnr(anchor: RDCurve, test: RDCurve, metric: str = 'psnr') -> float:
    """ The average quality difference of the test curve at equal rate. """
    qa, qt = _checked(anchor, metric), _checked(test, metric)
    ra, rt = np.log10(anchor.rates()), np.log10(test.rates())
    low, high = _overlap(ra, rt, 'rate')
    return _mean_over(_fit(rt, qt), low, high) - _mean_over(_fit(ra, qa), low, high)


def load_curve(path: files.PathLike) -> RDCurve:
    """ A curve from a CSV file with the columns ``bpp``, ``psnr``, and optionally ``ms_ssim``. """
    path = pathlib.Path(path)
    try:
        with open(path, 'rt', encoding='utf-8', newline='') as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise CurveError(f"Cannot read the curve {str(path)!r}: {e}") from e
    points: List[quality.RDPoint] = []
    try:
        for row in rows:
            ms_ssim = row.get('ms_ssim')
            points.append(quality.RDPoint(
                bpp=float(row['bpp']),
                psnr=float(row['psnr']),
                ms_ssim=float(ms_ssim) if ms_ssim not in (None, '') else float('nan'),
            ))
    except (KeyError, TypeError, ValueError) as e:
        raise CurveError(f"The curve {str(path)!r} needs numeric bpp and psnr columns: {e}") from e
    return RDCurve(points=tuple(sorted(points, key=lambda point: point.bpp)), label=path.stem)


def format_curve(curve: RDCurve) -> str:
    lines = ['bpp,psnr,ms_ssim']
    for point in curve.points:
        lines.append(f'{point.bpp!r},{point.psnr!r},{point.ms_ssim!r}')
    return '\n'.join(lines) + '\n'
