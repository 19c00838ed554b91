import csv
import io
from typing import Iterable, List, Sequence

import numpy as np
from typing_extensions import TypedDict

from epac.storage import files

COLUMNS = ('step', 'L', 'D', 'R', 'bpp')


class HistoryRow(TypedDict):
    step: int
    L: float
    """ The loss of the step (the batch mean, or the rollout mean). """

    D: float
    """ The distortion term of the P-frames (MSE, or 1 − MS-SSIM). """

    R: float
    """ The estimated bits per P-frame (motion + residual). """

    bpp: float


def format_history(rows: Iterable[HistoryRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(COLUMNS)
    for row in rows:
        values = (row['L'], row['D'], row['R'], row['bpp'])
        writer.writerow([str(row['step'])] + [repr(float(value)) for value in values])
    return buffer.getvalue()


def write_history(path: files.PathLike, rows: Iterable[HistoryRow]) -> None:
    files.write_atomic(path, format_history(rows).encode('utf-8'))


def smoothed(losses: Sequence[float], window: int = 50) -> List[float]:
    """ The trailing moving average of the losses (shorter windows at the start). """
    values = np.asarray(losses, dtype=np.float64)
    sums = np.concatenate([[0.0], np.cumsum(values)])
    result = []
    for index in range(len(values)):
        start = max(0, index + 1 - window)
        result.append(float((sums[index + 1] - sums[start]) / (index + 1 - start)))
    return result
