"""
Quantized cumulative frequency tables of the entropy models.

The bin probabilities of every channel are scaled to the total of ``2^16``
and floored; every symbol keeps at least the frequency of 1; the deficit
is distributed by the largest remainders (ties to the lower symbols),
and the excess (if the minimal frequencies overflow the total) is taken
from the most frequent symbols. The total is always exactly ``2^16``.
"""
import dataclasses
from typing import List

import numpy as np

from epac.codec import entropy

PRECISION = 16
TOTAL = 1 << PRECISION


@dataclasses.dataclass(frozen=True, eq=False)
class CdfTable:
    cumulative: np.ndarray
    """ ``[C, S + 1]`` integers: 0, then the running sums of the frequencies. """

    latent_max: int

    @property
    def channels(self) -> int:
        return int(self.cumulative.shape[0])

    @property
    def alphabet(self) -> int:
        return int(self.cumulative.shape[1]) - 1

    def frequencies(self, channel: int) -> np.ndarray:
        return np.diff(self.cumulative[channel])

    def rows(self) -> List[List[int]]:
        """ The tables as plain lists, for the symbol-by-symbol coding. """
        return [[int(value) for value in row] for row in self.cumulative]


def quantize_frequencies(probabilities: np.ndarray) -> np.ndarray:
    """ Integer frequencies summing to `TOTAL` exactly, each at least 1. """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.size > TOTAL:
        raise ValueError(f"An alphabet of {p.size} symbols does not fit the total of {TOTAL}.")
    scaled = p / p.sum() * TOTAL
    freqs = np.maximum(np.floor(scaled).astype(np.int64), 1)
    deficit = TOTAL - int(freqs.sum())
    if deficit > 0:
        remainders = scaled - np.floor(scaled)
        order = np.argsort(-remainders, kind='stable')
        freqs[order[:deficit]] += 1
    while deficit < 0:
        largest = int(np.argmax(freqs))
        take = min(-deficit, int(freqs[largest]) - 1)
        freqs[largest] -= take
        deficit += take
    return freqs


def build_cdf(em: entropy.EntropyModel) -> CdfTable:
    probabilities = em.probabilities()
    cumulative = np.zeros((em.channels, probabilities.shape[1] + 1), dtype=np.int64)
    for channel in range(em.channels):
        cumulative[channel, 1:] = np.cumsum(quantize_frequencies(probabilities[channel]))
    return CdfTable(cumulative=cumulative, latent_max=em.latent_max)


def coding_bits(symbols: np.ndarray, channels: np.ndarray, table: CdfTable) -> float:
    """ The ideal code length of the symbols under the quantized tables: ``Σ −log2 (f / 2^16)``. """
    freqs = np.diff(table.cumulative, axis=1)[channels, symbols]
    return float(np.sum(PRECISION - np.log2(freqs)))
