"""
Quantization of the latents, and the parametric entropy models of their rates.

Every latent channel ``c`` is modelled by a discretised logistic distribution
with a learnable location ``μ_c`` and scale ``s_c = softplus(raw_c) + 1e-6``.
The probability of an integer ``v`` is the mass of ``[v - 0.5, v + 0.5]``,
floored at ``p_min = 2^-16``, so that no symbol costs more than 16 bits
and the range coder never sees a zero-mass symbol.

The bin masses are computed on the side of the distribution where the logistic
CDF does not saturate (mirrored beyond the location), which keeps them exact
far in the tails.
"""
import dataclasses
import enum
import logging
from typing import Optional

import numpy as np
import scipy.special

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.structs import params

logger = logging.getLogger(__name__)

P_MIN_BITS = 16
P_MIN = 2.0 ** -P_MIN_BITS
SCALE_FLOOR = 1e-6


class Mode(str, enum.Enum):
    TRAIN = 'train'
    INFER = 'infer'


@dataclasses.dataclass
class Diagnostics:
    """ Counters of the coding events worth reporting (not affecting the results). """
    clamps: int = 0


@dataclasses.dataclass(frozen=True, eq=False)
class EntropyModel:
    loc: np.ndarray
    scale: np.ndarray
    latent_max: int = 64

    @classmethod
    def from_params(cls, values: params.ParamSet, kind: str, latent_max: int = 64) -> 'EntropyModel':
        raw = values[f'entropy.{kind}.raw_scale']
        return cls(
            loc=np.array(values[f'entropy.{kind}.loc']),
            scale=np.logaddexp(0.0, raw) + SCALE_FLOOR,
            latent_max=latent_max,
        )

    @property
    def channels(self) -> int:
        return int(self.loc.shape[0])

    def probabilities(self) -> np.ndarray:
        """ The floored masses of all integer bins: ``[C, 2·latent_max + 1]``. """
        support = np.arange(-self.latent_max, self.latent_max + 1, dtype=np.float64)
        values = np.broadcast_to(support, (self.channels, support.size))
        return bin_masses(values, self.loc[:, np.newaxis], self.scale[:, np.newaxis])


def bin_masses(values: np.ndarray, loc: np.ndarray, scale: np.ndarray) -> np.ndarray:
    sign = np.where(values > loc, -1.0, 1.0)
    upper = scipy.special.expit(sign * (values + 0.5 - loc) / scale)
    lower = scipy.special.expit(sign * (values - 0.5 - loc) / scale)
    return np.maximum(sign * (upper - lower), P_MIN)


def quantize(
        latent: graphs.Tensor,
        mode: Mode,
        rng: Optional[np.random.Generator] = None,
        *,
        latent_max: int = 64,
        diagnostics: Optional[Diagnostics] = None,
) -> graphs.Tensor:
    """
    Additive uniform noise in training; rounding and clamping at inference.

    The clamps are counted into the ``diagnostics`` and logged at DEBUG only:
    this runs in every training and online step. The coding pipeline reports
    the clamps of the coded frames at WARNING.

    The rounding is half away from zero. The inference result is a constant
    of the graph: nothing flows back through the hard quantization.
    """
    if mode == Mode.TRAIN:
        if rng is None:
            raise ValueError("The training-mode quantization needs a seeded noise source.")
        noise = rng.uniform(-0.5, 0.5, size=latent.shape)
        return latent + latent.graph.constant(noise)

    rounded = np.sign(latent.data) * np.floor(np.abs(latent.data) + 0.5)
    clamped = np.clip(rounded, -latent_max, latent_max)
    count = int(np.count_nonzero(clamped != rounded))
    if count:
        if diagnostics is not None:
            diagnostics.clamps += count
        logger.debug(f"Clamped {count} latent values to ±{latent_max}.")
    return latent.graph.constant(clamped)


def rate_estimate(
        latent: graphs.Tensor,
        loc: graphs.Tensor,
        raw_scale: graphs.Tensor,
) -> graphs.Tensor:
    """ The estimated bits of a latent: ``Σ −log2 P_c(v)``, differentiable. """
    if latent.data.ndim != 4 or latent.shape[1] != loc.shape[0]:
        raise graphs.PreconditionError(f"rate_estimate: shape mismatch at dimension 1: "
                                       f"latent {latent.shape} vs {loc.shape[0]} channels.")
    scale = ops.broadcast_channels(ops.softplus(raw_scale) + SCALE_FLOOR, latent.shape)
    centre = ops.broadcast_channels(loc, latent.shape)
    sign = latent.graph.constant(np.where(latent.data > centre.data, -1.0, 1.0))
    offset = latent - centre
    upper = ops.sigmoid(sign * (offset + 0.5) / scale)
    lower = ops.sigmoid(sign * (offset - 0.5) / scale)
    mass = ops.floor_at(sign * (upper - lower), P_MIN)
    return ops.reduce_sum(-ops.log2(mass))


def bits_map(latent: np.ndarray, model: EntropyModel) -> np.ndarray:
    """ The estimated bits per latent position, summed over the channels: ``[h, w]``. """
    values = np.asarray(latent, dtype=np.float64)[0]
    masses = bin_masses(values, model.loc[:, None, None], model.scale[:, None, None])
    return -np.log2(masses).sum(axis=0)
