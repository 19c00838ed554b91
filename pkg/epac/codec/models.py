import dataclasses
import hashlib
from typing import Optional

import numpy as np

from epac.codec import networks
from epac.structs import configuration
from epac.structs import params


@dataclasses.dataclass(frozen=True, eq=False)
class CodecModel:
    """
    A complete codec: the parameters of both sides, the architecture, and λ.

    The model is immutable; the training and the online updating produce
    new models (see `with_params`), so a model can be shared between threads.
    """
    params: params.ParamSet
    architecture: networks.Architecture
    lmbda: float
    coding: configuration.CodingSettings = dataclasses.field(default_factory=configuration.CodingSettings)

    @property
    def lambda_intra(self) -> float:
        return self.lmbda * self.coding.lambda_intra_ratio

    @property
    def layers(self) -> networks.Layers:
        return networks.layers(self.architecture)

    @property
    def latent_max(self) -> int:
        return self.coding.latent_max

    def with_params(self, values: params.ParamSet) -> 'CodecModel':
        return dataclasses.replace(self, params=values)

    def decoder_params(self) -> params.ParamSet:
        """ Everything the decoder needs: the decoder side and the shared entropy models. """
        return self.params.sided(*params.DECODING_SIDES)

    def decoder_digest(self) -> str:
        return self.params.digest(*params.DECODING_SIDES)

    def model_hash(self) -> bytes:
        """
        The 8-byte identity of the decoder, as written into the bitstreams.

        The coding alphabet (the latent clamp) is a part of it: the same weights
        with another alphabet produce and expect other symbols.
        """
        seed = f'{self.decoder_digest()}/{self.latent_max}'.encode('ascii')
        return hashlib.sha256(seed).digest()[:8]

    def architecture_digest(self) -> str:
        return self.params.digest(values=False)


def create_model(
        lmbda: float,
        *,
        architecture: Optional[networks.Architecture] = None,
        coding: Optional[configuration.CodingSettings] = None,
        seed: int = 0,
        zero_final: bool = True,
) -> CodecModel:
    architecture = architecture if architecture is not None else networks.Architecture()
    rng = np.random.default_rng(seed)
    return CodecModel(
        params=networks.initial_params(architecture, rng, zero_final=zero_final),
        architecture=architecture,
        lmbda=float(lmbda),
        coding=coding if coding is not None else configuration.CodingSettings(),
    )
