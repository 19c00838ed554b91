"""
The variants of the online updating: which values are optimised per frame.

* ``off`` -- nothing; the baseline encoding.
* ``lfu`` -- the latents of the frame themselves (the encoder is fixed).
* ``llu`` -- the last layers of the motion and the residual encoders.
* ``oeu`` -- the whole encoder of the P-frames: the flow net, the motion
  encoder, the residual encoder. The intra encoder is not involved in the
  P-frame coding, so it is not updated.

Only the encoder side is ever updated: the decoder and the entropy models
are shared with the decoders in the field and must stay bit-identical.
"""
import enum
from typing import Tuple

from epac.codec import models
from epac.codec import networks
from epac.structs import params

LATENT_MOTION = 'latent.motion'
LATENT_RESIDUAL = 'latent.residual'
LATENT_NAMES = (LATENT_MOTION, LATENT_RESIDUAL)

P_FRAME_ENCODERS = ('flow_net.', 'mv_encoder.', 'residual_encoder.')


class Variant(str, enum.Enum):
    OFF = 'off'
    LFU = 'lfu'
    LLU = 'llu'
    OEU = 'oeu'

    @property
    def updates_latents(self) -> bool:
        return self is Variant.LFU


def update_names(variant: Variant, model: models.CodecModel) -> Tuple[str, ...]:
    """ The names of the values to optimise: parameter names, or the latent names for LFU. """
    if variant is Variant.OFF:
        return ()
    elif variant is Variant.LFU:
        return LATENT_NAMES
    elif variant is Variant.LLU:
        return tuple(name for conv in networks.last_layers(model.architecture)
                     for name in (conv.weight, conv.bias))
    elif variant is Variant.OEU:
        return tuple(name for name in model.params.names(params.Side.ENCODER)
                     if name.startswith(P_FRAME_ENCODERS))
    else:
        raise ValueError(f"Unknown online variant: {variant!r}")
