import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import TypedDict

from epac.codec import coding
from epac.codec import models
from epac.online import updating
from epac.online import variants
from epac.structs import configuration
from epac.structs import frames

logger = logging.getLogger(__name__)

Pair = Tuple[frames.FrameBuffer, frames.FrameBuffer]


class VariantSummary(TypedDict):
    variant: str
    frames: int
    mean_loss: float
    mean_loss_before: float
    mean_bpp: float
    mean_psnr: float
    mean_iterations: float
    flagged: int


def reference_pairs(sequence: Sequence[frames.FrameBuffer], model: models.CodecModel,
                    count: Optional[int] = None) -> List[Pair]:
    """
    The P-frames of a clip with their references from the baseline coding chain.

    The first frame is intra-coded; every next frame is paired with the baseline
    reconstruction of its predecessor. All the variants are then compared on
    the same references, so the per-frame effects are not mixed with the chain's.
    """
    count = len(sequence) - 1 if count is None else min(count, len(sequence) - 1)
    pairs: List[Pair] = []
    ref = coding.encode_frame_i(sequence[0], model).reconstruction
    for x in sequence[1:count + 1]:
        pairs.append((x, ref))
        ref = coding.encode_frame_p(x, ref, model).reconstruction
    return pairs


def variant_comparison(
        pairs: Sequence[Pair],
        model: models.CodecModel,
        settings: Optional[configuration.OnlineSettings] = None,
        compared: Iterable[variants.Variant] = tuple(variants.Variant),
) -> Dict[variants.Variant, VariantSummary]:
    """ The mean per-frame loss, rate, quality, and effort of every variant on the same frames. """
    if not pairs:
        raise ValueError("Cannot compare the variants on no frames.")
    settings = settings if settings is not None else configuration.OnlineSettings()
    result: Dict[variants.Variant, VariantSummary] = {}
    for variant in compared:
        variant = variants.Variant(variant)
        outcomes = [updating.online_update(x, ref, model, settings, index, variant=variant)
                    for index, (x, ref) in enumerate(pairs)]
        result[variant] = VariantSummary(
            variant=variant.value,
            frames=len(outcomes),
            mean_loss=float(np.mean([o.loss_best for o in outcomes])),
            mean_loss_before=float(np.mean([o.loss_before for o in outcomes])),
            mean_bpp=float(np.mean([o.code.stats['bpp_motion'] + o.code.stats['bpp_residual']
                                    for o in outcomes])),
            mean_psnr=float(np.mean([o.code.stats['final_psnr'] for o in outcomes])),
            mean_iterations=float(np.mean([o.iterations for o in outcomes])),
            flagged=sum(1 for o in outcomes if o.flagged),
        )
        logger.info(f"Variant {variant.value}: mean L {result[variant]['mean_loss']:.6f} "
                    f"over {len(outcomes)} frames.")
    return result
