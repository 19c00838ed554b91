"""
The held-out evaluation of the trained models: the inference-mode coding of
the clips with the I-frames at the GoP boundaries, as in the deployment.
The rates are those of the actual bitstreams.
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from epac.codec import models
from epac.data import datasets
from epac.online import variants
from epac.pipeline import sequences
from epac.structs import configuration
from epac.structs import frames

logger = logging.getLogger(__name__)

FrameRecord = sequences.FrameRecord


def evaluate_rollout(
        model: models.CodecModel,
        clip: Sequence[frames.FrameBuffer],
        length: Optional[int] = None,
        gop: Optional[int] = None,
        *,
        variant: variants.Variant = variants.Variant.OFF,
        settings: Optional[configuration.OnlineSettings] = None,
) -> List[FrameRecord]:
    """ The per-frame quality, rate, and loss of coding the first ``length`` frames of the clip. """
    length = len(clip) if length is None else length
    if not 1 <= length <= len(clip):
        raise ValueError(f"Cannot evaluate {length} frames of a {len(clip)}-frame clip.")
    encoded = sequences.encode_sequence(clip[:length], model, gop=gop, variant=variant, settings=settings)
    return list(encoded.records)


def evaluate_clips(
        model: models.CodecModel,
        clips: datasets.ClipSet,
        length: Optional[int] = None,
        gop: Optional[int] = None,
        *,
        variant: variants.Variant = variants.Variant.OFF,
        settings: Optional[configuration.OnlineSettings] = None,
) -> Dict[int, List[FrameRecord]]:
    return {
        clip_id: evaluate_rollout(model, clips.frames(clip_id), length, gop, variant=variant, settings=settings)
        for clip_id in clips.ids
    }


def held_out_loss(
        model: models.CodecModel,
        clips: datasets.ClipSet,
        length: Optional[int] = None,
        gop: Optional[int] = None,
        *,
        variant: variants.Variant = variants.Variant.OFF,
        settings: Optional[configuration.OnlineSettings] = None,
) -> float:
    """ The mean inference-mode loss of the P-frames (of all frames if there are none). """
    records = [record for per_clip in evaluate_clips(model, clips, length, gop, variant=variant,
                                                     settings=settings).values()
               for record in per_clip]
    inter = [record['loss'] for record in records if record['frame_type'] == 'P']
    return float(np.mean(inter if inter else [record['loss'] for record in records]))


def mean_trace(per_clip: Dict[int, List[FrameRecord]]) -> List[float]:
    """ The per-frame PSNR averaged over the clips (the clips must have equal lengths). """
    lengths = {len(records) for records in per_clip.values()}
    if len(lengths) != 1:
        raise ValueError(f"The traces have different lengths: {sorted(lengths)}")
    return [float(np.mean(column)) for column in zip(*([r['psnr'] for r in records]
                                                        for records in per_clip.values()))]


def psnr_decay(trace: Sequence[float], first: int = 1, last: Optional[int] = None) -> float:
    """ How much the PSNR drops from the frame ``first`` to the frame ``last`` (the last one by default). """
    last = len(trace) - 1 if last is None else last
    return float(trace[first] - trace[last])
