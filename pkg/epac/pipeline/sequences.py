"""
Coding of whole sequences into the bitstreams, and back.

The frames are coded in their order: the I-frames at the GoP boundaries,
the P-frames (with the online updating of the chosen variant) in between,
each referencing the reconstruction of its predecessor, never the original.
The reconstructions reported by the encoder are exactly those the decoder
produces from the bitstream.
"""
import dataclasses
import logging
from typing import List, Optional, Sequence

import numpy as np
from typing_extensions import TypedDict

from epac.bitstream import containers
from epac.codec import coding
from epac.codec import models
from epac.engines import logging as lab_logging
from epac.metrics import quality
from epac.online import updating
from epac.online import variants
from epac.storage import files
from epac.structs import configuration
from epac.structs import frames

logger = logging.getLogger(__name__)


class FrameRecord(TypedDict):
    index: int
    frame_type: str
    psnr: float
    ms_ssim: Optional[float]
    bpp: float
    loss: float
    iterations: int


class SequenceStats(TypedDict):
    frames: int
    width: int
    height: int
    bytes: int
    bpp: float
    mean_psnr: float
    mean_ms_ssim: Optional[float]
    gop: int
    variant: str
    model_hash: str
    records: List[FrameRecord]
    telemetry: List[updating.OnlineTelemetry]


def is_intra(index: int, gop: int) -> bool:
    """ The I-frames: the first one, and every ``gop``-th (``gop=0`` is an open GoP). """
    return index == 0 or (gop > 0 and index % gop == 0)


def frame_ms_ssim(a: frames.FrameBuffer, b: frames.FrameBuffer, scales: int) -> Optional[float]:
    """ MS-SSIM if the frames are large enough for the scales, ``None`` otherwise. """
    if min(a.height, a.width) < quality.min_size(scales):
        return None
    return quality.ms_ssim(a, b, scales)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [value for value in values if value is not None]
    return float(np.mean(present)) if present and len(present) == len(values) else None


@dataclasses.dataclass(frozen=True, eq=False)
class EncodedSequence:
    bitstream: containers.Bitstream
    originals: Sequence[frames.FrameBuffer]
    reconstructions: Sequence[frames.FrameBuffer]
    records: Sequence[FrameRecord]
    telemetry: Sequence[updating.OnlineTelemetry]
    variant: variants.Variant
    scales: int = 3

    @property
    def data(self) -> bytes:
        return self.bitstream.to_bytes()

    def bpp(self) -> float:
        return self.bitstream.bpp()

    def stats(self) -> SequenceStats:
        """
        The summary as reported by the command line.

        The qualities are of the 8-bit reconstructions, as they are stored
        by the decoder, so that they can be re-measured from the decoded files.
        """
        stored = [frame.quantized() for frame in self.reconstructions]
        header = self.bitstream.header
        return SequenceStats(
            frames=header.frame_count,
            width=header.width,
            height=header.height,
            bytes=self.bitstream.size,
            bpp=self.bpp(),
            mean_psnr=float(np.mean([quality.psnr(x, y) for x, y in zip(self.originals, stored)])),
            mean_ms_ssim=_mean([frame_ms_ssim(x, y, self.scales) for x, y in zip(self.originals, stored)]),
            gop=header.gop,
            variant=self.variant.value,
            model_hash=header.model_hash.hex(),
            records=list(self.records),
            telemetry=list(self.telemetry),
        )


def encode_sequence(
        sequence: Sequence[frames.FrameBuffer],
        model: models.CodecModel,
        *,
        gop: Optional[int] = None,
        variant: Optional[variants.Variant] = None,
        settings: Optional[configuration.OnlineSettings] = None,
        path: Optional[files.PathLike] = None,
        provenance_checks: bool = False,
        clip: Optional[object] = None,
) -> EncodedSequence:
    """ Code the frames into a bitstream (stored if the path is given). """
    if not sequence:
        raise ValueError("Cannot encode an empty sequence.")
    settings = settings if settings is not None else configuration.OnlineSettings()
    variant = variants.Variant(variant if variant is not None else settings.variant)
    gop = model.coding.gop if gop is None else gop
    first = sequence[0]
    log = lab_logging.ContextLogger(logger, clip=clip, lmbda=model.lmbda, variant=variant.value)

    latents: List[containers.FrameLatents] = []
    reconstructions: List[frames.FrameBuffer] = []
    telemetry: List[updating.OnlineTelemetry] = []
    losses: List[float] = []
    iterations: List[int] = []
    for index, x in enumerate(sequence):
        frames.require_same_geometry(first, x)
        if is_intra(index, gop):
            intra = coding.encode_frame_i(x, model)
            latents.append((intra.latent,))
            reconstructions.append(intra.reconstruction)
            losses.append(intra.loss)
            iterations.append(0)
            if intra.clamps:
                log.at_frame(index).warning(f"Clamped {intra.clamps} intra latent values.")
        else:
            result = updating.online_update(x, reconstructions[-1], model, settings, index,
                                            variant=variant, provenance_checks=provenance_checks,
                                            log=log.at_frame(index))
            latents.append((result.motion, result.residual))
            reconstructions.append(result.reconstruction)
            losses.append(result.loss_best)
            iterations.append(result.iterations)
            telemetry.append(result.telemetry(index))
            if result.code.clamps:
                log.at_frame(index).warning(f"Clamped {result.code.clamps} latent values.")

    bitstream = containers.write_sequence(latents, model, width=first.width, height=first.height,
                                          gop=gop, path=path)
    scales = model.coding.ms_ssim_scales
    records = [
        FrameRecord(
            index=index,
            frame_type=chunk.frame_type.value,
            psnr=quality.psnr(x, y),
            ms_ssim=frame_ms_ssim(x, y, scales),
            bpp=quality.bits_per_pixel(chunk.size, first.width, first.height),
            loss=loss,
            iterations=count,
        )
        for index, (x, y, chunk, loss, count)
        in enumerate(zip(sequence, reconstructions, bitstream.chunks, losses, iterations))
    ]
    log.info(f"Encoded {len(sequence)} frames into {bitstream.size} bytes ({bitstream.bpp():.4f} bpp).")
    return EncodedSequence(bitstream=bitstream, originals=list(sequence), reconstructions=reconstructions,
                           records=records, telemetry=telemetry, variant=variant, scales=scales)


def decode_sequence(
        source: containers.Source,
        model: models.CodecModel,
) -> List[frames.FrameBuffer]:
    """ Decode a bitstream (bytes or a file) with the model it was coded for. """
    return containers.read_sequence(source, model)
