"""
Coding of the individual frames: P-frames (motion + residual) and I-frames.

There are two levels here:

* the graph level (`code_p_frame`, `code_i_frame`, and their parts) works
  on tensors bound into a graph; it is used by the training and the online
  updating, which need the gradients;
* the frame level (`encode_frame_p`, `decode_frame_p`, etc.) works on frames
  and latent arrays; it is used by the pipelines and the command line.

The encoder computes its reconstruction with exactly the same functions
(`synthesize_p_frame`, `synthesize_i_frame`) that the decoder uses, with only
the decoder-side parameters bound for the decoder. Hence, the decoder
reproduces the encoder's reconstruction bit-exactly.
"""
import dataclasses
import enum
from typing import Optional, Tuple, Union

import numpy as np
from typing_extensions import TypedDict

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.codec import distortion
from epac.codec import entropy
from epac.codec import models
from epac.codec import networks
from epac.metrics import quality
from epac.structs import errors
from epac.structs import frames

Mode = entropy.Mode


class ProvenanceError(errors.ContractViolation):
    """ An original frame is used where only a reconstruction may be. """


class LatentKind(str, enum.Enum):
    MOTION = 'motion'
    RESIDUAL = 'residual'
    INTRA = 'intra'


@dataclasses.dataclass(frozen=True, eq=False)
class LatentBlock:
    values: np.ndarray
    kind: LatentKind

    @property
    def symbols(self) -> np.ndarray:
        """ The values as integers (only meaningful for the inference-mode latents). """
        return self.values.astype(np.int64)


class FrameStats(TypedDict):
    bpp_motion: float
    bpp_residual: float
    prediction_psnr: float
    final_psnr: float


@dataclasses.dataclass
class PFrameTerms:
    flow: Optional[graphs.Tensor]
    motion_latent: graphs.Tensor
    motion: graphs.Tensor
    prediction: graphs.Tensor
    residual_latent: graphs.Tensor
    residual: graphs.Tensor
    reconstruction: graphs.Tensor
    bits_motion: graphs.Tensor
    bits_residual: graphs.Tensor
    loss: graphs.Tensor


@dataclasses.dataclass
class IFrameTerms:
    latent: graphs.Tensor
    quantized: graphs.Tensor
    reconstruction: graphs.Tensor
    bits: graphs.Tensor
    loss: graphs.Tensor


@dataclasses.dataclass(frozen=True, eq=False)
class PFrameCode:
    motion: LatentBlock
    residual: LatentBlock
    prediction: frames.FrameBuffer
    reconstruction: frames.FrameBuffer
    loss: float
    bits_motion: float
    bits_residual: float
    stats: FrameStats
    clamps: int = 0

    latents: Optional[Tuple[np.ndarray, np.ndarray]] = None
    """ The continuous motion and residual latents before the quantization, if the encoder produced them. """


@dataclasses.dataclass(frozen=True, eq=False)
class IFrameCode:
    latent: LatentBlock
    reconstruction: frames.FrameBuffer
    loss: float
    bits: float
    clamps: int = 0


def require_reconstructed(ref: Union[graphs.Tensor, frames.FrameBuffer], where: str) -> None:
    if ref.provenance != frames.Provenance.RECONSTRUCTED:
        raise ProvenanceError(f"The reference of {where} is not a reconstruction "
                              f"(provenance: {ref.provenance}).")


#
# The graph level: tensors in, tensors out.
#

def estimate_flow(bound: graphs.Bound, model: models.CodecModel,
                  x: graphs.Tensor, ref: graphs.Tensor) -> graphs.Tensor:
    if x.shape != ref.shape:
        raise frames.FrameError(f"The frame and its reference differ: {x.shape} vs {ref.shape}.")
    return networks.flow_net(bound, model.layers, x, ref)


def encode_motion(
        bound: graphs.Bound, model: models.CodecModel, flow: graphs.Tensor,
        mode: Mode, rng: Optional[np.random.Generator] = None,
        diagnostics: Optional[entropy.Diagnostics] = None,
) -> Tuple[graphs.Tensor, graphs.Tensor]:
    """ The continuous and the quantized motion latents. """
    latent = networks.mv_encoder(bound, model.layers, flow)
    quantized = entropy.quantize(latent, mode, rng, latent_max=model.latent_max, diagnostics=diagnostics)
    return latent, quantized


def decode_motion(bound: graphs.Bound, model: models.CodecModel, motion: graphs.Tensor) -> graphs.Tensor:
    return networks.mv_decoder(bound, model.layers, motion)


def motion_compensate(bound: graphs.Bound, model: models.CodecModel,
                      ref: graphs.Tensor, flow: graphs.Tensor) -> graphs.Tensor:
    return networks.motion_comp(bound, model.layers, ref, flow)


def encode_residual(
        bound: graphs.Bound, model: models.CodecModel, residual: graphs.Tensor,
        mode: Mode, rng: Optional[np.random.Generator] = None,
        diagnostics: Optional[entropy.Diagnostics] = None,
) -> Tuple[graphs.Tensor, graphs.Tensor]:
    latent = networks.residual_encoder(bound, model.layers, residual)
    quantized = entropy.quantize(latent, mode, rng, latent_max=model.latent_max, diagnostics=diagnostics)
    return latent, quantized


def decode_residual(bound: graphs.Bound, model: models.CodecModel, residual: graphs.Tensor) -> graphs.Tensor:
    return networks.residual_decoder(bound, model.layers, residual)


def reconstruct(prediction: graphs.Tensor, residual: graphs.Tensor) -> graphs.Tensor:
    return ops.clamp01(prediction + residual)


def rate(bound: graphs.Bound, kind: str, latent: graphs.Tensor) -> graphs.Tensor:
    return entropy.rate_estimate(latent, bound[f'entropy.{kind}.loc'], bound[f'entropy.{kind}.raw_scale'])


def rd_loss(
        x: graphs.Tensor,
        x_hat: graphs.Tensor,
        bits_m: Union[graphs.Tensor, float],
        bits_y: Union[graphs.Tensor, float],
        lmbda: float,
        pixel_count: int,
        *,
        kind: str = 'mse',
        scales: int = 3,
) -> graphs.Tensor:
    """ ``L = λ·D + R``, with the rate in bits per pixel. """
    if lmbda <= 0:
        raise ValueError(f"λ must be positive, got {lmbda}.")
    term = distortion.distortion(x, x_hat, kind, scales)
    return ops.scalar_mul(term, lmbda) + (bits_m + bits_y) / float(pixel_count)


def synthesize_p_frame(
        bound: graphs.Bound, model: models.CodecModel, ref: graphs.Tensor,
        motion: graphs.Tensor, residual: graphs.Tensor,
) -> Tuple[graphs.Tensor, graphs.Tensor]:
    """ The decoder side of a P-frame: the prediction and the reconstruction. """
    flow = decode_motion(bound, model, motion)
    prediction = motion_compensate(bound, model, ref, flow)
    reconstruction = reconstruct(prediction, decode_residual(bound, model, residual))
    reconstruction.provenance = frames.Provenance.RECONSTRUCTED
    return prediction, reconstruction


def code_p_frame(
        bound: graphs.Bound, model: models.CodecModel, x: graphs.Tensor, ref: graphs.Tensor,
        mode: Mode, rng: Optional[np.random.Generator] = None,
        diagnostics: Optional[entropy.Diagnostics] = None,
) -> PFrameTerms:
    flow = estimate_flow(bound, model, x, ref)
    motion_latent, motion = encode_motion(bound, model, flow, mode, rng, diagnostics)
    prediction = motion_compensate(bound, model, ref, decode_motion(bound, model, motion))
    residual_latent, residual = encode_residual(bound, model, x - prediction, mode, rng, diagnostics)
    reconstruction = reconstruct(prediction, decode_residual(bound, model, residual))
    reconstruction.provenance = frames.Provenance.RECONSTRUCTED
    return _p_terms(bound, model, x, flow, motion_latent, motion, prediction,
                    residual_latent, residual, reconstruction)


def p_frame_from_latents(
        bound: graphs.Bound, model: models.CodecModel, x: graphs.Tensor, ref: graphs.Tensor,
        motion: graphs.Tensor, residual: graphs.Tensor,
) -> PFrameTerms:
    """ The terms of a P-frame with the latents given (not produced by the encoder). """
    prediction, reconstruction = synthesize_p_frame(bound, model, ref, motion, residual)
    return _p_terms(bound, model, x, None, motion, motion, prediction,
                    residual, residual, reconstruction)


def _p_terms(
        bound: graphs.Bound, model: models.CodecModel, x: graphs.Tensor,
        flow: Optional[graphs.Tensor], motion_latent: graphs.Tensor, motion: graphs.Tensor,
        prediction: graphs.Tensor, residual_latent: graphs.Tensor, residual: graphs.Tensor,
        reconstruction: graphs.Tensor,
) -> PFrameTerms:
    bits_motion = rate(bound, 'motion', motion)
    bits_residual = rate(bound, 'residual', residual)
    pixels = x.shape[2] * x.shape[3]
    loss = rd_loss(x, reconstruction, bits_motion, bits_residual, model.lmbda, pixels,
                   kind=model.coding.distortion, scales=model.coding.ms_ssim_scales)
    return PFrameTerms(
        flow=flow, motion_latent=motion_latent, motion=motion, prediction=prediction,
        residual_latent=residual_latent, residual=residual, reconstruction=reconstruction,
        bits_motion=bits_motion, bits_residual=bits_residual, loss=loss,
    )


def synthesize_i_frame(bound: graphs.Bound, model: models.CodecModel, latent: graphs.Tensor) -> graphs.Tensor:
    reconstruction = networks.intra_decoder(bound, model.layers, latent)
    reconstruction.provenance = frames.Provenance.RECONSTRUCTED
    return reconstruction


def code_i_frame(
        bound: graphs.Bound, model: models.CodecModel, x: graphs.Tensor,
        mode: Mode, rng: Optional[np.random.Generator] = None,
        diagnostics: Optional[entropy.Diagnostics] = None,
) -> IFrameTerms:
    latent = networks.intra_encoder(bound, model.layers, x)
    quantized = entropy.quantize(latent, mode, rng, latent_max=model.latent_max, diagnostics=diagnostics)
    reconstruction = synthesize_i_frame(bound, model, quantized)
    bits = rate(bound, 'intra', quantized)
    pixels = x.shape[2] * x.shape[3]
    loss = rd_loss(x, reconstruction, bits, 0.0, model.lambda_intra, pixels,
                   kind=model.coding.distortion, scales=model.coding.ms_ssim_scales)
    return IFrameTerms(latent=latent, quantized=quantized, reconstruction=reconstruction, bits=bits, loss=loss)


#
# The frame level: frames and latent arrays in, frames and latent arrays out.
#

def encode_frame_p(
        x: frames.FrameBuffer,
        ref: frames.FrameBuffer,
        model: models.CodecModel,
        mode: Mode = Mode.INFER,
        rng: Optional[np.random.Generator] = None,
) -> PFrameCode:
    frames.require_same_geometry(x, ref)
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.params, trainable=())
    diagnostics = entropy.Diagnostics()
    terms = code_p_frame(bound, model, graph.constant(x.batch, x.provenance),
                         graph.constant(ref.batch, ref.provenance), mode, rng, diagnostics)
    return p_frame_code(x, terms, diagnostics.clamps)


def p_frame_code(x: frames.FrameBuffer, terms: PFrameTerms, clamps: int = 0) -> PFrameCode:
    prediction = frames.FrameBuffer(terms.prediction.data[0])
    reconstruction = frames.reconstructed(terms.reconstruction.data[0])
    bits_motion, bits_residual = terms.bits_motion.item(), terms.bits_residual.item()
    stats = FrameStats(
        bpp_motion=bits_motion / x.pixels,
        bpp_residual=bits_residual / x.pixels,
        prediction_psnr=quality.psnr(x, prediction),
        final_psnr=quality.psnr(x, reconstruction),
    )
    latents: Optional[Tuple[np.ndarray, np.ndarray]] = None
    if terms.flow is not None:  # encoded, not given
        latents = (np.array(terms.motion_latent.data), np.array(terms.residual_latent.data))
    return PFrameCode(
        motion=LatentBlock(np.array(terms.motion.data), LatentKind.MOTION),
        residual=LatentBlock(np.array(terms.residual.data), LatentKind.RESIDUAL),
        prediction=prediction,
        reconstruction=reconstruction,
        loss=terms.loss.item(),
        bits_motion=bits_motion,
        bits_residual=bits_residual,
        stats=stats,
        clamps=clamps,
        latents=latents,
    )


def decode_frame_p(
        motion: LatentBlock,
        residual: LatentBlock,
        ref: frames.FrameBuffer,
        model: models.CodecModel,
) -> frames.FrameBuffer:
    """ Reconstruct a P-frame from its latents, with only the decoder side of the model. """
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.decoder_params(), trainable=())
    _, reconstruction = synthesize_p_frame(bound, model, graph.constant(ref.batch),
                                           graph.constant(motion.values), graph.constant(residual.values))
    return frames.reconstructed(reconstruction.data[0])


def encode_frame_i(
        x: frames.FrameBuffer,
        model: models.CodecModel,
        mode: Mode = Mode.INFER,
        rng: Optional[np.random.Generator] = None,
) -> IFrameCode:
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.params, trainable=())
    diagnostics = entropy.Diagnostics()
    terms = code_i_frame(bound, model, graph.constant(x.batch, x.provenance), mode, rng, diagnostics)
    return IFrameCode(
        latent=LatentBlock(np.array(terms.quantized.data), LatentKind.INTRA),
        reconstruction=frames.reconstructed(terms.reconstruction.data[0]),
        loss=terms.loss.item(),
        bits=terms.bits.item(),
        clamps=diagnostics.clamps,
    )


def decode_frame_i(latent: LatentBlock, model: models.CodecModel) -> frames.FrameBuffer:
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.decoder_params(), trainable=())
    reconstruction = synthesize_i_frame(bound, model, graph.constant(latent.values))
    return frames.reconstructed(reconstruction.data[0])


def bits_map(latent: LatentBlock, model: models.CodecModel) -> np.ndarray:
    """ Where the bits of a latent go: the estimated bits per latent position. """
    em = entropy.EntropyModel.from_params(model.params, latent.kind.value, model.latent_max)
    return entropy.bits_map(latent.values, em)
