"""
The online encoder updating of one P-frame.

Starting from the baseline (inference-mode) encoding of the frame and its loss
``L^0``, every iteration makes one Adam step on the training-mode loss
(the quantization replaced by the seeded uniform noise), and then evaluates
the updated encoder in the inference mode, exactly as the frame would be coded.
The best inference-mode candidate is kept, so the reported loss never exceeds
``L^0``. The loop stops after ``K`` iterations, or once two consecutive
inference-mode losses differ by less than ``ε = relative_tolerance · |L^0|``.

The latent-only variant (``lfu``) optimises the continuous latents of the
encoder instead of its parameters, with a straight-through rounding in the
steps and no noise; its candidates are the rounded latents.

The updates happen on a private copy of the values (the models are immutable),
with a fresh optimizer state per frame: nothing is carried to the next frame.
"""
import dataclasses
import logging
from typing import Optional, Tuple, Union

import numpy as np
from typing_extensions import TypedDict

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.autodiff import optimizers
from epac.codec import coding
from epac.codec import entropy
from epac.codec import models
from epac.engines import logging as lab_logging
from epac.online import variants
from epac.structs import configuration
from epac.structs import errors
from epac.structs import frames
from epac.structs import params

logger = logging.getLogger(__name__)

Variant = variants.Variant
Logger = Union[logging.Logger, logging.LoggerAdapter]


class DecoderMutationError(errors.ContractViolation):
    """ The decoder side or the entropy models changed during the online updating. """


class OnlineTelemetry(TypedDict):
    frame_index: int
    variant: str
    iterations: int
    loss_before: float
    loss_best: float
    bpp_before: float
    bpp_after: float
    prediction_psnr_before: float
    prediction_psnr_after: float
    best_iteration: int
    flagged: bool
    touched: int


@dataclasses.dataclass(frozen=True, eq=False)
class OnlineResult:
    code: coding.PFrameCode
    """ The best candidate: the latents to be coded, and the reconstruction. """

    baseline: coding.PFrameCode
    variant: Variant
    iterations: int
    trajectory: Tuple[float, ...]
    """ The inference-mode losses ``L^0 .. L^iterations``. """

    best_iteration: int
    flagged: bool = False
    """ A non-finite loss or gradient occurred; the baseline was reverted to. """

    updated: Tuple[str, ...] = ()
    """ The names of the optimised values (parameters, or the latents for ``lfu``). """

    touched: Tuple[str, ...] = ()
    """ The optimised values that actually changed by the last iteration. """

    @property
    def motion(self) -> coding.LatentBlock:
        return self.code.motion

    @property
    def residual(self) -> coding.LatentBlock:
        return self.code.residual

    @property
    def reconstruction(self) -> frames.FrameBuffer:
        return self.code.reconstruction

    @property
    def loss_before(self) -> float:
        return self.trajectory[0]

    @property
    def loss_best(self) -> float:
        return self.code.loss

    @property
    def improvement(self) -> float:
        return self.loss_before - self.loss_best

    def telemetry(self, frame_index: int) -> OnlineTelemetry:
        return OnlineTelemetry(
            frame_index=frame_index,
            variant=self.variant.value,
            iterations=self.iterations,
            loss_before=self.loss_before,
            loss_best=self.loss_best,
            bpp_before=self.baseline.stats['bpp_motion'] + self.baseline.stats['bpp_residual'],
            bpp_after=self.code.stats['bpp_motion'] + self.code.stats['bpp_residual'],
            prediction_psnr_before=self.baseline.stats['prediction_psnr'],
            prediction_psnr_after=self.code.stats['prediction_psnr'],
            best_iteration=self.best_iteration,
            flagged=self.flagged,
            touched=len(self.touched),
        )


def _constants(graph: graphs.Graph, x: frames.FrameBuffer, ref: frames.FrameBuffer
               ) -> Tuple[graphs.Tensor, graphs.Tensor]:
    return graph.constant(x.batch, x.provenance), graph.constant(ref.batch, ref.provenance)


def _param_step(
        x: frames.FrameBuffer, ref: frames.FrameBuffer, model: models.CodecModel,
        values: params.ParamSet, names: Tuple[str, ...],
        state: optimizers.AdamState, lr: float, rng: np.random.Generator,
) -> Tuple[params.ParamSet, optimizers.AdamState]:
    graph = graphs.Graph()
    bound = graphs.bind(graph, values, trainable=names)
    tx, tref = _constants(graph, x, ref)
    terms = coding.code_p_frame(bound, model, tx, tref, entropy.Mode.TRAIN, rng)
    if not np.isfinite(terms.loss.item()):
        raise errors.NonFiniteError("Non-finite training-mode loss", step=state.step + 1)
    grads = graphs.backward(graph, terms.loss)
    return optimizers.adam_step(values, grads, state, lr)


def _latent_step(
        x: frames.FrameBuffer, ref: frames.FrameBuffer, model: models.CodecModel,
        latents: params.ParamSet, state: optimizers.AdamState, lr: float,
) -> Tuple[params.ParamSet, optimizers.AdamState]:
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.params, trainable=())
    leaves = graphs.bind(graph, latents)
    tx, tref = _constants(graph, x, ref)
    motion = ops.round_ste(leaves[variants.LATENT_MOTION])
    residual = ops.round_ste(leaves[variants.LATENT_RESIDUAL])
    terms = coding.p_frame_from_latents(bound, model, tx, tref, motion, residual)
    if not np.isfinite(terms.loss.item()):
        raise errors.NonFiniteError("Non-finite latent loss", step=state.step + 1)
    grads = graphs.backward(graph, terms.loss)
    return optimizers.adam_step(latents, grads, state, lr)


def evaluate_latents(
        x: frames.FrameBuffer, ref: frames.FrameBuffer, model: models.CodecModel,
        latents: params.ParamSet,
) -> coding.PFrameCode:
    """ The inference-mode coding of a frame with the given (continuous) latents. """
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.params, trainable=())
    tx, tref = _constants(graph, x, ref)
    diagnostics = entropy.Diagnostics()
    motion = entropy.quantize(graph.constant(latents[variants.LATENT_MOTION]), entropy.Mode.INFER,
                              latent_max=model.latent_max, diagnostics=diagnostics)
    residual = entropy.quantize(graph.constant(latents[variants.LATENT_RESIDUAL]), entropy.Mode.INFER,
                                latent_max=model.latent_max, diagnostics=diagnostics)
    terms = coding.p_frame_from_latents(bound, model, tx, tref, motion, residual)
    return coding.p_frame_code(x, terms, diagnostics.clamps)


def online_update(
        x: frames.FrameBuffer,
        ref: frames.FrameBuffer,
        model: models.CodecModel,
        settings: Optional[configuration.OnlineSettings] = None,
        frame_index: int = 0,
        *,
        variant: Optional[Variant] = None,
        provenance_checks: bool = False,
        log: Optional[Logger] = None,
) -> OnlineResult:
    """
    Code one P-frame with the online updating of the chosen variant.

    The variant is the one of the settings unless given explicitly.
    The result's latents decode with the unchanged ``model``.

    The iterations are counted from 1; ``L^i`` is the inference-mode loss after
    the i-th step. The early stop is checked right after every ``L^i``, so a step
    that changes nothing ends the loop at i=1 with ``iterations == 1``.
    """
    settings = settings if settings is not None else configuration.OnlineSettings()
    variant = Variant(variant if variant is not None else settings.variant)
    log = log if log is not None else lab_logging.ContextLogger(logger, frame=frame_index,
                                                                variant=variant.value)
    frames.require_same_geometry(x, ref)
    if provenance_checks:
        coding.require_reconstructed(ref, f"frame #{frame_index}")

    baseline = coding.encode_frame_p(x, ref, model)
    names = variants.update_names(variant, model)
    trajectory = [baseline.loss]
    if variant is Variant.OFF:
        return OnlineResult(code=baseline, baseline=baseline, variant=variant, iterations=0,
                            trajectory=tuple(trajectory), best_iteration=0)

    tolerance = settings.relative_tolerance * abs(baseline.loss)
    initial: params.ParamSet
    if variant.updates_latents:
        # The continuous encoder outputs: their rounding is the baseline encoding.
        lr = settings.latent_learning_rate
        assert baseline.latents is not None
        motion_latent, residual_latent = baseline.latents
        initial = params.ParamSet(
            {variants.LATENT_MOTION: motion_latent, variants.LATENT_RESIDUAL: residual_latent},
            {name: params.Side.ENCODER for name in variants.LATENT_NAMES},
        )
    else:
        lr = settings.learning_rate
        initial = model.params

    values = initial
    state = optimizers.AdamState()
    best, best_iteration, flagged = baseline, 0, False
    for iteration in range(1, settings.max_iterations + 1):
        try:
            if variant.updates_latents:
                values, state = _latent_step(x, ref, model, values, state, lr)
                candidate = evaluate_latents(x, ref, model, values)
            else:
                rng = np.random.default_rng([settings.seed, frame_index, iteration])
                values, state = _param_step(x, ref, model, values, names, state, lr, rng)
                candidate = coding.encode_frame_p(x, ref, model.with_params(values))
            if not np.isfinite(candidate.loss):
                raise errors.NonFiniteError("Non-finite inference-mode loss", step=iteration)
        except errors.NonFiniteError as e:
            log.warning(f"Reverting to the baseline encoding: {e}")
            best, best_iteration, flagged = baseline, 0, True
            values = initial
            break

        trajectory.append(candidate.loss)
        if candidate.loss < best.loss:
            best, best_iteration = candidate, iteration
        if abs(trajectory[-1] - trajectory[-2]) < tolerance:
            break

    if not variant.updates_latents and model.with_params(values).decoder_digest() != model.decoder_digest():
        raise DecoderMutationError(f"The online updating ({variant.value}) changed the decoder.")

    touched = params.changed_names(initial, values, names)
    iterations = len(trajectory) - 1
    log.debug(f"Online updating: {iterations} iterations, L {baseline.loss:.6f} -> {best.loss:.6f} "
              f"(best at #{best_iteration}), {len(touched)} of {len(names)} values touched.")
    return OnlineResult(
        code=best,
        baseline=baseline,
        variant=variant,
        iterations=iterations,
        trajectory=tuple(trajectory),
        best_iteration=best_iteration,
        flagged=flagged,
        updated=names,
        touched=touched,
    )
