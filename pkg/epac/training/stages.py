"""
The two training stages of the codec.

The first stage trains on the pairs of consecutive frames: the P-frame
loss (and the I-frame loss, to train the intra codec on the reference frames).
During the warm-up, the P-frames reference the previous original frame;
afterwards, the intra reconstruction of the previous frame, as in the coding.

The second stage fine-tunes on the unrolled chains of ``T`` P-frames
(see `rollouts`), with the intra codec frozen.

All randomness (the batches, the clips, the quantization noise) comes
from the generators seeded by the training seed and the step number,
so the identical runs produce identical histories and models.
"""
import dataclasses
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.autodiff import optimizers
from epac.codec import coding
from epac.codec import entropy
from epac.codec import models
from epac.codec import networks
from epac.data import datasets
from epac.storage import checkpoints
from epac.storage import files
from epac.structs import configuration
from epac.structs import errors
from epac.structs import frames
from epac.training import histories
from epac.training import rollouts

logger = logging.getLogger(__name__)


class NonFiniteLossError(errors.NonFiniteError):
    """ The training loss became NaN or infinite. """


@dataclasses.dataclass(frozen=True, eq=False)
class TrainingResult:
    model: models.CodecModel
    history: List[histories.HistoryRow]


@dataclasses.dataclass(frozen=True, eq=False)
class _ItemResult:
    clip_id: int
    loss: float
    distortion: float
    bits: float
    pixels: int
    grads: Dict[str, np.ndarray]


def single_frame_terms(
        bound: graphs.Bound,
        model: models.CodecModel,
        x: frames.FrameBuffer,
        prev: frames.FrameBuffer,
        *,
        warmup: bool,
        rng_p: np.random.Generator,
        rng_i: np.random.Generator,
) -> Tuple[coding.PFrameTerms, coding.IFrameTerms]:
    """ The P-frame terms of ``x`` and the I-frame terms of its predecessor. """
    graph = next(iter(bound.values())).graph
    tx = graph.constant(x.batch, x.provenance)
    tprev = graph.constant(prev.batch, prev.provenance)
    intra = coding.code_i_frame(bound, model, tprev, entropy.Mode.TRAIN, rng_i)
    if warmup:
        ref = tprev
    else:
        ref = ops.detach(coding.code_i_frame(bound, model, tprev, entropy.Mode.INFER).reconstruction)
    inter = coding.code_p_frame(bound, model, tx, ref, entropy.Mode.TRAIN, rng_p)
    return inter, intra


def _terms_summary(model: models.CodecModel, terms: Sequence[coding.PFrameTerms]) -> Tuple[float, float, int]:
    """ The mean distortion term and the mean bits of the P-frames, and their pixel count. """
    pixels = terms[0].reconstruction.shape[2] * terms[0].reconstruction.shape[3]
    bits = [t.bits_motion.item() + t.bits_residual.item() for t in terms]
    distortions = [(t.loss.item() - b / pixels) / model.lmbda for t, b in zip(terms, bits)]
    return float(np.mean(distortions)), float(np.mean(bits)), pixels


def _single_frame_item(
        model: models.CodecModel,
        clips: datasets.ClipSet,
        clip_id: int,
        index: int,
        warmup: bool,
        seed: int,
        step: int,
        item: int,
) -> _ItemResult:
    prev, x = clips.frames(clip_id, index - 1, 2)
    graph = graphs.Graph()
    bound = graphs.bind(graph, model.params)
    inter, intra = single_frame_terms(
        bound, model, x, prev, warmup=warmup,
        rng_p=np.random.default_rng([seed, step, item, 0]),
        rng_i=np.random.default_rng([seed, step, item, 1]),
    )
    loss = inter.loss + intra.loss
    if not np.isfinite(loss.item()):
        raise NonFiniteLossError("Non-finite loss in the single-frame stage",
                                 step=step, lmbda=model.lmbda, clip=clip_id)
    distortion, bits, pixels = _terms_summary(model, [inter])
    return _ItemResult(clip_id=clip_id, loss=loss.item(), distortion=distortion, bits=bits,
                       pixels=pixels, grads=graphs.backward(graph, loss))


def _update(
        model: models.CodecModel,
        grads: Dict[str, np.ndarray],
        state: optimizers.AdamState,
        settings: configuration.TrainingSettings,
        *,
        step: int,
        clip_id: int,
) -> Tuple[models.CodecModel, optimizers.AdamState]:
    clipped = optimizers.clip_grad_norm(grads, settings.clip_norm)
    try:
        values, state = optimizers.adam_step(model.params, clipped, state, settings.learning_rate)
    except optimizers.NonFiniteGradientError as e:
        raise NonFiniteLossError(f"Non-finite gradient: {e}", step=step, lmbda=model.lmbda, clip=clip_id) from e
    return model.with_params(values), state


def _checkpoint(
        path: Optional[files.PathLike],
        model: models.CodecModel,
        settings: configuration.TrainingSettings,
        *,
        stage: int,
        step: int,
        final: bool = False,
) -> None:
    interval = settings.checkpoint_interval
    if path is None or (not final and (not interval or step % interval != 0)):
        return
    checkpoints.save_model(path, model, {'stage': stage, 'step': step, 'seed': settings.seed,
                                         'unroll': settings.unroll if stage == 2 else None})
    logger.debug(f"Checkpointed the stage {stage} at step {step} to {path}.")


def _log_progress(stage: int, step: int, steps: int, row: histories.HistoryRow,
                  settings: configuration.TrainingSettings) -> None:
    if step % settings.log_interval == 0 or step == steps:
        logger.info(f"Stage {stage} step {step}/{steps}: L={row['L']:.6f} D={row['D']:.6f} "
                    f"bpp={row['bpp']:.4f}")


def train_single_frame(
        model: models.CodecModel,
        clips: datasets.ClipSet,
        settings: Optional[configuration.LabSettings] = None,
        *,
        checkpoint_path: Optional[files.PathLike] = None,
) -> TrainingResult:
    """ The first stage: Adam on the mean single-frame loss over the batches. """
    settings = settings if settings is not None else configuration.LabSettings()
    training = settings.training
    candidates = [clip_id for clip_id in clips.ids if clips.length(clip_id) >= 2]
    if not candidates:
        raise errors.DataError("The single-frame stage needs clips of at least 2 frames.")
    steps = training.stage1_steps
    warmup_steps = int(training.warmup_fraction * steps)
    executor = settings.execution.executor

    state = optimizers.AdamState()
    history: List[histories.HistoryRow] = []
    for step in range(1, steps + 1):
        rng = np.random.default_rng([training.seed, 0, step])
        picks = []
        for _ in range(training.batch_size):
            clip_id = candidates[int(rng.integers(len(candidates)))]
            picks.append((clip_id, int(rng.integers(1, clips.length(clip_id)))))
        warmup = step <= warmup_steps
        items = list(executor.map(
            _single_frame_item,
            [model] * len(picks), [clips] * len(picks),
            [clip_id for clip_id, _ in picks], [index for _, index in picks],
            [warmup] * len(picks), [training.seed] * len(picks),
            [step] * len(picks), list(range(len(picks))),
        ))

        # Reduced in the item order, whatever the order of completion.
        grads = {name: np.zeros_like(value) for name, value in model.params.items()}
        for item in items:
            for name, grad in item.grads.items():
                grads[name] = grads[name] + grad
        grads = {name: grad / len(items) for name, grad in grads.items()}
        model, state = _update(model, grads, state, training, step=step, clip_id=items[0].clip_id)

        bits = float(np.mean([item.bits for item in items]))
        row = histories.HistoryRow(
            step=step,
            L=float(np.mean([item.loss for item in items])),
            D=float(np.mean([item.distortion for item in items])),
            R=bits,
            bpp=bits / items[0].pixels,
        )
        history.append(row)
        _log_progress(1, step, steps, row, training)
        _checkpoint(checkpoint_path, model, training, stage=1, step=step)

    _checkpoint(checkpoint_path, model, training, stage=1, step=steps, final=True)
    return TrainingResult(model=model, history=history)


def epa_trainable(model: models.CodecModel) -> Tuple[str, ...]:
    """ Everything except the intra codec (its encoder, decoder, and entropy model). """
    return tuple(name for name in model.params if not networks.is_intra(name))


def train_epa(
        model: models.CodecModel,
        clips: datasets.ClipSet,
        settings: Optional[configuration.LabSettings] = None,
        *,
        checkpoint_path: Optional[files.PathLike] = None,
) -> TrainingResult:
    """ The second stage: Adam on the mean loss of the unrolled ``T``-frame chains. """
    settings = settings if settings is not None else configuration.LabSettings()
    training = settings.training
    length = training.unroll
    if length < 2:
        raise errors.ConfigError(f"The error-propagation-aware stage needs T >= 2, got {length}.")
    candidates = [clip_id for clip_id in clips.ids if clips.length(clip_id) >= length + 1]
    if not candidates:
        raise errors.DataError(f"The unrolled stage needs clips of at least {length + 1} frames.")
    trainable = epa_trainable(model)
    steps = training.stage2_steps

    state = optimizers.AdamState()
    history: List[histories.HistoryRow] = []
    for step in range(1, steps + 1):
        rng = np.random.default_rng([training.seed, 1, step])
        clip_id = candidates[int(rng.integers(len(candidates)))]
        start = int(rng.integers(0, clips.length(clip_id) - length))
        clip = clips.frames(clip_id, start, length + 1)

        graph = graphs.Graph()
        bound = graphs.bind(graph, model.params, trainable=trainable)
        rollout = rollouts.unroll(bound, model, clip, length, np.random.default_rng([training.seed, 2, step]),
                                  provenance_checks=settings.debugging.provenance_checks)
        loss = rollout.loss.item()
        if not np.isfinite(loss):
            raise NonFiniteLossError("Non-finite loss in the unrolled stage",
                                     step=step, lmbda=model.lmbda, clip=clip_id)
        grads = graphs.backward(graph, rollout.loss)
        model, state = _update(model, grads, state, training, step=step, clip_id=clip_id)

        distortion, bits, pixels = _terms_summary(model, [s.terms for s in rollout.steps])
        row = histories.HistoryRow(step=step, L=loss, D=distortion, R=bits, bpp=bits / pixels)
        history.append(row)
        _log_progress(2, step, steps, row, training)
        _checkpoint(checkpoint_path, model, training, stage=2, step=step)

    _checkpoint(checkpoint_path, model, training, stage=2, step=steps, final=True)
    return TrainingResult(model=model, history=history)
