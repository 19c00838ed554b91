"""
The experiments of the lab: the ablation grid, the PSNR traces, and the sweeps.

The ablation grid codes every held-out clip with every model of the plan
(per model set and λ), at every GoP size, with every online variant.
Every such cell produces a real bitstream; the rates are those of the
bitstreams, the qualities are those of the reconstructions the decoder
would produce from them.

The cells run concurrently (see `scheduling`); the summaries, the RD curves,
and the BD tables are reduced in the fixed order of the cells.
"""
import dataclasses
import hashlib
import logging
import pathlib
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import TypedDict

from epac.codec import models
from epac.data import datasets
from epac.data import synthesis
from epac.harness import plans
from epac.harness import reports
from epac.harness import scheduling
from epac.metrics import bjontegaard
from epac.metrics import quality
from epac.online import updating
from epac.online import variants
from epac.pipeline import sequences
from epac.structs import configuration
from epac.structs import errors
from epac.training import evaluation
from epac.training import stages

logger = logging.getLogger(__name__)

ModelSets = Mapping[str, Mapping[int, models.CodecModel]]
RunKey = Tuple[str, int, variants.Variant]
""" A run without λ: the model set, the GoP size, the variant. One RD curve per run. """


@dataclasses.dataclass(frozen=True)
class Cell:
    model_set: str
    lmbda: int
    gop: int
    variant: variants.Variant
    clip_id: int

    @property
    def name(self) -> str:
        return f'{self.model_set}-l{self.lmbda}-g{self.gop}-{self.variant.value}-clip{self.clip_id:04d}'


class CellResult(TypedDict):
    model_set: str
    lmbda: int
    gop: int
    variant: str
    clip: int
    frames: int
    pixels: int
    bytes: int
    bpp: float
    mean_psnr: float
    mean_ms_ssim: Optional[float]
    mean_loss: float
    mean_p_loss: Optional[float]
    mean_iterations: float
    bitstream: Optional[str]
    bitstream_sha256: str
    records: List[sequences.FrameRecord]
    telemetry: List[updating.OnlineTelemetry]


class RunSummary(TypedDict):
    model_set: str
    lmbda: int
    gop: int
    variant: str
    clips: int
    frames: int
    bytes: int
    bpp: float
    mean_psnr: float
    mean_ms_ssim: Optional[float]
    mean_loss: float
    mean_p_loss: Optional[float]
    mean_iterations: float


class BDRow(TypedDict):
    model_set: str
    gop: int
    variant: str
    anchor: str
    bd_rate: Optional[float]
    bd_psnr: Optional[float]
    bd_rate_ms_ssim: Optional[float]
    error: Optional[str]


class TraceRow(TypedDict):
    frame_index: int
    frame_type: str
    psnr_baseline: float
    psnr_epa: float


class GopSweepRow(TypedDict):
    gop: int
    bd_rate: Optional[float]
    bd_psnr: Optional[float]
    baseline_curve: List[List[float]]
    epa_curve: List[List[float]]


class TSweepRow(TypedDict):
    unroll: int
    steps: int
    final_train_loss: float
    held_out_loss: float


GRID_COLUMNS = ('model_set', 'lmbda', 'gop', 'variant', 'clips', 'frames', 'bytes', 'bpp',
                'mean_psnr', 'mean_ms_ssim', 'mean_loss', 'mean_p_loss', 'mean_iterations')
BD_COLUMNS = ('model_set', 'gop', 'variant', 'anchor', 'bd_rate', 'bd_psnr', 'bd_rate_ms_ssim', 'error')
TRACE_COLUMNS = ('frame_index', 'frame_type', 'psnr_baseline', 'psnr_epa')
GOP_COLUMNS = ('gop', 'bd_rate', 'bd_psnr')
T_COLUMNS = ('unroll', 'steps', 'final_train_loss', 'held_out_loss')


def _mean_or_none(values: Sequence[Optional[float]]) -> Optional[float]:
    if not values or any(value is None for value in values):
        return None
    return float(np.mean([value for value in values if value is not None]))


def load_clips(path: pathlib.Path, split: str, limit: Optional[int] = None) -> datasets.ClipSet:
    clips = datasets.ClipSet.from_manifest(synthesis.load_manifest(path), split)
    if limit is not None:
        clips = clips.subset(clips.ids[:limit])
    if not len(clips):
        raise errors.DataError(f"The {split} split of {str(path)!r} has no clips.")
    return clips


def run_cell(
        cell: Cell,
        model_sets: ModelSets,
        clips: datasets.ClipSet,
        settings: configuration.LabSettings,
        *,
        frames: Optional[int] = None,
        directory: Optional[pathlib.Path] = None,
) -> CellResult:
    """ Code one clip with one model, GoP, and variant; store the bitstream if a directory is given. """
    model = model_sets[cell.model_set][cell.lmbda]
    sequence = clips.frames(cell.clip_id)[:frames]
    path = directory / f'{cell.name}.epab' if directory is not None else None
    encoded = sequences.encode_sequence(
        sequence, model, gop=cell.gop, variant=cell.variant, settings=settings.online, path=path,
        provenance_checks=settings.debugging.provenance_checks, clip=cell.clip_id,
    )
    stats = encoded.stats()
    inter = [record['loss'] for record in encoded.records if record['frame_type'] == 'P']
    return CellResult(
        model_set=cell.model_set,
        lmbda=cell.lmbda,
        gop=cell.gop,
        variant=cell.variant.value,
        clip=cell.clip_id,
        frames=stats['frames'],
        pixels=stats['width'] * stats['height'] * stats['frames'],
        bytes=stats['bytes'],
        bpp=stats['bpp'],
        mean_psnr=stats['mean_psnr'],
        mean_ms_ssim=stats['mean_ms_ssim'],
        mean_loss=float(np.mean([record['loss'] for record in encoded.records])),
        mean_p_loss=float(np.mean(inter)) if inter else None,
        mean_iterations=float(np.mean([t['iterations'] for t in encoded.telemetry])) if encoded.telemetry else 0.0,
        bitstream=path.name if path is not None else None,
        bitstream_sha256=hashlib.sha256(encoded.data).hexdigest(),
        records=list(encoded.records),
        telemetry=list(encoded.telemetry),
    )


def grid_cells(
        model_sets: ModelSets,
        clips: datasets.ClipSet,
        gops: Sequence[int],
        compared: Sequence[variants.Variant],
) -> List[Cell]:
    """ All the cells in their fixed order: model set, λ, GoP, variant, clip. """
    return [
        Cell(model_set=name, lmbda=lmbda, gop=gop, variant=variants.Variant(variant), clip_id=clip_id)
        for name in sorted(model_sets)
        for lmbda in sorted(model_sets[name])
        for gop in gops
        for variant in compared
        for clip_id in clips.ids
    ]


def run_grid(
        cells: Sequence[Cell],
        model_sets: ModelSets,
        clips: datasets.ClipSet,
        settings: configuration.LabSettings,
        *,
        frames: Optional[int] = None,
        directory: Optional[pathlib.Path] = None,
) -> List[CellResult]:
    def fn(cell: Cell) -> CellResult:
        return run_cell(cell, model_sets, clips, settings, frames=frames, directory=directory)
    logger.info(f"Running {len(cells)} cells with up to {settings.execution.max_workers or 'default'} workers.")
    return scheduling.run_cells_sync(cells, fn, settings)


def summarize(results: Sequence[CellResult]) -> List[RunSummary]:
    """
    The per-(model set, λ, GoP, variant) aggregates, in the order of the first appearance.

    The rate is of all the bitstreams together: ``8 · Σ bytes / Σ pixels``.
    """
    groups: Dict[Tuple[str, int, int, str], List[CellResult]] = {}
    for result in results:
        key = (result['model_set'], result['lmbda'], result['gop'], result['variant'])
        groups.setdefault(key, []).append(result)
    summaries: List[RunSummary] = []
    for (model_set, lmbda, gop, variant), group in groups.items():
        records = [record for result in group for record in result['records']]
        inter = [record['loss'] for record in records if record['frame_type'] == 'P']
        telemetry = [item for result in group for item in result['telemetry']]
        summaries.append(RunSummary(
            model_set=model_set,
            lmbda=lmbda,
            gop=gop,
            variant=variant,
            clips=len(group),
            frames=sum(result['frames'] for result in group),
            bytes=sum(result['bytes'] for result in group),
            bpp=8.0 * sum(result['bytes'] for result in group) / sum(result['pixels'] for result in group),
            mean_psnr=float(np.mean([result['mean_psnr'] for result in group])),
            mean_ms_ssim=_mean_or_none([result['mean_ms_ssim'] for result in group]),
            mean_loss=float(np.mean([record['loss'] for record in records])),
            mean_p_loss=float(np.mean(inter)) if inter else None,
            mean_iterations=float(np.mean([t['iterations'] for t in telemetry])) if telemetry else 0.0,
        ))
    return summaries


def rd_curves(summaries: Sequence[RunSummary]) -> Dict[RunKey, List[RunSummary]]:
    """ The summaries of every run across λ, ordered by the rate. """
    curves: Dict[RunKey, List[RunSummary]] = {}
    for summary in summaries:
        key = (summary['model_set'], summary['gop'], variants.Variant(summary['variant']))
        curves.setdefault(key, []).append(summary)
    return {key: sorted(points, key=lambda s: s['bpp']) for key, points in curves.items()}


def as_curve(points: Sequence[RunSummary], label: str = '') -> bjontegaard.RDCurve:
    return bjontegaard.RDCurve(label=label, points=tuple(
        quality.RDPoint(bpp=p['bpp'], psnr=p['mean_psnr'],
                        ms_ssim=p['mean_ms_ssim'] if p['mean_ms_ssim'] is not None else float('nan'))
        for p in points
    ))


def _curve_pairs(points: Sequence[RunSummary]) -> List[List[float]]:
    return [[p['bpp'], p['mean_psnr']] for p in points]


def _run_label(key: RunKey) -> str:
    model_set, gop, variant = key
    return f'{model_set}/{variant.value}@gop{gop}'


def bd_table(curves: Mapping[RunKey, Sequence[RunSummary]], anchor: Tuple[str, variants.Variant]) -> List[BDRow]:
    """ BD-rate and BD-PSNR of every run against the anchor run of the same GoP. """
    rows: List[BDRow] = []
    anchor_set, anchor_variant = anchor
    for key, points in curves.items():
        model_set, gop, variant = key
        anchor_key = (anchor_set, gop, anchor_variant)
        if anchor_key not in curves:
            continue
        bd_rate: Optional[float] = None
        bd_psnr: Optional[float] = None
        bd_rate_ms_ssim: Optional[float] = None
        problem: Optional[str] = None
        try:
            reference = as_curve(curves[anchor_key], _run_label(anchor_key))
            tested = as_curve(points, _run_label(key))
            bd_rate = bjontegaard.bd_rate(reference, tested)
            bd_psnr = bjontegaard.bd_psnr(reference, tested)
            try:
                bd_rate_ms_ssim = bjontegaard.bd_rate(reference, tested, metric='ms_ssim')
            except bjontegaard.CurveError:
                pass
        except bjontegaard.CurveError as e:
            problem = str(e)
            logger.warning(f"No BD values for {_run_label(key)}: {e}")
        rows.append(BDRow(model_set=model_set, gop=gop, variant=variant.value,
                          anchor=f'{anchor_set}/{anchor_variant.value}',
                          bd_rate=bd_rate, bd_psnr=bd_psnr, bd_rate_ms_ssim=bd_rate_ms_ssim, error=problem))
    return rows


def ablation_order(summaries: Sequence[RunSummary], lmbda: int, gop: int) -> Dict[str, float]:
    """ The mean held-out P-frame loss of every run at one λ and GoP, e.g. to check their ordering. """
    return {
        f"{s['model_set']}/{s['variant']}": float(s['mean_p_loss'] if s['mean_p_loss'] is not None else s['mean_loss'])
        for s in summaries if s['lmbda'] == lmbda and s['gop'] == gop
    }


def fig2_trace(
        baseline: models.CodecModel,
        epa: models.CodecModel,
        clips: datasets.ClipSet,
        *,
        gop: int = 50,
        frames: int = 50,
        settings: Optional[configuration.LabSettings] = None,
) -> List[TraceRow]:
    """
    The per-frame PSNR of both models, averaged over the clips.

    The frames are coded without the online updating, so that the traces show
    the error propagation of the models themselves.
    """
    settings = settings if settings is not None else configuration.LabSettings()
    if baseline.lmbda != epa.lmbda:
        raise errors.ConfigError(f"The traces need models of the same λ: {baseline.lmbda} vs {epa.lmbda}.")
    length = min([frames] + [clips.length(clip_id) for clip_id in clips.ids])

    cells = [(model, clip_id) for model in (baseline, epa) for clip_id in clips.ids]

    def fn(cell: Tuple[models.CodecModel, int]) -> List[evaluation.FrameRecord]:
        model, clip_id = cell
        return evaluation.evaluate_rollout(model, clips.frames(clip_id), length, gop,
                                           variant=variants.Variant.OFF, settings=settings.online)

    traces = scheduling.run_cells_sync(cells, fn, settings)
    per_model = len(clips.ids)
    base = evaluation.mean_trace(dict(enumerate(traces[:per_model])))
    improved = evaluation.mean_trace(dict(enumerate(traces[per_model:])))
    return [
        TraceRow(frame_index=index, frame_type=record['frame_type'],
                 psnr_baseline=base[index], psnr_epa=improved[index])
        for index, record in enumerate(traces[0])
    ]


def gop_sweep_from_summaries(
        summaries: Sequence[RunSummary],
        gops: Sequence[int],
        variant: variants.Variant = variants.Variant.OFF,
) -> List[GopSweepRow]:
    """ BD(EPA vs baseline) per GoP size, from the already coded grid. """
    curves = rd_curves(summaries)
    rows: List[GopSweepRow] = []
    for gop in gops:
        base_points = curves.get((plans.BASELINE, gop, variant), [])
        epa_points = curves.get((plans.EPA, gop, variant), [])
        bd_rate: Optional[float] = None
        bd_psnr: Optional[float] = None
        try:
            reference = as_curve(base_points, f'{plans.BASELINE}@gop{gop}')
            tested = as_curve(epa_points, f'{plans.EPA}@gop{gop}')
            bd_rate = bjontegaard.bd_rate(reference, tested)
            bd_psnr = bjontegaard.bd_psnr(reference, tested)
        except bjontegaard.CurveError as e:
            logger.warning(f"No BD values at GoP {gop}: {e}")
        rows.append(GopSweepRow(gop=gop, bd_rate=bd_rate, bd_psnr=bd_psnr,
                                baseline_curve=_curve_pairs(base_points), epa_curve=_curve_pairs(epa_points)))
    return rows


def gop_sweep(
        baseline: Mapping[int, models.CodecModel],
        epa: Mapping[int, models.CodecModel],
        clips: datasets.ClipSet,
        gops: Sequence[int] = plans.DEFAULT_GOPS,
        *,
        frames: Optional[int] = None,
        settings: Optional[configuration.LabSettings] = None,
) -> List[GopSweepRow]:
    """ Code the clips with both model sets (no online updating) at every GoP, and compare them. """
    settings = settings if settings is not None else configuration.LabSettings()
    model_sets = {plans.BASELINE: baseline, plans.EPA: epa}
    cells = grid_cells(model_sets, clips, gops, [variants.Variant.OFF])
    results = run_grid(cells, model_sets, clips, settings, frames=frames)
    return gop_sweep_from_summaries(summarize(results), gops)


def t_sweep(
        model: models.CodecModel,
        train_clips: datasets.ClipSet,
        test_clips: datasets.ClipSet,
        unrolls: Sequence[int] = plans.DEFAULT_UNROLLS,
        *,
        steps: Optional[int] = None,
        frames: Optional[int] = None,
        settings: Optional[configuration.LabSettings] = None,
) -> List[TSweepRow]:
    """
    Fine-tune the first-stage model once per unroll length, and evaluate each one.

    The held-out loss is the mean inference-mode P-frame loss of an open GoP,
    where the errors propagate through the whole clip.
    """
    settings = settings if settings is not None else configuration.LabSettings()
    rows: List[TSweepRow] = []
    for unroll in unrolls:
        training = dataclasses.replace(settings.training, unroll=unroll,
                                       stage2_steps=steps if steps is not None else settings.training.stage2_steps)
        result = stages.train_epa(model, train_clips, dataclasses.replace(settings, training=training))
        loss = evaluation.held_out_loss(result.model, test_clips, frames, 0,
                                        variant=variants.Variant.OFF, settings=settings.online)
        rows.append(TSweepRow(unroll=unroll, steps=training.stage2_steps,
                              final_train_loss=result.history[-1]['L'] if result.history else float('nan'),
                              held_out_loss=loss))
        logger.info(f"T={unroll}: held-out loss {loss:.6f}.")
    return rows


def ablate(
        plan: plans.ExperimentPlan,
        settings: Optional[configuration.LabSettings] = None,
        *,
        write: bool = True,
) -> List[reports.Report]:
    """
    Run all the experiments of the plan, and write their reports to its output.

    The bitstreams of the grid are kept in ``<output>/bitstreams/``,
    so every number of the reports can be recomputed from them.
    """
    settings = settings if settings is not None else configuration.LabSettings()
    settings = dataclasses.replace(settings, online=dataclasses.replace(settings.online, seed=plan.seed))
    model_sets = plans.load_models(plan)
    clips = load_clips(plan.test_set, 'test', plan.clips)
    inputs = {str(path): path for per_set in plan.checkpoints.values() for path in per_set.values()}
    provenance = reports.provenance(settings, plan.as_dict(), inputs=inputs)
    scales = settings.coding.ms_ssim_scales
    produced: List[reports.Report] = []
    summaries: Optional[List[RunSummary]] = None

    if plans.Experiment.GRID in plan.experiments:
        directory = plan.output / 'bitstreams' if write else None
        cells = grid_cells(model_sets, clips, plan.gops, plan.variants)
        results = run_grid(cells, model_sets, clips, settings, frames=plan.frames, directory=directory)
        summaries = summarize(results)
        bd_rows = bd_table(rd_curves(summaries), plan.anchor_run())
        produced.append(reports.Report(
            kind='grid',
            columns=GRID_COLUMNS,
            rows=summaries,
            extra={
                'bd': bd_rows,
                'cells': [dict(result, name=cell.name) for cell, result in zip(cells, results)],
            },
            provenance=dict(provenance, bitstreams={cell.name: result['bitstream_sha256']
                                                    for cell, result in zip(cells, results)}),
            scales=scales,
        ))
        produced.append(reports.Report(kind='bd', columns=BD_COLUMNS, rows=bd_rows,
                                       provenance=provenance, scales=scales))

    if plans.Experiment.FIG2 in plan.experiments:
        lmbda = sorted(set(plan.checkpoints[plans.BASELINE]) & set(plan.checkpoints[plans.EPA]))[0]
        rows = fig2_trace(model_sets[plans.BASELINE][lmbda], model_sets[plans.EPA][lmbda], clips,
                          gop=plan.trace_gop, frames=plan.trace_frames, settings=settings)
        produced.append(reports.Report(kind='fig2', columns=TRACE_COLUMNS, rows=rows,
                                       extra={'lambda': lmbda, 'gop': plan.trace_gop},
                                       provenance=provenance, scales=scales))

    if plans.Experiment.GOP_SWEEP in plan.experiments:
        if summaries is not None and variants.Variant.OFF in plan.variants:
            sweep = gop_sweep_from_summaries(summaries, plan.gops)
        else:
            sweep = gop_sweep(model_sets[plans.BASELINE], model_sets[plans.EPA], clips, plan.gops,
                              frames=plan.frames, settings=settings)
        produced.append(reports.Report(kind='gop_sweep', columns=GOP_COLUMNS, rows=sweep,
                                       provenance=provenance, scales=scales))

    if plans.Experiment.T_SWEEP in plan.experiments and plan.train_set is not None:
        baseline = model_sets[plans.BASELINE]
        lmbda = sorted(baseline)[0]
        train_clips = load_clips(plan.train_set, 'train')
        sweep_rows = t_sweep(baseline[lmbda], train_clips, clips, plan.unrolls,
                             steps=plan.sweep_steps, frames=plan.frames, settings=settings)
        produced.append(reports.Report(kind='t_sweep', columns=T_COLUMNS, rows=sweep_rows,
                                       extra={'lambda': lmbda}, provenance=provenance, scales=scales))

    if write:
        for report in produced:
            reports.write_report(report, plan.output)
    return produced
