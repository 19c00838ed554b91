import dataclasses
import functools
import json
import pathlib
import sys
from typing import Any, Callable, List, NoReturn, Optional

import click
import numpy as np

from epac.codec import models
from epac.data import datasets
from epac.data import rawvideo
from epac.data import synthesis
from epac.engines import logging
from epac.harness import experiments
from epac.harness import plans
from epac.harness import reports
from epac.metrics import bjontegaard
from epac.metrics import quality
from epac.online import variants
from epac.pipeline import sequences
from epac.storage import checkpoints
from epac.storage import files
from epac.structs import configuration
from epac.structs import errors
from epac.training import histories
from epac.training import stages

EXIT_DATA_ERROR = 3
EXIT_CONTRACT_VIOLATION = 4


@dataclasses.dataclass()
class CLIControls:
    """ The controls which are impossible to pass via CLI (e.g. in the tests). """
    settings: Optional[configuration.LabSettings] = None


def logging_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    """ A decorator to configure logging in all command in the same way."""
    @click.option('-v', '--verbose', is_flag=True)
    @click.option('-d', '--debug', is_flag=True)
    @click.option('-q', '--quiet', is_flag=True)
    @functools.wraps(fn)  # to preserve other opts/args
    def wrapper(verbose: bool, quiet: bool, debug: bool, *args: Any, **kwargs: Any) -> Any:
        logging.configure(debug=debug, verbose=verbose, quiet=quiet)
        return fn(*args, **kwargs)

    return wrapper


def settings_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    """ A decorator to load the settings in all commands in the same way, as ``settings=``. """
    @click.option('-c', '--config', type=click.Path(exists=True, dir_okay=False), default=None)
    @click.option('-w', '--workers', type=click.IntRange(min=1), default=None)
    @click.make_pass_decorator(CLIControls, ensure=True)
    @functools.wraps(fn)  # to preserve other opts/args
    def wrapper(__controls: CLIControls, config: Optional[str], workers: Optional[int],
                *args: Any, **kwargs: Any) -> Any:
        try:
            settings = __controls.settings if __controls.settings is not None else configuration.load_settings(config)
        except errors.LabError as e:
            _report_and_exit(e)
        if workers is not None:
            settings.execution.max_workers = workers
        return fn(*args, settings=settings, **kwargs)

    return wrapper


def _report_and_exit(e: errors.LabError) -> NoReturn:
    code = EXIT_CONTRACT_VIOLATION if isinstance(e, errors.ContractViolation) else EXIT_DATA_ERROR
    message = ' '.join(str(e).split())
    click.echo(f"error: {type(e).__name__}: {message}", err=True)
    sys.exit(code)


def reporting_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """
    A decorator to report the lab's errors as one machine-parsable line.

    The line is ``error: <kind>: <message>`` on stderr; the exit code is 3
    for the data errors and 4 for the contract violations. The usage errors
    are reported by click itself (exit code 2).
    """
    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except errors.LabError as e:
            _report_and_exit(e)

    return wrapper


def _echo_json(payload: Any) -> None:
    click.echo(json.dumps(payload, sort_keys=True))


def _replace_given(group: Any, **overrides: Any) -> Any:
    return dataclasses.replace(group, **{key: val for key, val in overrides.items() if val is not None})


@click.version_option(prog_name='epac')
@click.group(name='epac', context_settings=dict(
    auto_envvar_prefix='EPAC',
))
def main() -> None:
    pass


@main.command()
@logging_options
@settings_options
@click.option('-n', '--clips', type=click.IntRange(min=1), default=None)
@click.option('--held-out', type=click.IntRange(min=0), default=None)
@click.option('--frames', type=click.IntRange(min=1), default=None)
@click.option('--width', type=int, default=None)
@click.option('--height', type=int, default=None)
@click.option('--channels', type=click.Choice(['1', '3']), default=None)
@click.option('--texture', type=click.Choice([t.value for t in synthesis.Texture]), default=None)
@click.option('--max-motion', type=float, default=None)
@click.option('--noise', type=float, default=None)
@click.option('--seed', type=int, default=None)
@click.argument('directory', type=click.Path(file_okay=False))
@reporting_errors
def synth(
        settings: configuration.LabSettings,
        directory: str,
        clips: Optional[int],
        held_out: Optional[int],
        frames: Optional[int],
        width: Optional[int],
        height: Optional[int],
        channels: Optional[str],
        texture: Optional[str],
        max_motion: Optional[float],
        noise: Optional[float],
        seed: Optional[int],
) -> None:
    """ Render a synthetic dataset with its train/test manifest. """
    settings.synthesis = _replace_given(
        settings.synthesis, clips=clips, held_out=held_out, frames=frames, width=width, height=height,
        channels=int(channels) if channels is not None else None,
        max_motion=max_motion, noise=noise, seed=seed,
    )
    configuration.validate_settings(settings)
    try:
        spec = dataclasses.replace(synthesis.SynthSpec.from_settings(settings.synthesis),
                                   texture=synthesis.Texture(texture) if texture is not None else None)
    except ValueError as e:
        raise errors.ConfigError(str(e)) from e
    manifest = synthesis.synth_dataset(spec, settings.synthesis.clips, directory,
                                       held_out=settings.synthesis.held_out,
                                       executor=settings.execution.executor)
    _echo_json({'directory': str(directory), 'clips': len(manifest.clips),
                'train': len(manifest.train), 'test': len(manifest.test)})


@main.command()
@logging_options
@settings_options
@click.option('-l', '--lambda', 'lmbda', type=click.Choice([str(v) for v in configuration.LAMBDAS]), default=None)
@click.option('-s', '--stage', type=click.Choice(['1', '2', 'both']), default='both')
@click.option('-i', '--init', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--stage1-steps', type=click.IntRange(min=1), default=None)
@click.option('--stage2-steps', type=click.IntRange(min=1), default=None)
@click.option('-T', '--unroll', type=int, default=None)
@click.option('--seed', type=int, default=None)
@click.argument('data', type=click.Path(exists=True))
@click.argument('output', type=click.Path(dir_okay=False))
@reporting_errors
def train(
        settings: configuration.LabSettings,
        data: str,
        output: str,
        lmbda: Optional[str],
        stage: str,
        init: Optional[str],
        stage1_steps: Optional[int],
        stage2_steps: Optional[int],
        unroll: Optional[int],
        seed: Optional[int],
) -> None:
    """
    Train a model on the train split of a dataset.

    The loss histories are stored next to the checkpoint,
    as ``<output>.stage1.csv`` and ``<output>.stage2.csv``.
    """
    settings.training = _replace_given(
        settings.training, lmbda=int(lmbda) if lmbda is not None else None,
        stage1_steps=stage1_steps, stage2_steps=stage2_steps, unroll=unroll, seed=seed,
    )
    configuration.validate_settings(settings)
    if stage == '2' and init is None:
        raise click.UsageError("The second stage fine-tunes a model: use --init with a first-stage checkpoint.")

    if init is not None:
        model = checkpoints.load_model(init)
        if lmbda is not None and int(lmbda) != int(model.lmbda):
            raise errors.ConfigError(f"The initial model is of λ={model.lmbda}, not {lmbda}.")
        settings.training = dataclasses.replace(settings.training, lmbda=model.lmbda)
    else:
        model = models.create_model(settings.training.lmbda, coding=settings.coding, seed=settings.training.seed)

    clips = datasets.ClipSet.from_manifest(synthesis.load_manifest(data), 'train')
    produced: List[str] = []
    if stage in ('1', 'both'):
        result = stages.train_single_frame(model, clips, settings, checkpoint_path=output)
        histories.write_history(f'{output}.stage1.csv', result.history)
        model = result.model
        produced.append(f'{output}.stage1.csv')
    if stage in ('2', 'both'):
        result = stages.train_epa(model, clips, settings, checkpoint_path=output)
        histories.write_history(f'{output}.stage2.csv', result.history)
        model = result.model
        produced.append(f'{output}.stage2.csv')
    _echo_json({'checkpoint': output, 'lambda': model.lmbda, 'histories': produced,
                'architecture_hash': model.architecture_digest(), 'decoder_hash': model.decoder_digest()})


@main.command()
@logging_options
@settings_options
@click.option('-g', '--gop', type=click.IntRange(min=0, max=0xFFFF), default=None)
@click.option('--variant', type=click.Choice([v.value for v in variants.Variant]), default=None)
@click.option('--frames', type=click.IntRange(min=1), default=None)
@click.option('--stats', type=click.Path(dir_okay=False), default=None)
@click.argument('checkpoint', type=click.Path(exists=True, dir_okay=False))
@click.argument('clip', type=click.Path(exists=True, dir_okay=False))
@click.argument('output', type=click.Path(dir_okay=False))
@reporting_errors
def encode(
        settings: configuration.LabSettings,
        checkpoint: str,
        clip: str,
        output: str,
        gop: Optional[int],
        variant: Optional[str],
        frames: Optional[int],
        stats: Optional[str],
) -> None:
    """ Encode a raw clip into a bitstream; the stats go to ``<output>.stats.json``. """
    model = checkpoints.load_model(checkpoint)
    sequence = rawvideo.load_raw(clip)[:frames]
    encoded = sequences.encode_sequence(
        sequence, model,
        gop=gop,
        variant=variants.Variant(variant) if variant is not None else None,
        settings=settings.online,
        path=output,
        provenance_checks=settings.debugging.provenance_checks,
        clip=pathlib.Path(clip).stem,
    )
    summary = encoded.stats()
    files.write_json(stats if stats is not None else f'{output}.stats.json', summary)
    _echo_json({key: summary[key] for key in ('frames', 'bytes', 'bpp', 'mean_psnr', 'mean_ms_ssim')})  # type: ignore


@main.command()
@logging_options
@click.argument('bitstream', type=click.Path(exists=True, dir_okay=False))
@click.argument('checkpoint', type=click.Path(exists=True, dir_okay=False))
@click.argument('output', type=click.Path(dir_okay=False))
@reporting_errors
def decode(
        bitstream: str,
        checkpoint: str,
        output: str,
) -> None:
    """ Decode a bitstream into a raw clip, with the model it was encoded with. """
    model = checkpoints.load_model(checkpoint)
    decoded = sequences.decode_sequence(bitstream, model)
    header = rawvideo.save_raw(output, decoded)
    _echo_json({'output': output, 'frames': header.frames, 'width': header.width, 'height': header.height})


@main.command(name='eval')
@logging_options
@settings_options
@click.option('--scales', type=click.IntRange(min=1, max=5), default=None)
@click.option('-o', '--output', type=click.Path(dir_okay=False), default=None)
@click.argument('original', type=click.Path(exists=True, dir_okay=False))
@click.argument('decoded', type=click.Path(exists=True, dir_okay=False))
@reporting_errors
def evaluate(
        settings: configuration.LabSettings,
        original: str,
        decoded: str,
        scales: Optional[int],
        output: Optional[str],
) -> None:
    """ Measure the quality of a decoded clip against its original. """
    scales = scales if scales is not None else settings.coding.ms_ssim_scales
    xs = rawvideo.load_raw(original)
    ys = rawvideo.load_raw(decoded)
    if len(ys) > len(xs):
        raise errors.DataError(f"The decoded clip has {len(ys)} frames, the original only {len(xs)}.")
    xs = xs[:len(ys)]
    psnrs = [quality.psnr(x, y) for x, y in zip(xs, ys)]
    ms_ssims = [sequences.frame_ms_ssim(x, y, scales) for x, y in zip(xs, ys)]
    result = {
        'frames': len(ys),
        'mean_psnr': float(np.mean(psnrs)),
        'mean_ms_ssim': float(np.mean(ms_ssims)) if all(v is not None for v in ms_ssims) else None,
        'ms_ssim_scales': scales,
        'psnr': psnrs,
        'ms_ssim': ms_ssims,
    }
    if output is not None:
        files.write_json(output, result)
    _echo_json(result)


@main.command()
@logging_options
@click.option('-m', '--metric', type=click.Choice(list(bjontegaard.METRICS)), default='psnr')
@click.option('-o', '--output', type=click.Path(dir_okay=False), default=None)
@click.argument('anchor', type=click.Path(exists=True, dir_okay=False))
@click.argument('test', type=click.Path(exists=True, dir_okay=False))
@reporting_errors
def bdrate(
        anchor: str,
        test: str,
        metric: str,
        output: Optional[str],
) -> None:
    """ Compare two RD curves (CSV files with the columns bpp, psnr, ms_ssim). """
    reference = bjontegaard.load_curve(anchor)
    tested = bjontegaard.load_curve(test)
    result = {
        'schema': reports.SCHEMA_VERSION,
        'anchor': anchor,
        'test': test,
        'metric': metric,
        'bd_rate': bjontegaard.bd_rate(reference, tested, metric=metric),
        'bd_psnr': bjontegaard.bd_psnr(reference, tested, metric=metric),
    }
    if output is not None:
        files.write_json(output, result)
    _echo_json(result)


@main.command()
@logging_options
@settings_options
@click.option('-o', '--output', type=click.Path(file_okay=False), default=None)
@click.argument('plan', type=click.Path(exists=True, dir_okay=False))
@reporting_errors
def ablate(
        settings: configuration.LabSettings,
        plan: str,
        output: Optional[str],
) -> None:
    """ Run the experiments of a plan, and store their CSV and JSON reports. """
    loaded = plans.load_plan(plan)
    if output is not None:
        loaded = dataclasses.replace(loaded, output=pathlib.Path(output))
    produced = experiments.ablate(loaded, settings)
    _echo_json({'output': str(loaded.output), 'reports': [report.kind for report in produced]})
