import functools
import json
import logging

import click.testing
import pytest

from epac.cli import CLIControls, main
from epac.codec import models
from epac.data import rawvideo, synthesis
from epac.storage import checkpoints
from epac.structs import frames
from epac.structs.configuration import LabSettings


@pytest.fixture(autouse=True)
def _restored_logging():
    # The commands configure the root logger; the handlers would outlive the runner's streams.
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    aliens = {name: (logging.getLogger(name).propagate, logging.getLogger(name).handlers[:])
              for name in ['asyncio', 'aiojobs']}
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    for name, (propagate, alien_handlers) in aliens.items():
        logging.getLogger(name).propagate = propagate
        logging.getLogger(name).handlers[:] = alien_handlers


@pytest.fixture()
def runner():
    runner = click.testing.CliRunner()
    return runner


@pytest.fixture()
def controls():
    settings = LabSettings()
    settings.online.max_iterations = 2
    settings.online.learning_rate = 1e-3
    settings.training.batch_size = 1
    return CLIControls(settings=settings)


@pytest.fixture()
def invoke(runner, controls):
    return functools.partial(runner.invoke, main, obj=controls)


@pytest.fixture()
def reply():
    """ The JSON line printed by a command last (after any log lines). """
    def parse(result):
        return json.loads(result.output.strip().splitlines()[-1])
    return parse


@pytest.fixture()
def checkpoint(tmp_path, architecture):
    path = tmp_path / 'model.epac'
    checkpoints.save_model(path, models.create_model(512, architecture=architecture, seed=1, zero_final=False))
    return path


@pytest.fixture()
def raw_clip(tmp_path, synth_spec):
    samples, _ = synthesis.render_clip(synth_spec, 0)
    path = tmp_path / 'clip.raw'
    rawvideo.save_raw(path, [frames.FrameBuffer(plane / 255.0) for plane in samples])
    return path


@pytest.fixture()
def curve_file(tmp_path):
    path = tmp_path / 'anchor.csv'
    path.write_text("bpp,psnr\n0.1,30.0\n0.2,33.0\n0.4,36.0\n0.8,38.5\n", encoding='utf-8')
    return path
