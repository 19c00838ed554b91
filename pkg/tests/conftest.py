import asyncio
import io
import logging
import re
import sys

import numpy as np
import pytest

from epac.codec import models, networks
from epac.data import synthesis
from epac.engines.logging import ContextPrefixingFormatter, configure
from epac.structs import frames
from epac.structs.configuration import LabSettings


def pytest_configure(config):
    config.addinivalue_line('markers', "acceptance: slow training-run oracles (statistical, fixed seeds).")

    # Unexpected warnings should fail the tests. Use `-Wignore` to explicitly disable it.
    config.addinivalue_line('filterwarnings', 'error')


def pytest_addoption(parser):
    parser.addoption("--only-acceptance", action="store_true", help="Execute the acceptance tests only.")
    parser.addoption("--with-acceptance", action="store_true", help="Include the acceptance tests.")


# Make all tests in this directory and below asyncio-compatible by default.
# Due to how pytest-async checks for these markers, they should be added as early as possible.
@pytest.hookimpl(hookwrapper=True)
def pytest_pycollect_makeitem(collector, name, obj):
    if collector.funcnamefilter(name) and asyncio.iscoroutinefunction(obj):
        pytest.mark.asyncio(obj)
    yield


def pytest_collection_modifyitems(config, items):

    # Put all acceptance tests to the end, as they train the models and are slow.
    def _is_acceptance(item):
        path = item.location[0]
        return path.startswith('tests/acceptance/') or item.get_closest_marker('acceptance') is not None
    etc = [item for item in items if not _is_acceptance(item)]
    acceptance = [item for item in items if _is_acceptance(item)]

    # Mark all acceptance tests, no matter how they were detected. Just for filtering.
    mark_acceptance = pytest.mark.acceptance
    for item in acceptance:
        item.add_marker(mark_acceptance)

    # The training runs take minutes. Skip them by default,
    # so that the contributors can run pytest without initial tweaks.
    mark_skip = pytest.mark.skip(reason="Acceptance tests are not enabled. "
                                        "Use --with-acceptance/--only-acceptance to enable.")
    if not config.getoption('--with-acceptance') and not config.getoption('--only-acceptance'):
        for item in acceptance:
            item.add_marker(mark_skip)

    # Minify the test-plan if only the acceptance tests are requested.
    if config.getoption('--only-acceptance'):
        items[:] = acceptance
    else:
        items[:] = etc + acceptance


@pytest.fixture()
def settings():
    return LabSettings()


#
# Small models and clips: 16x16 frames keep every codec test within milliseconds.
#

@pytest.fixture()
def architecture():
    return networks.Architecture(hidden=8, flow_hidden=4, refine_hidden=4,
                                 motion_channels=2, residual_channels=4, intra_channels=4)


@pytest.fixture()
def model(architecture):
    """ An untrained model: the final layers are zero, so it copies the reference. """
    return models.create_model(512, architecture=architecture, seed=0)


@pytest.fixture()
def random_model(architecture):
    """ A model with all layers random, so that every parameter affects the loss. """
    return models.create_model(512, architecture=architecture, seed=1, zero_final=False)


@pytest.fixture()
def synth_spec():
    return synthesis.SynthSpec(width=16, height=16, channels=1, frames=6,
                               texture=synthesis.Texture.SMOOTH_BLOBS, max_motion=2.0, noise=0.0, seed=7)


@pytest.fixture()
def clip(synth_spec):
    samples, _ = synthesis.render_clip(synth_spec, 0)
    return [frames.FrameBuffer(plane / 255.0) for plane in samples]


@pytest.fixture()
def frame_pair(clip):
    """ A frame and its reference, the latter marked as a reconstruction. """
    return clip[1], frames.reconstructed(clip[0].samples)


@pytest.fixture()
def noise_frame():
    rng = np.random.default_rng(123)
    return frames.FrameBuffer(rng.uniform(0.0, 1.0, size=(1, 16, 16)))


#
# Logging interception.
#

@pytest.fixture()
def logstream(caplog):
    """ Prefixing is done at the final output. We have to intercept it. """

    logger = logging.getLogger()
    handlers = list(logger.handlers)

    # Setup all log levels of sub-libraries. A side-effect: the handlers are also added.
    configure(verbose=True)

    # Remove any stream handlers added in the step above. But keep the caplog's handlers.
    for handler in list(logger.handlers):
        if isinstance(handler, logging.StreamHandler) and handler.stream is sys.stderr:
            logger.removeHandler(handler)

    # Inject our stream-intercepting handler.
    stream = io.StringIO()
    handler = logging.StreamHandler(stream)
    formatter = ContextPrefixingFormatter('prefix %(message)s')
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    try:
        with caplog.at_level(logging.DEBUG):
            yield stream
    finally:
        logger.removeHandler(handler)
        logger.handlers[:] = handlers  # undo `configure()`


@pytest.fixture()
def assert_logs(caplog):
    """
    A function to assert the logs are present (by pattern).

    The listed message patterns MUST be present, in the order specified.
    Some other log messages can also be present, but they are ignored.
    """
    def assert_logs_fn(patterns, prohibited=[]):
        __traceback_hide__ = True
        remaining_patterns = list(patterns)
        for message in caplog.messages:
            for idx, pattern in enumerate(remaining_patterns):
                if re.search(pattern, message):
                    if idx == 0:
                        remaining_patterns[:1] = []
                        break
                    raise AssertionError(f"Few patterns were skipped: {remaining_patterns[:idx]!r}")
            for pattern in prohibited:
                if re.search(pattern, message):
                    raise AssertionError(f"Prohibited log pattern found: {message!r} ~ {pattern!r}")
        if remaining_patterns:
            raise AssertionError(f"Few patterns were missed: {remaining_patterns!r}")

    return assert_logs_fn


def _all_tasks():
    # Python 3.12 keeps the scheduled tasks in a differently named registry.
    registry = getattr(asyncio.tasks, '_all_tasks', None)
    return registry if registry is not None else asyncio.tasks._scheduled_tasks


@pytest.fixture(autouse=True)
def _no_asyncio_pending_tasks():
    """
    Ensure there are no unattended asyncio tasks after the test.
    """
    before = {t for t in list(_all_tasks()) if not t.done()}
    yield
    after = {t for t in list(_all_tasks()) if not t.done()}
    remains = after - before
    if remains:
        pytest.fail(f"Unattended asyncio tasks detected: {remains!r}")
