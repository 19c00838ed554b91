"""
The training runs shared by the acceptance tests: the default desk-scale
synthetic set, the first-stage model, and its error-propagation-aware
fine-tuning, all with the default settings and fixed seeds.
"""
import dataclasses

import pytest

from epac.codec import models
from epac.data import datasets, synthesis
from epac.structs.configuration import LAMBDAS, LabSettings
from epac.training import stages


@pytest.fixture(scope='session')
def lab_settings():
    return LabSettings()


@pytest.fixture(scope='session')
def manifest(tmp_path_factory, lab_settings):
    spec = synthesis.SynthSpec.from_settings(lab_settings.synthesis)
    return synthesis.synth_dataset(spec, lab_settings.synthesis.clips, tmp_path_factory.mktemp('synth'),
                                   held_out=lab_settings.synthesis.held_out,
                                   executor=lab_settings.execution.executor)


@pytest.fixture(scope='session')
def train_clips(manifest):
    return datasets.ClipSet.from_manifest(manifest, 'train')


@pytest.fixture(scope='session')
def test_clips(manifest):
    return datasets.ClipSet.from_manifest(manifest, 'test')


def _train(lmbda, train_clips, lab_settings):
    settings = dataclasses.replace(lab_settings, training=dataclasses.replace(lab_settings.training, lmbda=lmbda))
    initial = models.create_model(lmbda, coding=settings.coding, seed=settings.training.seed)
    baseline = stages.train_single_frame(initial, train_clips, settings)
    epa = stages.train_epa(baseline.model, train_clips, settings)
    return baseline, epa


@pytest.fixture(scope='session')
def trained(train_clips, lab_settings):
    """ The first-stage result and the fine-tuned result at λ=512. """
    return _train(512, train_clips, lab_settings)


@pytest.fixture(scope='session')
def baseline_model(trained):
    return trained[0].model


@pytest.fixture(scope='session')
def epa_model(trained):
    return trained[1].model


@pytest.fixture(scope='session')
def model_sets(trained, train_clips, lab_settings):
    """ Both model sets over all λ (the λ=512 pair is reused). """
    baseline, epa = {}, {}
    for lmbda in LAMBDAS:
        first, second = trained if lmbda == 512 else _train(lmbda, train_clips, lab_settings)
        baseline[lmbda], epa[lmbda] = first.model, second.model
    return baseline, epa
