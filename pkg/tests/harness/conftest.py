import json

import pytest

from epac.codec import models
from epac.data import synthesis
from epac.storage import checkpoints
from epac.structs.configuration import LAMBDAS, LabSettings


@pytest.fixture()
def dataset(tmp_path, synth_spec):
    directory = tmp_path / 'data'
    synthesis.synth_dataset(synth_spec, 3, directory, held_out=2)
    return directory


@pytest.fixture()
def checkpoint_paths(tmp_path, architecture):
    """ Two model sets of random models, one per λ, stored as checkpoints. """
    paths = {}
    for offset, name in enumerate(['baseline', 'epa']):
        paths[name] = {}
        for index, lmbda in enumerate(LAMBDAS):
            model = models.create_model(lmbda, architecture=architecture, seed=10 * offset + index + 1,
                                        zero_final=False)
            path = tmp_path / 'models' / f'{name}-{lmbda}.epac'
            path.parent.mkdir(parents=True, exist_ok=True)
            checkpoints.save_model(path, model)
            paths[name][lmbda] = path
    return paths


@pytest.fixture()
def plan_data(checkpoint_paths, dataset):
    return {
        'models': {name: {str(lmbda): str(path) for lmbda, path in per_set.items()}
                   for name, per_set in checkpoint_paths.items()},
        'test_set': str(dataset),
        'output': 'reports',
        'gops': [0],
        'variants': ['off', 'lfu'],
        'experiments': ['grid'],
        'frames': 3,
    }


@pytest.fixture()
def plan_file(tmp_path, plan_data):
    path = tmp_path / 'plan.json'
    path.write_text(json.dumps(plan_data), encoding='utf-8')
    return path


@pytest.fixture()
def quick_settings():
    settings = LabSettings()
    settings.online.max_iterations = 2
    settings.online.learning_rate = 1e-3
    return settings
