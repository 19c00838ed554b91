import importlib
import pkgutil

import pytest

import epac
from epac.harness import plans
from epac.online import variants


def _submodules():
    return sorted(info.name for info in pkgutil.walk_packages(epac.__path__, prefix='epac.'))


@pytest.mark.parametrize('name', _submodules())
def test_every_module_imports(name):
    module = importlib.import_module(name)
    assert module.__name__ == name


def test_top_level_exports_resolve():
    assert epac.ExperimentPlan is plans.ExperimentPlan
    assert epac.Variant is variants.Variant
    assert callable(epac.ablate)


def test_plan_defaults_to_all_variants(tmp_path):
    plan = plans.ExperimentPlan(checkpoints={}, test_set=tmp_path, output=tmp_path)
    assert plan.variants == tuple(variants.Variant)
    assert plan.anchor_run() == (plans.BASELINE, variants.Variant.OFF)
