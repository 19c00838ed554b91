import numpy as np
import pytest

from epac.autodiff import graphs
from epac.autodiff.graphs import Graph
from epac.structs import frames
from epac.training import rollouts, stages


def unrolled(model, clip, length, seed=0, **kwargs):
    graph = Graph()
    bound = graphs.bind(graph, model.params, trainable=stages.epa_trainable(model))
    return graph, rollouts.unroll(bound, model, clip, length, np.random.default_rng(seed), **kwargs)


def test_single_step_equals_the_single_frame_objective(random_model, clip):
    _, rollout = unrolled(random_model, clip, 1, seed=3)

    graph = Graph()
    bound = graphs.bind(graph, random_model.params)
    inter, _ = stages.single_frame_terms(bound, random_model, clip[1], clip[0], warmup=False,
                                         rng_p=np.random.default_rng(3), rng_i=np.random.default_rng(4))
    assert rollout.loss.item() == pytest.approx(inter.loss.item(), rel=1e-12, abs=0)


def test_loss_is_the_mean_of_the_steps(random_model, clip):
    _, rollout = unrolled(random_model, clip, 5)
    assert len(rollout.steps) == 5
    assert [step.index for step in rollout.steps] == [1, 2, 3, 4, 5]
    assert rollout.loss.item() == pytest.approx(np.mean(rollout.step_losses()), rel=0, abs=1e-12)


def test_intra_loss_is_not_a_part_of_the_mean(random_model, clip):
    _, rollout = unrolled(random_model, clip, 2)
    total = sum(rollout.step_losses()) / 2
    assert rollout.loss.item() == pytest.approx(total, rel=0, abs=1e-12)
    assert rollout.intra.loss.item() > 0


def test_references_are_the_previous_reconstructions(random_model, clip):
    _, rollout = unrolled(random_model, clip, 3, provenance_checks=True)
    assert rollout.intra.reconstruction.provenance is frames.Provenance.RECONSTRUCTED
    for step in rollout.steps:
        assert step.reconstruction.provenance is frames.Provenance.RECONSTRUCTED


def test_gradients_flow_across_the_steps(random_model, clip):
    graph, rollout = unrolled(random_model, clip, 3)
    name = 'mv_encoder.conv1.weight'
    chained = graphs.backward(graph, rollout.loss)[name]
    first_only = graphs.backward(graph, rollout.steps[0].loss)[name] / 3
    assert not np.allclose(chained, first_only)


def test_intra_codec_is_frozen_in_the_rollout(random_model, clip):
    graph, rollout = unrolled(random_model, clip, 2)
    grads = graphs.backward(graph, rollout.loss)
    assert not any(name.startswith('intra_') for name in grads if np.any(grads[name]))


@pytest.mark.parametrize('length, count', [(0, 6), (6, 6), (3, 3)], ids=['empty', 'too-long', 'short-clip'])
def test_rollout_lengths(random_model, clip, length, count):
    with pytest.raises(ValueError):
        unrolled(random_model, clip[:count], length)
