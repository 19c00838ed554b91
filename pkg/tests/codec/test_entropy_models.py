import math

import numpy as np
import pytest

from epac.autodiff import graphs
from epac.autodiff.checking import finite_diff_check
from epac.autodiff.graphs import Graph
from epac.codec import entropy
from epac.codec.entropy import Diagnostics, EntropyModel, Mode, P_MIN, quantize, rate_estimate
from epac.structs.params import ParamSet, Side


def raw_for_scale(scale):
    """ The inverse of ``softplus(raw) + 1e-6``. """
    return math.log(math.expm1(scale - entropy.SCALE_FLOOR))


def estimate(latent, loc, raw_scale):
    graph = Graph()
    return rate_estimate(graph.constant(latent), graph.constant(loc), graph.constant(raw_scale)).item()


def scalar_bits(v, mu, s):
    def cdf(t):
        return 1.0 / (1.0 + math.exp(-t))
    mass = cdf((v + 0.5 - mu) / s) - cdf((v - 0.5 - mu) / s)
    return -math.log2(max(mass, P_MIN))


def test_infer_rounds_half_away_from_zero():
    graph = Graph()
    out = quantize(graph.constant(np.array([1.5, -1.5, 0.4, -0.6, 2.49])), Mode.INFER)
    assert out.data.tolist() == [2.0, -2.0, 0.0, -1.0, 2.0]


def test_infer_clamps_and_counts():
    graph = Graph()
    diagnostics = Diagnostics()
    out = quantize(graph.constant(np.array([80.0, -100.0, 3.0])), Mode.INFER,
                   latent_max=64, diagnostics=diagnostics)
    assert out.data.tolist() == [64.0, -64.0, 3.0]
    assert diagnostics.clamps == 2


def test_train_noise_is_seeded():
    latent = np.zeros((1, 2, 4, 4))
    outs = []
    for _ in range(2):
        graph = Graph()
        outs.append(quantize(graph.constant(latent), Mode.TRAIN, np.random.default_rng(5)).data)
    assert np.array_equal(outs[0], outs[1])
    assert np.all(np.abs(outs[0]) <= 0.5)
    assert not np.all(outs[0] == 0.0)


def test_train_noise_needs_a_source():
    graph = Graph()
    with pytest.raises(ValueError):
        quantize(graph.constant(np.zeros(3)), Mode.TRAIN)


def test_half_probability_bin_costs_one_bit():
    scale = 0.5 / math.log(3.0)  # the logistic mass of [-0.5, 0.5] is exactly 1/2
    bits = estimate(np.zeros((1, 1, 1, 1)), np.zeros(1), np.array([raw_for_scale(scale)]))
    assert bits == pytest.approx(1.0, abs=1e-9)


def test_far_values_are_capped_at_sixteen_bits():
    bits = estimate(np.full((1, 1, 1, 1), 60.0), np.zeros(1), np.array([raw_for_scale(0.01)]))
    assert bits == pytest.approx(16.0, abs=1e-12)


def test_estimate_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    latent = np.rint(rng.normal(0.0, 3.0, size=(1, 3, 4, 4)))
    loc = rng.normal(0.0, 1.0, size=3)
    raw = rng.normal(0.5, 0.3, size=3)
    scale = np.logaddexp(0.0, raw) + entropy.SCALE_FLOOR
    expected = sum(
        scalar_bits(latent[0, c, y, x], loc[c], scale[c])
        for c in range(3) for y in range(4) for x in range(4)
    )
    assert estimate(latent, loc, raw) == pytest.approx(expected, rel=1e-9)


def test_estimate_is_non_negative():
    rng = np.random.default_rng(1)
    for _ in range(10):
        latent = rng.normal(0.0, 10.0, size=(1, 2, 2, 2))
        assert estimate(latent, rng.normal(size=2), rng.normal(size=2)) >= 0.0


def test_estimate_channel_mismatch():
    with pytest.raises(graphs.PreconditionError, match="dimension 1"):
        estimate(np.zeros((1, 3, 2, 2)), np.zeros(2), np.zeros(2))


def test_estimate_gradients():
    rng = np.random.default_rng(2)
    values = ParamSet(
        {'latent': rng.normal(0.0, 2.0, size=(1, 2, 3, 3)), 'loc': rng.normal(size=2), 'raw': rng.normal(size=2)},
        {'latent': Side.ENCODER, 'loc': Side.ENTROPY, 'raw': Side.ENTROPY},
    )

    def loss_fn(bound):
        return rate_estimate(bound['latent'], bound['loc'], bound['raw'])

    assert finite_diff_check(loss_fn, values, n_probes=24, atol=1e-3) < 1e-4


def test_probabilities_are_floored_and_shaped(model):
    em = EntropyModel.from_params(model.params, 'motion', latent_max=64)
    probabilities = em.probabilities()
    assert probabilities.shape == (em.channels, 129)
    assert np.all(probabilities >= P_MIN)
    assert np.allclose(probabilities.sum(axis=1), 1.0, rtol=0, atol=5e-3)


def test_bits_map_sums_to_the_estimate(model):
    rng = np.random.default_rng(3)
    channels = model.architecture.residual_channels
    latent = np.rint(rng.normal(0.0, 2.0, size=(1, channels, 4, 4)))
    em = EntropyModel.from_params(model.params, 'residual')
    bits = entropy.bits_map(latent, em)
    assert bits.shape == (4, 4)
    expected = estimate(latent, model.params['entropy.residual.loc'], model.params['entropy.residual.raw_scale'])
    assert bits.sum() == pytest.approx(expected, rel=1e-12)
