import numpy as np
import pytest

from epac.codec import networks
from epac.structs.params import DECODING_SIDES, ParamSet, Side, changed_names


@pytest.fixture()
def values():
    return ParamSet(
        {'enc.weight': np.ones((2, 2)), 'dec.weight': np.zeros(3), 'entropy.loc': np.array([0.5])},
        {'enc.weight': Side.ENCODER, 'dec.weight': Side.DECODER, 'entropy.loc': Side.ENTROPY},
    )


def test_every_parameter_needs_a_side():
    with pytest.raises(ValueError, match="side tag"):
        ParamSet({'a': np.zeros(1), 'b': np.zeros(1)}, {'a': Side.ENCODER})


def test_values_are_private_read_only_copies():
    source = np.zeros(3)
    values = ParamSet({'a': source}, {'a': Side.ENCODER})
    source[0] = 1.0
    assert values['a'][0] == 0.0
    with pytest.raises(ValueError):
        values['a'][0] = 2.0


def test_order_is_preserved(values):
    assert list(values) == ['enc.weight', 'dec.weight', 'entropy.loc']
    assert values.names(*DECODING_SIDES) == ('dec.weight', 'entropy.loc')
    assert values.names(Side.ENCODER) == ('enc.weight',)


def test_sided_selection_keeps_tags(values):
    decoding = values.sided(*DECODING_SIDES)
    assert set(decoding) == {'dec.weight', 'entropy.loc'}
    assert decoding.side('entropy.loc') is Side.ENTROPY


def test_updates_keep_names_and_sides(values):
    updated = values.with_values({'enc.weight': np.full((2, 2), 3.0)})
    assert updated.side('enc.weight') is Side.ENCODER
    assert updated['enc.weight'][0, 0] == 3.0
    assert values['enc.weight'][0, 0] == 1.0
    assert changed_names(values, updated) == ('enc.weight',)


def test_updates_cannot_change_shapes_or_add_names(values):
    with pytest.raises(ValueError, match="Shape"):
        values.with_values({'enc.weight': np.zeros(4)})
    with pytest.raises(KeyError):
        values.with_values({'new.weight': np.zeros(1)})


def test_digest_covers_values_and_sides(values):
    updated = values.with_values({'enc.weight': np.full((2, 2), 3.0)})
    assert updated.digest() != values.digest()
    assert updated.digest(*DECODING_SIDES) == values.digest(*DECODING_SIDES)
    assert updated.digest(values=False) == values.digest(values=False)


def test_every_codec_parameter_has_exactly_one_side(architecture):
    values = networks.initial_params(architecture, np.random.default_rng(0))
    for name in values:
        assert isinstance(values.side(name), Side)
    encoders = [name for name in values.names(Side.ENCODER)]
    assert any(name.startswith('flow_net.') for name in encoders)
    assert any(name.startswith('mv_encoder.') for name in encoders)
    assert any(name.startswith('residual_encoder.') for name in encoders)
    entropy = values.names(Side.ENTROPY)
    assert {name.rsplit('.', 1)[0] for name in entropy} == {'entropy.motion', 'entropy.residual', 'entropy.intra'}
