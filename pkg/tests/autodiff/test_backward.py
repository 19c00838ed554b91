import numpy as np
import pytest

from epac.autodiff import graphs, ops
from epac.autodiff.graphs import Graph, PreconditionError
from epac.structs.params import ParamSet, Side


def test_gradient_of_a_dot_product_is_the_other_factor():
    x = np.array([1.0, -2.0, 3.0])
    graph = Graph()
    w = graph.leaf('w', np.array([0.5, 0.5, 0.5]))
    loss = ops.reduce_sum(w * graph.constant(x))
    grads = graphs.backward(graph, loss)
    assert np.array_equal(grads['w'], x)


def test_unused_leaves_get_zero_gradients():
    graph = Graph()
    w = graph.leaf('w', np.array([1.0, 2.0]))
    unused = graph.leaf('unused', np.ones((2, 3)))
    grads = graphs.backward(graph, ops.reduce_sum(ops.square(w)))
    assert grads['unused'].shape == unused.shape
    assert np.all(grads['unused'] == 0.0)


def test_leaves_created_after_the_loss_get_zero_gradients():
    graph = Graph()
    w = graph.leaf('w', np.array([1.0]))
    loss = ops.reduce_sum(w)
    graph.leaf('late', np.array([1.0]))
    grads = graphs.backward(graph, loss)
    assert grads['late'][0] == 0.0


def test_non_scalar_loss_is_rejected():
    graph = Graph()
    w = graph.leaf('w', np.array([1.0, 2.0]))
    with pytest.raises(PreconditionError, match="scalar"):
        graphs.backward(graph, w * 2.0)


def test_loss_of_another_graph_is_rejected():
    graph1, graph2 = Graph(), Graph()
    graph1.leaf('w', np.array([1.0]))
    loss = ops.reduce_sum(graph2.leaf('w', np.array([1.0])))
    with pytest.raises(PreconditionError):
        graphs.backward(graph1, loss)


def test_operands_of_different_graphs_are_rejected():
    graph1, graph2 = Graph(), Graph()
    with pytest.raises(PreconditionError, match="different graphs"):
        graph1.constant(1.0) + graph2.constant(1.0)


def test_duplicate_leaves_are_rejected():
    graph = Graph()
    graph.leaf('w', np.zeros(1))
    with pytest.raises(PreconditionError):
        graph.leaf('w', np.zeros(1))


def test_shared_subexpressions_accumulate():
    graph = Graph()
    w = graph.leaf('w', np.array([3.0]))
    y = w * w
    loss = ops.reduce_sum(y + y)
    grads = graphs.backward(graph, loss)
    assert grads['w'][0] == 12.0


def test_backward_is_deterministic():
    rng = np.random.default_rng(0)
    graph = Graph()
    x = graph.constant(rng.normal(size=(1, 2, 6, 6)))
    w = graph.leaf('w', rng.normal(size=(3, 2, 3, 3)))
    b = graph.leaf('b', rng.normal(size=(3,)))
    loss = ops.reduce_mean(ops.square(ops.leaky_relu(ops.conv2d(x, w, b, stride=2, padding=1))))
    grads1 = graphs.backward(graph, loss)
    grads2 = graphs.backward(graph, loss)
    for name in grads1:
        assert grads1[name].tobytes() == grads2[name].tobytes()


def test_forward_evaluation_is_pure():
    rng = np.random.default_rng(1)
    image = rng.uniform(size=(1, 1, 8, 8))
    flow = rng.uniform(-2, 2, size=(1, 2, 8, 8))
    outputs = []
    for _ in range(2):
        graph = Graph()
        outputs.append(ops.bilinear_warp(graph.constant(image), graph.constant(flow)).data.tobytes())
    assert outputs[0] == outputs[1]


def test_bind_makes_leaves_or_constants():
    values = ParamSet({'a': np.ones(2), 'b': np.zeros(3)}, {'a': Side.ENCODER, 'b': Side.DECODER})
    graph = Graph()
    bound = graphs.bind(graph, values, trainable=['a'])
    assert set(graph.leaves) == {'a'}
    assert bound['b'].shape == (3,)


def test_bind_without_trainables_only_evaluates():
    values = ParamSet({'a': np.ones(2)}, {'a': Side.ENCODER})
    graph = Graph()
    graphs.bind(graph, values, trainable=())
    assert graph.leaves == {}


def test_item_requires_a_single_value():
    graph = Graph()
    with pytest.raises(PreconditionError):
        graph.constant(np.zeros(2)).item()
