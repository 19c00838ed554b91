"""
A minimal reverse-mode automatic differentiation over dense 64-bit arrays.

Only the operations that the codec needs are implemented (see `ops`).
There is no broadcasting except for scalars, no GPU, no higher-order derivatives.
"""
from epac.autodiff.checking import GradientCheckError, finite_diff_check
from epac.autodiff.graphs import Bound, Graph, Node, PreconditionError, Tensor, backward, bind
from epac.autodiff.optimizers import AdamState, NonFiniteGradientError, adam_step, clip_grad_norm

__all__ = [
    'Graph', 'Node', 'Tensor', 'Bound', 'PreconditionError',
    'backward', 'bind',
    'AdamState', 'NonFiniteGradientError', 'adam_step', 'clip_grad_norm',
    'GradientCheckError', 'finite_diff_check',
]
