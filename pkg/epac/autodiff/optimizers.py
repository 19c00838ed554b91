"""
Adam with bias correction, and the global-norm clipping of the gradients.

Both the training and the online updating use a functional form: the step
takes the parameters, the gradients, and the state, and returns the new
parameters and the new state; nothing is modified in place.
"""
import dataclasses
from typing import Dict, Mapping, Tuple

import numpy as np

from epac.structs import errors
from epac.structs import params


class NonFiniteGradientError(errors.NonFiniteError):
    """ A gradient contains NaN or infinite values. """


@dataclasses.dataclass(frozen=True)
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Mapping[str, np.ndarray] = dataclasses.field(default_factory=dict)
    second: Mapping[str, np.ndarray] = dataclasses.field(default_factory=dict)


def adam_step(
        values: params.ParamSet,
        grads: Mapping[str, np.ndarray],
        state: AdamState,
        lr: float,
) -> Tuple[params.ParamSet, AdamState]:
    """
    One Adam update of the parameters that have gradients.

    The parameters without gradients are skipped: neither their values
    nor their moments change. The step counter is shared and grows by one.
    """
    for name, grad in grads.items():
        if name in values and not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError("Non-finite gradient", parameter=name, step=state.step + 1)

    step = state.step + 1
    first: Dict[str, np.ndarray] = dict(state.first)
    second: Dict[str, np.ndarray] = dict(state.second)
    updates: Dict[str, np.ndarray] = {}
    for name, grad in grads.items():
        if name not in values:
            continue
        value = values[name]
        m = first.get(name, np.zeros_like(value))
        v = second.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1 ** step)
        v_hat = v / (1.0 - state.beta2 ** step)
        updates[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        first[name] = m
        second[name] = v

    new_state = dataclasses.replace(state, step=step, first=first, second=second)
    return values.with_values(updates), new_state


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(grad * grad)) for grad in grads.values())))


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    factor = max_norm / norm
    return {name: grad * factor for name, grad in grads.items()}
