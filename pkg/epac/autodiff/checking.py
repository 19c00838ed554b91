"""
The finite-difference oracle for the analytic gradients.

The loss function gets the parameters bound into a fresh graph (as leaves)
and returns a scalar tensor of that graph. It must be deterministic:
all noise sources are seeded and frozen by the caller.

The probed coordinates are spread round-robin over the parameters, so that
every parameter tensor (and so every network) gets probed. The probes that
hit a kink of a piecewise-smooth function (``relu``, clamping, flooring,
the bilinear cell borders) are redrawn. A kink is recognised by the central
differences at ``h`` and ``h/2`` that disagree (a kink within ``h``), or by
one-sided differences that disagree the same at both steps (a kink exactly at
the coordinate); on a smooth coordinate, both disagreements vanish with ``h``.

The error of a probe is ``|a - b| / max(|a|, |b|, atol)``: relative for the
large gradients, absolute for the gradients below ``atol``. E.g. a gradient
doubled by mistake shows up as the error of 0.5.
"""
import logging
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from epac.autodiff import graphs
from epac.structs import params

logger = logging.getLogger(__name__)

LossFn = Callable[[graphs.Bound], graphs.Tensor]
GradsHook = Callable[[Dict[str, np.ndarray]], Mapping[str, np.ndarray]]

ROUNDOFF = 1e-14
""" The relative roundoff of a loss evaluation, as seen by the kink detection. """


class GradientCheckError(RuntimeError):
    """ Fewer coordinates than requested could be compared. """


def evaluate(loss_fn: LossFn, values: params.ParamSet) -> float:
    graph = graphs.Graph()
    return loss_fn(graphs.bind(graph, values, trainable=())).item()


def gradients(loss_fn: LossFn, values: params.ParamSet) -> Dict[str, np.ndarray]:
    graph = graphs.Graph()
    loss = loss_fn(graphs.bind(graph, values))
    return graphs.backward(graph, loss)


def relative_error(a: float, b: float, atol: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), atol)


def finite_diff_check(
        loss_fn: LossFn,
        values: params.ParamSet,
        n_probes: int = 64,
        h: float = 1e-5,
        *,
        seed: int = 0,
        atol: float = 1e-8,
        kink_tolerance: float = 1e-5,
        max_redraws: int = 20,
        analytic: Optional[GradsHook] = None,
) -> float:
    """
    The maximal error between the analytic and central-difference gradients.

    Exactly ``n_probes`` coordinates are compared. If some parameter has no smooth
    coordinate in ``max_redraws`` draws, `GradientCheckError` is raised instead
    of returning an error over fewer probes.

    The ``analytic`` hook can replace the analytic gradients before comparing
    (used to verify that the check detects broken gradients).
    """
    grads = gradients(loss_fn, values)
    if analytic is not None:
        grads = dict(analytic(grads))

    rng = np.random.default_rng(seed)
    names = [name for name in values if values[name].size > 0]
    if not names:
        raise GradientCheckError("There are no parameters to probe.")
    base = evaluate(loss_fn, values)
    noise = ROUNDOFF * max(1.0, abs(base)) / h
    worst = 0.0
    probed: Dict[str, int] = {}
    missed: List[str] = []
    for probe in range(n_probes):
        name = names[probe % len(names)]
        for _ in range(max_redraws):
            flat_index = int(rng.integers(values[name].size))
            numeric, smooth = _central_difference(loss_fn, values, name, flat_index, h, base,
                                                  noise=noise, kink_tolerance=kink_tolerance)
            if not smooth:
                continue
            exact = float(grads[name].reshape(-1)[flat_index])
            error = relative_error(exact, numeric, atol)
            worst = max(worst, error)
            probed[name] = probed.get(name, 0) + 1
            logger.debug(f"Probe {name}[{flat_index}]: analytic={exact:.6e} numeric={numeric:.6e} "
                         f"error={error:.2e}")
            break
        else:
            missed.append(name)

    if missed:
        raise GradientCheckError(f"Compared {n_probes - len(missed)} of {n_probes} coordinates; "
                                 f"no smooth coordinate in {max_redraws} draws of {sorted(set(missed))}.")
    logger.debug(f"Probed {n_probes} coordinates of {len(probed)} of {len(names)} parameters; "
                 f"the worst error is {worst:.2e}.")
    return worst


def _central_difference(
        loss_fn: LossFn, values: params.ParamSet, name: str, flat_index: int, h: float, base: float,
        *, noise: float, kink_tolerance: float,
) -> Tuple[float, bool]:
    """ The central difference at ``h``, and whether the coordinate is smooth at this scale. """
    plus = _shifted(loss_fn, values, name, flat_index, +h)
    minus = _shifted(loss_fn, values, name, flat_index, -h)
    half_plus = _shifted(loss_fn, values, name, flat_index, +h / 2)
    half_minus = _shifted(loss_fn, values, name, flat_index, -h / 2)
    central, half_central = (plus - minus) / (2 * h), (half_plus - half_minus) / h
    if abs(central - half_central) > kink_tolerance * max(abs(central), abs(half_central)) + noise:
        return central, False  # a kink within h
    spread = (plus - 2 * base + minus) / h
    half_spread = (half_plus - 2 * base + half_minus) / (h / 2)
    if abs(spread) > 4 * noise and abs(half_spread) > 0.75 * abs(spread):
        return central, False  # a kink at the coordinate itself
    return central, True


def _shifted(loss_fn: LossFn, values: params.ParamSet, name: str, flat_index: int, delta: float) -> float:
    array = np.array(values[name])
    array.reshape(-1)[flat_index] += delta
    return evaluate(loss_fn, values.with_values({name: array}))
