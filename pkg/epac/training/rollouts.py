"""
The unrolled coding chains of the error-propagation-aware training.

A rollout codes the first frame of a clip as an I-frame (in the inference
mode, with the intra codec as it is), and then ``T`` P-frames, each one
referencing the reconstruction of the previous step as a tensor of the same
graph. The gradients of the rollout loss therefore flow through the whole
chain of the reconstructions: the coding of the step ``t`` is optimised also
for how good a reference it makes for the steps after it.

The loss of the rollout is the mean of the P-frame losses; the I-frame's loss
is not a part of it.
"""
import dataclasses
from typing import List, Sequence

import numpy as np

from epac.autodiff import graphs
from epac.codec import coding
from epac.codec import entropy
from epac.codec import models
from epac.structs import frames


@dataclasses.dataclass
class RolloutStep:
    index: int
    terms: coding.PFrameTerms

    @property
    def loss(self) -> graphs.Tensor:
        return self.terms.loss

    @property
    def reconstruction(self) -> graphs.Tensor:
        return self.terms.reconstruction


@dataclasses.dataclass
class Rollout:
    intra: coding.IFrameTerms
    steps: List[RolloutStep]
    loss: graphs.Tensor
    """ ``L^T = (1/T) Σ L_t`` over the P-frame steps. """

    def step_losses(self) -> List[float]:
        return [step.loss.item() for step in self.steps]


def unroll(
        bound: graphs.Bound,
        model: models.CodecModel,
        clip: Sequence[frames.FrameBuffer],
        length: int,
        rng: np.random.Generator,
        *,
        provenance_checks: bool = False,
) -> Rollout:
    """ Build the rollout of ``length`` P-frames after the first frame of the clip. """
    if length < 1:
        raise ValueError(f"A rollout needs at least one P-frame, got {length}.")
    if len(clip) < length + 1:
        raise ValueError(f"A rollout of {length} P-frames needs {length + 1} frames, got {len(clip)}.")
    graph = next(iter(bound.values())).graph
    originals = [graph.constant(frame.batch, frame.provenance) for frame in clip[:length + 1]]

    intra = coding.code_i_frame(bound, model, originals[0], entropy.Mode.INFER)
    ref = intra.reconstruction
    steps: List[RolloutStep] = []
    for index in range(1, length + 1):
        if provenance_checks:
            coding.require_reconstructed(ref, f"rollout step #{index}")
        terms = coding.code_p_frame(bound, model, originals[index], ref, entropy.Mode.TRAIN, rng)
        steps.append(RolloutStep(index=index, terms=terms))
        ref = terms.reconstruction

    total = steps[0].loss
    for step in steps[1:]:
        total = total + step.loss
    return Rollout(intra=intra, steps=steps, loss=total * (1.0 / length))
