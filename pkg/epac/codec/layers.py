"""
Convolutional layers: their declarations, initialisation, and application.

A layer is declared once (`Conv`) and then used both to initialise
its parameters (``<name>.weight``, ``<name>.bias``) and to apply them
to the tensors bound into a graph.
"""
import dataclasses
from typing import Dict

import numpy as np

from epac.autodiff import graphs
from epac.autodiff import ops
from epac.structs import params


@dataclasses.dataclass(frozen=True)
class Conv:
    name: str
    side: params.Side
    cin: int
    cout: int
    kernel: int = 3
    stride: int = 1
    zero_init: bool = False
    """ The final layers start at zero, so that the untrained codec copies the reference. """

    @property
    def weight(self) -> str:
        return f'{self.name}.weight'

    @property
    def bias(self) -> str:
        return f'{self.name}.bias'

    def initial(self, rng: np.random.Generator, *, zero_final: bool = True) -> Dict[str, np.ndarray]:
        shape = (self.cout, self.cin, self.kernel, self.kernel)
        if self.zero_init and zero_final:
            weight = np.zeros(shape)
        else:
            fan_in = self.cin * self.kernel * self.kernel
            weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
            if self.zero_init:
                weight *= 0.1
        return {self.weight: weight, self.bias: np.zeros(self.cout)}

    def __call__(self, bound: graphs.Bound, x: graphs.Tensor) -> graphs.Tensor:
        return ops.conv2d(x, bound[self.weight], bound[self.bias],
                          stride=self.stride, padding=self.kernel // 2)
