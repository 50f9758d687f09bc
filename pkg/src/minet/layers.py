"""
Fully Connected Towers
ReLU hidden layers followed by a sigmoid output unit.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from autograd.ops import activation, linear, relu, reshape
from autograd.tensor import Tensor
from minet.embedding import uniform_init


@dataclass
class Tower:
    """
    z_l = ReLU(W_l z_{l-1} + b_l) for each hidden layer, then sigmoid(w^T z_L + b).

    Weights are stored out x in and applied to row batches.
    """
    name: str
    layers: List[Tuple[Tensor, Tensor]] = field(default_factory=list)
    output_weight: Tensor = None
    output_bias: Tensor = None

    @classmethod
    def initialize(cls, name: str, input_width: int, fc_dims: Sequence[int], rng: np.random.Generator) -> "Tower":
        layers = []
        width = input_width
        for i, out in enumerate(fc_dims):
            W = Tensor(uniform_init(rng, (out, width), width), requires_grad=True, name=f"{name}.W{i}", copy=False)
            b = Tensor(np.zeros(out), requires_grad=True, name=f"{name}.b{i}")
            layers.append((W, b))
            width = out
        return cls(
            name=name,
            layers=layers,
            output_weight=Tensor(uniform_init(rng, (1, width), width), requires_grad=True, name=f"{name}.w_out", copy=False),
            output_bias=Tensor(np.zeros(1), requires_grad=True, name=f"{name}.b_out"),
        )

    @property
    def input_width(self) -> int:
        weight = self.layers[0][0] if self.layers else self.output_weight
        return weight.shape[1]

    def forward(self, x: Tensor) -> Tensor:
        """B x input_width -> vector of B probabilities"""
        z = x
        for W, b in self.layers:
            z = relu(linear(z, W, b))
        probs = activation(linear(z, self.output_weight, self.output_bias), "sigmoid")
        return reshape(probs, probs.size)

    def parameters(self) -> Dict[str, Tensor]:
        named = {}
        for i, (W, b) in enumerate(self.layers):
            named[f"{self.name}.W{i}"] = W
            named[f"{self.name}.b{i}"] = b
        named[f"{self.name}.w_out"] = self.output_weight
        named[f"{self.name}.b_out"] = self.output_bias
        return named
