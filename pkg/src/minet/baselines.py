"""
Target-Only Baselines
LR: a generalized linear model over user and ad features.
DNN: shared-style embeddings of [q_t || p_u] through an FC tower, with no
behavior sequences and no attention.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from autograd.ops import activation, add_bias, gather_fields, project, reshape
from autograd.tensor import Tensor
from errors import ArgumentError, DomainError
from features.dataset import Instance
from features.schema import Domain
from minet.embedding import EmbeddingTable, ReprSpec, concat_items, pack_items
from minet.layers import Tower

logger = logging.getLogger(__name__)

BASELINE_KINDS = ("lr", "dnn")


def _check_target(instances: Sequence[Instance]):
    for instance in instances:
        if instance.domain != Domain.TARGET:
            raise DomainError(f"baselines score target-domain instances, got {instance.domain.value}")


@dataclass
class LRParams:
    """One weight per feature (stored 1 x N) and a bias"""
    weights: Tensor
    bias: Tensor
    spec: ReprSpec

    @classmethod
    def initialize(cls, n_features: int, spec: ReprSpec) -> "LRParams":
        return cls(
            weights=Tensor(np.zeros((1, n_features)), requires_grad=True, name="lr.weights"),
            bias=Tensor(np.zeros(1), requires_grad=True, name="lr.bias"),
            spec=spec,
        )

    def parameters(self) -> Dict[str, Tensor]:
        return {"lr.weights": self.weights, "lr.bias": self.bias}

    def forward(self, instances: Sequence[Instance]) -> Tensor:
        """sigmoid(sum of user and ad feature weights + bias); multi-valued fields contribute their mean"""
        _check_target(instances)
        n_fields = self.spec.user_field_count + self.spec.target_field_count
        items = [concat_items(i.user_feature_ids, i.item_feature_ids) for i in instances]
        index, weights = pack_items(items, n_fields, self.weights.shape[1])
        per_field = gather_fields(self.weights, index, weights)
        logits = add_bias(project(per_field, Tensor(np.ones(n_fields))), self.bias)
        probs = activation(logits, "sigmoid")
        return reshape(probs, probs.size)


@dataclass
class DNNParams:
    """Embedding table plus an FC tower over [q_t || p_u]"""
    table: EmbeddingTable
    tower: Tower
    spec: ReprSpec

    @classmethod
    def initialize(
        cls, n_features: int, spec: ReprSpec, fc_dims: Sequence[int], rng: np.random.Generator
    ) -> "DNNParams":
        table = EmbeddingTable.initialize(n_features, spec.dim, rng)
        tower = Tower.initialize("dnn_tower", spec.d_t + spec.d_u, fc_dims, rng)
        return cls(table=table, tower=tower, spec=spec)

    def parameters(self) -> Dict[str, Tensor]:
        return {"embedding": self.table.matrix, **self.tower.parameters()}

    def forward(self, instances: Sequence[Instance]) -> Tensor:
        """Clicked sequences are never read"""
        _check_target(instances)
        n_fields = self.spec.target_field_count + self.spec.user_field_count
        items = [concat_items(i.item_feature_ids, i.user_feature_ids) for i in instances]
        index, weights = pack_items(items, n_fields, self.table.n_features)
        return self.tower.forward(gather_fields(self.table.matrix, index, weights))


def forward_baseline(instance: Instance, kind: str, params) -> Tensor:
    """
    Click probability of one target instance under a baseline.

    Raises:
        ArgumentError: kind is not 'lr' or 'dnn', or params do not match kind
        DomainError: source-domain instance
    """
    expected = {"lr": LRParams, "dnn": DNNParams}.get(kind)
    if expected is None:
        raise ArgumentError(f"unknown baseline kind: {kind}")
    if not isinstance(params, expected):
        raise ArgumentError(f"baseline {kind} needs {expected.__name__}, got {type(params).__name__}")
    return reshape(params.forward([instance]))
