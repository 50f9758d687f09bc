"""
Shared Embedding Table
One D x N matrix E whose column i embeds feature i, shared by users, news
and ads. Field values are looked up and concatenated in field order; a
multi-valued field is the mean of its members' columns.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from autograd.ops import gather_fields, reshape
from autograd.tensor import Tensor
from errors import FeatureIndexError, SchemaError
from features.dataset import Instance, ItemIds
from features.schema import Domain, Schema

logger = logging.getLogger(__name__)

DEFAULT_EMBEDDING_DIM = 10


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]"""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class EmbeddingTable:
    """Trainable D x N embedding matrix"""

    def __init__(self, matrix: Tensor):
        if len(matrix.shape) != 2:
            raise SchemaError(f"embedding matrix must be D x N, got {matrix.shape}")
        self.matrix = matrix
        self.matrix.requires_grad = True
        self.matrix.name = "embedding"

    @classmethod
    def initialize(cls, n_features: int, dim: int, rng: np.random.Generator) -> "EmbeddingTable":
        return cls(Tensor(uniform_init(rng, (dim, n_features), dim), copy=False))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def column(self, feature_id: int) -> np.ndarray:
        return self.matrix.data[:, feature_id]


class ReprSpec(BaseModel):
    """Field counts per group and the derived representation widths"""
    dim: int = Field(default=DEFAULT_EMBEDDING_DIM, gt=0)
    user_field_count: int = Field(..., gt=0)
    source_field_count: int = Field(..., gt=0)
    target_field_count: int = Field(..., gt=0)

    @classmethod
    def from_schema(cls, schema: Schema, dim: int = DEFAULT_EMBEDDING_DIM) -> "ReprSpec":
        try:
            return cls(
                dim=dim,
                user_field_count=schema.field_count(Domain.USER),
                source_field_count=schema.field_count(Domain.SOURCE),
                target_field_count=schema.field_count(Domain.TARGET),
            )
        except ValueError as e:
            raise SchemaError(f"schema needs at least one field per group: {e}") from None

    @property
    def d_u(self) -> int:
        return self.dim * self.user_field_count

    @property
    def d_s(self) -> int:
        return self.dim * self.source_field_count

    @property
    def d_t(self) -> int:
        return self.dim * self.target_field_count

    def item_width(self, domain: Domain) -> int:
        return self.d_s if domain == Domain.SOURCE else self.d_t

    def item_field_count(self, domain: Domain) -> int:
        return self.source_field_count if domain == Domain.SOURCE else self.target_field_count


FeatureIds = Union[Sequence[int], ItemIds]


def _as_fields(feature_ids: FeatureIds) -> ItemIds:
    """Plain id lists are one single-valued field per id"""
    return tuple((f,) if isinstance(f, (int, np.integer)) else tuple(f) for f in feature_ids)


def concat_items(*groups: ItemIds) -> ItemIds:
    """Join field groups into one item, e.g. ad fields followed by user fields"""
    return tuple(members for group in groups for members in group)


def pack_items(items: Sequence[ItemIds], n_fields: int, n_features: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Index and pooling weights for gather_fields.

    Returns:
        (index, weights), both of shape (len(items), n_fields, K) where K is
        the largest member count; each field's weights sum to 1.

    Raises:
        SchemaError: an item with the wrong number of fields
        FeatureIndexError: a feature id outside [0, n_features)
    """
    width = max((len(members) for item in items for members in item), default=1)
    index = np.zeros((len(items), n_fields, width), dtype=np.int64)
    weights = np.zeros((len(items), n_fields, width))
    for b, item in enumerate(items):
        if len(item) != n_fields:
            raise SchemaError(f"item has {len(item)} fields, expected {n_fields}")
        for f, members in enumerate(item):
            if not members:
                raise SchemaError(f"field {f} has no features")
            for k, feature_id in enumerate(members):
                if not 0 <= feature_id < n_features:
                    raise FeatureIndexError(f"feature id {feature_id} outside [0, {n_features})")
                index[b, f, k] = feature_id
                weights[b, f, k] = 1.0 / len(members)
    return index, weights


def embed_items(items: Sequence[ItemIds], table: EmbeddingTable, n_fields: int) -> Tensor:
    """Batch of items -> len(items) x (n_fields * D) matrix"""
    index, weights = pack_items(items, n_fields, table.n_features)
    return gather_fields(table.matrix, index, weights)


def lookup_concat(feature_ids: FeatureIds, table: EmbeddingTable) -> Tensor:
    """
    Concatenate the embedding of every field, in order.

    Args:
        feature_ids: One id per single-valued field, or one member tuple per field
        table: Embedding table

    Returns:
        Vector of length D * number of fields
    """
    fields = _as_fields(feature_ids)
    if not fields:
        raise SchemaError("lookup_concat needs at least one field")
    rows = embed_items([fields], table, len(fields))
    return reshape(rows, rows.size)


@dataclass
class Representations:
    """Embedded vectors of one instance"""
    p_u: Tensor
    q: Tensor
    clicked_source: List[Tensor]
    clicked_target: List[Tensor]


def _check_fields(groups: ItemIds, expected: int, what: str):
    if len(groups) != expected:
        raise SchemaError(f"{what} has {len(groups)} fields, expected {expected}")


def build_reprs(instance: Instance, table: EmbeddingTable, spec: ReprSpec) -> Representations:
    """
    p_u, q and one vector per clicked item for a single instance.

    q is the ad for a target-domain instance and the news item for a
    source-domain one.
    """
    _check_fields(instance.user_feature_ids, spec.user_field_count, "user")
    _check_fields(instance.item_feature_ids, spec.item_field_count(instance.domain), "item")
    for item in instance.clicked_source_items:
        _check_fields(item, spec.source_field_count, "clicked source item")
    for item in instance.clicked_target_items:
        _check_fields(item, spec.target_field_count, "clicked target item")

    return Representations(
        p_u=lookup_concat(instance.user_feature_ids, table),
        q=lookup_concat(instance.item_feature_ids, table),
        clicked_source=[lookup_concat(item, table) for item in instance.clicked_source_items],
        clicked_target=[lookup_concat(item, table) for item in instance.clicked_target_items],
    )


@dataclass
class ClickedBatch:
    """All clicked items of a batch, flattened, with the owning instance of each row"""
    rows: Optional[Tensor]
    segments: np.ndarray
    n_segments: int

    @property
    def empty(self) -> bool:
        return self.rows is None

    def counts(self) -> np.ndarray:
        return np.bincount(self.segments, minlength=self.n_segments)


@dataclass
class BatchReprs:
    """Batched representations: p_u (B x D_u), q (B x D_q) and both clicked sequences"""
    p_u: Tensor
    q: Tensor
    clicked_source: ClickedBatch
    clicked_target: ClickedBatch

    @property
    def batch_size(self) -> int:
        return self.p_u.shape[0]


def _embed_clicked(sequences: Sequence[Sequence[ItemIds]], table: EmbeddingTable, n_fields: int) -> ClickedBatch:
    items = [item for sequence in sequences for item in sequence]
    segments = np.repeat(np.arange(len(sequences)), [len(s) for s in sequences]).astype(np.int64)
    rows = embed_items(items, table, n_fields) if items else None
    return ClickedBatch(rows=rows, segments=segments, n_segments=len(sequences))


def embed_batch(
    instances: Sequence[Instance],
    table: EmbeddingTable,
    spec: ReprSpec,
    with_sequences: bool = True,
) -> BatchReprs:
    """
    Embed a single-domain batch.

    Args:
        instances: Non-empty batch, all from one domain
        table: Embedding table
        spec: Field counts
        with_sequences: Skip the clicked sequences (source tower and baselines do not use them)
    """
    domain = instances[0].domain
    empty = [()] * len(instances)
    return BatchReprs(
        p_u=embed_items([i.user_feature_ids for i in instances], table, spec.user_field_count),
        q=embed_items([i.item_feature_ids for i in instances], table, spec.item_field_count(domain)),
        clicked_source=_embed_clicked(
            [i.clicked_source_items for i in instances] if with_sequences else empty, table, spec.source_field_count
        ),
        clicked_target=_embed_clicked(
            [i.clicked_target_items for i in instances] if with_sequences else empty, table, spec.target_field_count
        ),
    )
