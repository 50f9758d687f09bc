"""
Item-Level and Interest-Level Attention

Item level: every clicked news/ad is scored against the target ad and the
user, scores are softmaxed per instance and the clicked vectors averaged
with those weights (a_s, a_t). Clicked news first pass through a low-rank
transfer M = M1 M2 into the ad space.

Interest level: three gates v_u, v_s, v_t scale the long-term interest
p_u and the short-term interests a_s, a_t inside m_t.

Batched functions work on every clicked item of a batch at once, each row
tagged with the index of its instance. The single-instance functions wrap
them with a batch of one.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from autograd.ops import (
    activation,
    add_bias,
    concat,
    concat_columns,
    linear,
    matmul,
    mul,
    project,
    relu,
    reshape,
    scale_rows,
    segment_softmax,
    segment_weighted_sum,
    take_rows,
    transpose,
)
from autograd.tensor import Tensor
from errors import ArgumentError, DimensionError
from minet.embedding import ClickedBatch, ReprSpec, uniform_init

logger = logging.getLogger(__name__)

DEFAULT_RANK = 10
DEFAULT_HIDDEN = 64
INTEREST_BRANCHES = ("u", "s", "t")


class InterestActivation(str, Enum):
    """exp gates are unbounded above; sigmoid gates stay below 1"""
    EXP = "exp"
    SIGMOID = "sigmoid"


class ItemScoring(str, Enum):
    """Score a clicked item with the target ad and user, or from the item alone"""
    TARGET_AWARE = "target_aware"
    ITEM_ALONE = "item_alone"


def _param(rng: np.random.Generator, name: str, *shape: int, fan_in: Optional[int] = None) -> Tensor:
    tensor = Tensor(uniform_init(rng, shape, fan_in or shape[-1]), requires_grad=True, copy=False)
    tensor.name = name
    return tensor


@dataclass
class SourceItemAttentionParams:
    """
    W_s: D_h x (D_s + 2 D_t + D_u), h_s: D_h and the transfer M1 (D_t x C), M2 (C x D_s).

    With a full-rank transfer M (D_t x D_s) replaces M1 and M2. With
    item-alone scoring W_s is D_h x D_s.
    """
    W: Tensor
    h: Tensor
    M1: Optional[Tensor] = None
    M2: Optional[Tensor] = None
    M: Optional[Tensor] = None

    @classmethod
    def initialize(
        cls,
        spec: ReprSpec,
        hidden: int,
        rank: int,
        rng: np.random.Generator,
        full_rank: bool = False,
        scoring: ItemScoring = ItemScoring.TARGET_AWARE,
    ) -> "SourceItemAttentionParams":
        width = spec.d_s if scoring == ItemScoring.ITEM_ALONE else spec.d_s + 2 * spec.d_t + spec.d_u
        W = _param(rng, "source_attention.W", hidden, width)
        h = _param(rng, "source_attention.h", hidden)
        if full_rank:
            return cls(W=W, h=h, M=_param(rng, "source_attention.M", spec.d_t, spec.d_s))
        return cls(
            W=W,
            h=h,
            M1=_param(rng, "source_attention.M1", spec.d_t, rank),
            M2=_param(rng, "source_attention.M2", rank, spec.d_s),
        )

    def parameters(self) -> Dict[str, Tensor]:
        named = {"W": self.W, "h": self.h, "M1": self.M1, "M2": self.M2, "M": self.M}
        return {f"source_attention.{k}": v for k, v in named.items() if v is not None}

    def transfer_parameter_count(self) -> int:
        if self.M is not None:
            return self.M.size
        return self.M1.size + self.M2.size


@dataclass
class TargetItemAttentionParams:
    """W_t: D_h x (3 D_t + D_u) and h_t: D_h; no transfer is needed inside one domain"""
    W: Tensor
    h: Tensor

    @classmethod
    def initialize(
        cls,
        spec: ReprSpec,
        hidden: int,
        rng: np.random.Generator,
        scoring: ItemScoring = ItemScoring.TARGET_AWARE,
    ) -> "TargetItemAttentionParams":
        width = spec.d_t if scoring == ItemScoring.ITEM_ALONE else 3 * spec.d_t + spec.d_u
        return cls(W=_param(rng, "target_attention.W", hidden, width), h=_param(rng, "target_attention.h", hidden))

    def parameters(self) -> Dict[str, Tensor]:
        return {"target_attention.W": self.W, "target_attention.h": self.h}


@dataclass
class InterestBranch:
    """V: D_h x (D_s + 2 D_t + D_u), g: D_h and a scalar bias b stored as a 1-vector"""
    V: Tensor
    g: Tensor
    b: Tensor


@dataclass
class InterestAttentionParams:
    u: InterestBranch
    s: InterestBranch
    t: InterestBranch

    @classmethod
    def initialize(cls, spec: ReprSpec, hidden: int, rng: np.random.Generator) -> "InterestAttentionParams":
        width = spec.d_s + 2 * spec.d_t + spec.d_u
        branches = {}
        for key in INTEREST_BRANCHES:
            branches[key] = InterestBranch(
                V=_param(rng, f"interest_attention.V_{key}", hidden, width),
                g=_param(rng, f"interest_attention.g_{key}", hidden),
                b=Tensor(np.zeros(1), requires_grad=True, name=f"interest_attention.b_{key}"),
            )
        return cls(**branches)

    def branch(self, key: str) -> InterestBranch:
        return getattr(self, key)

    def parameters(self) -> Dict[str, Tensor]:
        named = {}
        for key in INTEREST_BRANCHES:
            branch = self.branch(key)
            named[f"interest_attention.V_{key}"] = branch.V
            named[f"interest_attention.g_{key}"] = branch.g
            named[f"interest_attention.b_{key}"] = branch.b
        return named


# Transfer


def transfer_rows(rows: Tensor, params: SourceItemAttentionParams) -> Tensor:
    """Map n x D_s source rows into the target space (n x D_t); M1 M2 is never formed"""
    if params.M is not None:
        if rows.shape[1] != params.M.shape[1]:
            raise DimensionError(f"transfer: rows {rows.shape} do not fit M {params.M.shape}")
        return matmul(rows, transpose(params.M))
    if rows.shape[1] != params.M2.shape[1]:
        raise DimensionError(f"transfer: rows {rows.shape} do not fit M2 {params.M2.shape}")
    return matmul(matmul(rows, transpose(params.M2)), transpose(params.M1))


def transfer(r_si: Tensor, params: SourceItemAttentionParams) -> Tensor:
    """M r_si computed as M1 (M2 r_si)"""
    if len(r_si.shape) != 1:
        raise DimensionError(f"transfer expects a vector, got {r_si.shape}")
    out = transfer_rows(reshape(r_si, 1, r_si.size), params)
    return reshape(out, out.size)


# Item-level attention


def score_rows(
    rows: Tensor,
    q_rows: Optional[Tensor],
    p_rows: Optional[Tensor],
    W: Tensor,
    h: Tensor,
    mapped: Optional[Tensor] = None,
) -> Tensor:
    """
    h^T ReLU(W [r || q || p || mapped(r) * q]) for every row, or h^T ReLU(W r)
    when q_rows is None.

    Returns:
        Vector of n scores
    """
    if q_rows is None:
        features = rows
    else:
        crossed = mul(mapped if mapped is not None else rows, q_rows)
        features = concat_columns([rows, q_rows, p_rows, crossed])
    hidden = relu(linear(features, W))
    scores = project(hidden, h)
    return reshape(scores, scores.size)


def _uniform_weights(clicked: ClickedBatch) -> Tensor:
    counts = clicked.counts()
    return Tensor(1.0 / counts[clicked.segments], copy=False)


def _zeros(rows: int, width: int) -> Tensor:
    return Tensor(np.zeros((rows, width)), copy=False)


def attend(
    clicked: ClickedBatch,
    width: int,
    scorer,
    uniform: bool = False,
) -> Tuple[Tensor, Optional[Tensor]]:
    """
    Aggregate clicked rows per instance.

    Args:
        clicked: Flattened clicked items
        width: Row width, used for the all-empty case
        scorer: Callable building the score vector from the rows
        uniform: Equal weights 1/|sequence| instead of attention

    Returns:
        (B x width aggregate, flat weight vector or None when nothing was clicked).
        Instances with no clicked items aggregate to the zero vector.
    """
    if clicked.empty:
        return _zeros(clicked.n_segments, width), None
    if uniform:
        weights = _uniform_weights(clicked)
    else:
        weights = segment_softmax(scorer(clicked.rows), clicked.segments, clicked.n_segments)
    return segment_weighted_sum(weights, clicked.rows, clicked.segments, clicked.n_segments), weights


def aggregate_source_batch(
    clicked: ClickedBatch,
    q_t: Tensor,
    p_u: Tensor,
    params: SourceItemAttentionParams,
    spec: ReprSpec,
    scoring: ItemScoring = ItemScoring.TARGET_AWARE,
    uniform: bool = False,
) -> Tuple[Tensor, Optional[Tensor]]:
    """a_s for each instance of a batch, with the flat alpha weights"""

    def scorer(rows: Tensor) -> Tensor:
        if scoring == ItemScoring.ITEM_ALONE:
            return score_rows(rows, None, None, params.W, params.h)
        q_rows = take_rows(q_t, clicked.segments)
        p_rows = take_rows(p_u, clicked.segments)
        return score_rows(rows, q_rows, p_rows, params.W, params.h, mapped=transfer_rows(rows, params))

    return attend(clicked, spec.d_s, scorer, uniform=uniform)


def aggregate_target_batch(
    clicked: ClickedBatch,
    q_t: Tensor,
    p_u: Tensor,
    params: TargetItemAttentionParams,
    spec: ReprSpec,
    scoring: ItemScoring = ItemScoring.TARGET_AWARE,
    uniform: bool = False,
) -> Tuple[Tensor, Optional[Tensor]]:
    """a_t for each instance of a batch, with the flat beta weights"""

    def scorer(rows: Tensor) -> Tensor:
        if scoring == ItemScoring.ITEM_ALONE:
            return score_rows(rows, None, None, params.W, params.h)
        q_rows = take_rows(q_t, clicked.segments)
        p_rows = take_rows(p_u, clicked.segments)
        return score_rows(rows, q_rows, p_rows, params.W, params.h)

    return attend(clicked, spec.d_t, scorer, uniform=uniform)


def _row(vector: Tensor, width: int, what: str) -> Tensor:
    if vector.shape != [width]:
        raise DimensionError(f"{what}: expected a vector of length {width}, got {vector.shape}")
    return reshape(vector, 1, width)


def _clicked_batch(clicked: Sequence[Tensor], width: int, what: str) -> ClickedBatch:
    if not clicked:
        return ClickedBatch(rows=None, segments=np.zeros(0, dtype=np.int64), n_segments=1)
    rows = _stack_rows([_row(r, width, what) for r in clicked])
    return ClickedBatch(rows=rows, segments=np.zeros(len(clicked), dtype=np.int64), n_segments=1)


def _stack_rows(rows: Sequence[Tensor]) -> Tensor:
    flat = concat([reshape(r, r.size) for r in rows])
    return reshape(flat, len(rows), rows[0].shape[1])


def score_source_item(
    r_si: Tensor,
    q_t: Tensor,
    p_u: Tensor,
    params: SourceItemAttentionParams,
    spec: ReprSpec,
) -> Tensor:
    """alpha~_i = h_s^T ReLU(W_s [r_si || q_t || p_u || M r_si * q_t]) as a scalar tensor"""
    row = _row(r_si, spec.d_s, "clicked source item")
    q_row = _row(q_t, spec.d_t, "q_t")
    p_row = _row(p_u, spec.d_u, "p_u")
    scores = score_rows(row, q_row, p_row, params.W, params.h, mapped=transfer_rows(row, params))
    return reshape(scores)


def score_target_item(
    r_tj: Tensor,
    q_t: Tensor,
    p_u: Tensor,
    params: TargetItemAttentionParams,
    spec: ReprSpec,
) -> Tensor:
    """beta~_j = h_t^T ReLU(W_t [r_tj || q_t || p_u || r_tj * q_t]) as a scalar tensor"""
    row = _row(r_tj, spec.d_t, "clicked target item")
    scores = score_rows(row, _row(q_t, spec.d_t, "q_t"), _row(p_u, spec.d_u, "p_u"), params.W, params.h)
    return reshape(scores)


def _single(aggregate: Tensor, weights: Optional[Tensor]) -> Tuple[Tensor, np.ndarray]:
    vector = reshape(aggregate, aggregate.size)
    return vector, (weights.data.copy() if weights is not None else np.zeros(0))


def aggregate_source(
    clicked: Sequence[Tensor],
    q_t: Tensor,
    p_u: Tensor,
    params: SourceItemAttentionParams,
    spec: ReprSpec,
    scoring: ItemScoring = ItemScoring.TARGET_AWARE,
) -> Tuple[Tensor, np.ndarray]:
    """
    a_s = sum_i alpha_i r_si with alpha the softmax of the item scores.

    Returns:
        (a_s of length D_s, alpha). An empty sequence gives zeros and an
        empty alpha.
    """
    batch = _clicked_batch(clicked, spec.d_s, "clicked source item")
    aggregate, weights = aggregate_source_batch(
        batch, _row(q_t, spec.d_t, "q_t"), _row(p_u, spec.d_u, "p_u"), params, spec, scoring
    )
    return _single(aggregate, weights)


def aggregate_target(
    clicked: Sequence[Tensor],
    q_t: Tensor,
    p_u: Tensor,
    params: TargetItemAttentionParams,
    spec: ReprSpec,
    scoring: ItemScoring = ItemScoring.TARGET_AWARE,
) -> Tuple[Tensor, np.ndarray]:
    """a_t = sum_j beta_j r_tj; returns (a_t of length D_t, beta)"""
    batch = _clicked_batch(clicked, spec.d_t, "clicked target item")
    aggregate, weights = aggregate_target_batch(
        batch, _row(q_t, spec.d_t, "q_t"), _row(p_u, spec.d_u, "p_u"), params, spec, scoring
    )
    return _single(aggregate, weights)


# Interest-level attention


def interest_weights_batch(
    features: Tensor,
    params: InterestAttentionParams,
    kind: InterestActivation = InterestActivation.EXP,
) -> Dict[str, Tensor]:
    """
    v_* = act(g_*^T ReLU(V_* [q_t || p_u || a_s || a_t]) + b_*) for a batch.

    Returns:
        {'u': v_u, 's': v_s, 't': v_t}, each a vector of B gates
    """
    gates = {}
    for key in INTEREST_BRANCHES:
        branch = params.branch(key)
        if features.shape[1] != branch.V.shape[1]:
            raise DimensionError(f"interest input {features.shape} does not fit V_{key} {branch.V.shape}")
        logits = add_bias(project(relu(linear(features, branch.V)), branch.g), branch.b)
        gate = activation(logits, InterestActivation(kind).value)
        gates[key] = reshape(gate, gate.size)
    return gates


def interest_weights(
    q_t: Tensor,
    p_u: Tensor,
    a_s: Tensor,
    a_t: Tensor,
    params: InterestAttentionParams,
    kind: InterestActivation = InterestActivation.EXP,
) -> Tuple[Tensor, Tensor, Tensor]:
    """(v_u, v_s, v_t) as scalar tensors"""
    for vector in (q_t, p_u, a_s, a_t):
        if len(vector.shape) != 1:
            raise DimensionError(f"interest_weights expects vectors, got {vector.shape}")
    features = concat([q_t, p_u, a_s, a_t])
    gates = interest_weights_batch(reshape(features, 1, features.size), params, kind)
    return tuple(reshape(gates[key]) for key in INTEREST_BRANCHES)


def build_m_t_batch(q_t: Tensor, p_u: Tensor, a_s: Tensor, a_t: Tensor, gates: Optional[Dict[str, Tensor]]) -> Tensor:
    """[q_t || v_u p_u || v_s a_s || v_t a_t] row-wise; gates None means all ones"""
    if gates is None:
        return concat_columns([q_t, p_u, a_s, a_t])
    return concat_columns([
        q_t,
        scale_rows(p_u, gates["u"]),
        scale_rows(a_s, gates["s"]),
        scale_rows(a_t, gates["t"]),
    ])


def build_m_t(
    q_t: Tensor,
    p_u: Tensor,
    a_s: Tensor,
    a_t: Tensor,
    weights: Tuple[Tensor, Tensor, Tensor],
) -> Tensor:
    """m_t = [q_t || v_u p_u || v_s a_s || v_t a_t]; q_t is never scaled"""
    for w in weights:
        if np.any(w.data < 0):
            raise ArgumentError("interest weights must be non-negative")
    rows = [reshape(v, 1, v.size) for v in (q_t, p_u, a_s, a_t)]
    gates = {key: reshape(w, 1) for key, w in zip(INTEREST_BRANCHES, weights)}
    m_t = build_m_t_batch(*rows, gates)
    return reshape(m_t, m_t.size)
