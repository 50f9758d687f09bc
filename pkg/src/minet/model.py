"""
MiNet Model
Target tower over m_t = [q_t || v_u p_u || v_s a_s || v_t a_t], source tower
over m_s = [q_s || p_u]. The towers have their own FC parameters and share
only the embedding table.

Ablation variants change the target chain:
    full            item attention + interest gates
    no_attention    uniform item weights, gates fixed to 1
    item_only       item attention, gates fixed to 1
    interest_only   uniform item weights, learned gates
    long_term_only  [q_t || p_u]
    short_src_only  [q_t || a_s] with item attention
    short_tgt_only  [q_t || a_t] with item attention
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from autograd.ops import concat_columns, reshape, split_segments
from autograd.tensor import Tensor
from errors import ArgumentError, ConfigurationError, DomainError
from features.dataset import DEFAULT_MAX_SOURCE_SEQ, DEFAULT_MAX_TARGET_SEQ, Instance
from features.schema import Domain
from minet.attention import (
    DEFAULT_HIDDEN,
    DEFAULT_RANK,
    InterestActivation,
    InterestAttentionParams,
    ItemScoring,
    SourceItemAttentionParams,
    TargetItemAttentionParams,
    aggregate_source_batch,
    aggregate_target_batch,
    build_m_t_batch,
    interest_weights_batch,
)
from minet.baselines import DNNParams, LRParams
from minet.embedding import DEFAULT_EMBEDDING_DIM, EmbeddingTable, ReprSpec, embed_batch
from minet.layers import Tower

logger = logging.getLogger(__name__)

PREDICT_BATCH_SIZE = 2048


class ModelKind(str, Enum):
    MINET = "minet"
    LR = "lr"
    DNN = "dnn"


class AblationVariant(str, Enum):
    FULL = "full"
    NO_ATTENTION = "no_attention"
    ITEM_ONLY = "item_only"
    INTEREST_ONLY = "interest_only"
    LONG_TERM_ONLY = "long_term_only"
    SHORT_SRC_ONLY = "short_src_only"
    SHORT_TGT_ONLY = "short_tgt_only"


UNIFORM_ITEM_WEIGHTS = {AblationVariant.NO_ATTENTION, AblationVariant.INTEREST_ONLY}
LEARNED_GATES = {AblationVariant.FULL, AblationVariant.INTEREST_ONLY}
FOUR_BLOCK = {
    AblationVariant.FULL,
    AblationVariant.NO_ATTENTION,
    AblationVariant.ITEM_ONLY,
    AblationVariant.INTEREST_ONLY,
}
USES_SOURCE_SEQUENCE = FOUR_BLOCK | {AblationVariant.SHORT_SRC_ONLY}
USES_TARGET_SEQUENCE = FOUR_BLOCK | {AblationVariant.SHORT_TGT_ONLY}


class MiNetConfig(BaseModel):
    """Architecture hyperparameters"""
    model_config = ConfigDict(protected_namespaces=())

    model_kind: ModelKind = ModelKind.MINET
    embedding_dim: int = Field(default=DEFAULT_EMBEDDING_DIM, gt=0)
    transfer_rank: int = Field(default=DEFAULT_RANK, gt=0)
    attention_hidden: int = Field(default=DEFAULT_HIDDEN, gt=0)
    fc_dims: List[int] = Field(default_factory=lambda: [256, 128], min_length=1)
    gamma: float = Field(default=0.5, ge=0)
    interest_activation: InterestActivation = InterestActivation.EXP
    ablation: AblationVariant = AblationVariant.FULL
    max_source_seq: int = Field(default=DEFAULT_MAX_SOURCE_SEQ, gt=0)
    max_target_seq: int = Field(default=DEFAULT_MAX_TARGET_SEQ, gt=0)
    item_scoring: ItemScoring = ItemScoring.TARGET_AWARE
    full_rank_transfer: bool = False

    @field_validator("fc_dims")
    def validate_fc_dims(cls, v):
        if any(d <= 0 for d in v):
            raise ValueError(f"fc_dims must be positive, got {v}")
        return v


def target_tower_width(config: MiNetConfig, spec: ReprSpec) -> int:
    if config.ablation in FOUR_BLOCK:
        return 2 * spec.d_t + spec.d_u + spec.d_s
    if config.ablation == AblationVariant.LONG_TERM_ONLY:
        return spec.d_t + spec.d_u
    if config.ablation == AblationVariant.SHORT_SRC_ONLY:
        return spec.d_t + spec.d_s
    return 2 * spec.d_t


@dataclass
class MiNetParams:
    """Every trainable tensor of the model"""
    spec: ReprSpec
    table: EmbeddingTable
    source_attention: SourceItemAttentionParams
    target_attention: TargetItemAttentionParams
    interest_attention: InterestAttentionParams
    target_tower: Tower
    source_tower: Tower

    @classmethod
    def initialize(cls, config: MiNetConfig, spec: ReprSpec, n_features: int, seed: int) -> "MiNetParams":
        rng = np.random.default_rng(seed)
        return cls(
            spec=spec,
            table=EmbeddingTable.initialize(n_features, spec.dim, rng),
            source_attention=SourceItemAttentionParams.initialize(
                spec, config.attention_hidden, config.transfer_rank, rng,
                full_rank=config.full_rank_transfer, scoring=config.item_scoring,
            ),
            target_attention=TargetItemAttentionParams.initialize(
                spec, config.attention_hidden, rng, scoring=config.item_scoring
            ),
            interest_attention=InterestAttentionParams.initialize(spec, config.attention_hidden, rng),
            target_tower=Tower.initialize("target_tower", target_tower_width(config, spec), config.fc_dims, rng),
            source_tower=Tower.initialize("source_tower", spec.d_s + spec.d_u, config.fc_dims, rng),
        )

    def parameters(self) -> Dict[str, Tensor]:
        return {
            "embedding": self.table.matrix,
            **self.source_attention.parameters(),
            **self.target_attention.parameters(),
            **self.interest_attention.parameters(),
            **self.target_tower.parameters(),
            **self.source_tower.parameters(),
        }


ModelParams = Union[MiNetParams, LRParams, DNNParams]


def parameter_count(params: ModelParams) -> int:
    return sum(t.size for t in params.parameters().values())


def build_model(config: MiNetConfig, spec: ReprSpec, n_features: int, seed: int) -> ModelParams:
    """Freshly initialized parameters for the configured model kind"""
    if spec.dim != config.embedding_dim:
        raise ConfigurationError(f"spec dim {spec.dim} differs from embedding_dim {config.embedding_dim}")
    if config.model_kind == ModelKind.LR:
        return LRParams.initialize(n_features, spec)
    if config.model_kind == ModelKind.DNN:
        return DNNParams.initialize(n_features, spec, config.fc_dims, np.random.default_rng(seed))
    return MiNetParams.initialize(config, spec, n_features, seed)


def _check_domain(instances: Sequence[Instance], domain: Domain):
    if not instances:
        raise ArgumentError("empty batch")
    for instance in instances:
        if instance.domain != domain:
            raise DomainError(f"expected {domain.value}-domain instances, got {instance.domain.value}")


@dataclass
class TargetOutputs:
    """Target-tower probabilities plus the attention weights behind them"""
    probs: Tensor
    alpha: Optional[Tensor]
    alpha_segments: np.ndarray
    beta: Optional[Tensor]
    beta_segments: np.ndarray
    gates: Optional[Dict[str, Tensor]]


def forward_target_batch(instances: Sequence[Instance], params: MiNetParams, config: MiNetConfig) -> TargetOutputs:
    """
    Target-domain click probabilities for a batch.

    Raises:
        DomainError: any source-domain instance
    """
    _check_domain(instances, Domain.TARGET)
    variant = config.ablation
    spec = params.spec
    reprs = embed_batch(instances, params.table, spec, with_sequences=variant != AblationVariant.LONG_TERM_ONLY)
    q, p = reprs.q, reprs.p_u
    uniform = variant in UNIFORM_ITEM_WEIGHTS

    a_s = a_t = alpha = beta = gates = None
    if variant in USES_SOURCE_SEQUENCE:
        a_s, alpha = aggregate_source_batch(
            reprs.clicked_source, q, p, params.source_attention, spec, config.item_scoring, uniform=uniform
        )
    if variant in USES_TARGET_SEQUENCE:
        a_t, beta = aggregate_target_batch(
            reprs.clicked_target, q, p, params.target_attention, spec, config.item_scoring, uniform=uniform
        )
    if variant in LEARNED_GATES:
        features = concat_columns([q, p, a_s, a_t])
        gates = interest_weights_batch(features, params.interest_attention, config.interest_activation)

    if variant in FOUR_BLOCK:
        m_t = build_m_t_batch(q, p, a_s, a_t, gates)
    elif variant == AblationVariant.LONG_TERM_ONLY:
        m_t = concat_columns([q, p])
    elif variant == AblationVariant.SHORT_SRC_ONLY:
        m_t = concat_columns([q, a_s])
    else:
        m_t = concat_columns([q, a_t])

    return TargetOutputs(
        probs=params.target_tower.forward(m_t),
        alpha=alpha,
        alpha_segments=reprs.clicked_source.segments,
        beta=beta,
        beta_segments=reprs.clicked_target.segments,
        gates=gates,
    )


def forward_source_batch(instances: Sequence[Instance], params: MiNetParams) -> Tensor:
    """Source-domain click probabilities from m_s = [q_s || p_u]"""
    _check_domain(instances, Domain.SOURCE)
    reprs = embed_batch(instances, params.table, params.spec, with_sequences=False)
    return params.source_tower.forward(concat_columns([reprs.q, reprs.p_u]))


def forward_target(instance: Instance, params: MiNetParams, config: MiNetConfig) -> Tensor:
    """y_t of one target instance as a scalar tensor"""
    return reshape(forward_target_batch([instance], params, config).probs)


def forward_source(instance: Instance, params: MiNetParams, config: Optional[MiNetConfig] = None) -> Tensor:
    """y_s of one source instance as a scalar tensor"""
    return reshape(forward_source_batch([instance], params))


def target_probabilities(params: ModelParams, instances: Sequence[Instance], config: MiNetConfig) -> Tensor:
    """Target click probabilities for any model kind"""
    if isinstance(params, MiNetParams):
        return forward_target_batch(instances, params, config).probs
    _check_domain(instances, Domain.TARGET)
    return params.forward(instances)


def source_probabilities(params: ModelParams, instances: Sequence[Instance]) -> Tensor:
    if not isinstance(params, MiNetParams):
        raise ConfigurationError(f"{type(params).__name__} has no source tower")
    return forward_source_batch(instances, params)


def predict(
    params: ModelParams,
    instances: Sequence[Instance],
    config: MiNetConfig,
    batch_size: int = PREDICT_BATCH_SIZE,
    workers: int = 1,
    domain: Domain = Domain.TARGET,
) -> np.ndarray:
    """
    Probabilities for every instance, evaluated in chunks without recording a graph.

    Chunks run on a thread pool when workers > 1; parameters are only read.
    """
    if not instances:
        return np.zeros(0)
    chunks = [instances[i:i + batch_size] for i in range(0, len(instances), batch_size)]

    def score(chunk: Sequence[Instance]) -> np.ndarray:
        if domain == Domain.SOURCE:
            return source_probabilities(params, chunk).data.copy()
        return target_probabilities(params, chunk, config).data.copy()

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(score, chunks))
    else:
        parts = [score(chunk) for chunk in chunks]
    return np.concatenate(parts)


class AttentionRecord(BaseModel):
    """Item and interest attention of one instance"""
    instance_id: int
    alpha: List[float]
    beta: List[float]
    v_u: float
    v_s: float
    v_t: float

    def format_line(self) -> str:
        alpha = ",".join(f"{a:.6f}" for a in self.alpha)
        beta = ",".join(f"{b:.6f}" for b in self.beta)
        return (
            f"instance_id={self.instance_id}\talpha=[{alpha}]\tbeta=[{beta}]"
            f"\tv_u={self.v_u:.6f}\tv_s={self.v_s:.6f}\tv_t={self.v_t:.6f}"
        )


def inspect_attention(params: MiNetParams, instances: Sequence[Instance], config: MiNetConfig) -> List[AttentionRecord]:
    """
    Attention weights of each instance.

    Variants without learned gates report v_* = 1; variants that drop a
    sequence report an empty weight list for it.
    """
    if not isinstance(params, MiNetParams):
        raise ArgumentError(f"attention inspection needs a MiNet model, got {type(params).__name__}")
    outputs = forward_target_batch(instances, params, config)
    n = len(instances)

    def per_instance(weights: Optional[Tensor], segments: np.ndarray) -> List[List[float]]:
        if weights is None:
            return [[] for _ in range(n)]
        return [list(map(float, w)) for w in split_segments(weights.data, segments, n)]

    alphas = per_instance(outputs.alpha, outputs.alpha_segments)
    betas = per_instance(outputs.beta, outputs.beta_segments)
    gates = {k: v.data for k, v in outputs.gates.items()} if outputs.gates else None
    records = []
    for b, instance in enumerate(instances):
        records.append(AttentionRecord(
            instance_id=instance.instance_id,
            alpha=alphas[b],
            beta=betas[b],
            v_u=float(gates["u"][b]) if gates else 1.0,
            v_s=float(gates["s"][b]) if gates else 1.0,
            v_t=float(gates["t"][b]) if gates else 1.0,
        ))
    return records
