"""
Tests for embedding lookup, item-level attention, transfer and interest gates
"""

import numpy as np
import pytest

from autograd.gradcheck import gradcheck
from autograd.ops import concat, total
from autograd.tensor import Tape, Tensor, backward
from errors import ArgumentError, DimensionError, FeatureIndexError, SchemaError
from features.schema import Domain
from minet.attention import (
    InterestActivation,
    InterestAttentionParams,
    ItemScoring,
    SourceItemAttentionParams,
    TargetItemAttentionParams,
    aggregate_source,
    aggregate_target,
    build_m_t,
    interest_weights,
    score_source_item,
    score_target_item,
    transfer,
)
from minet.embedding import EmbeddingTable, ReprSpec, build_reprs, embed_batch, lookup_concat, pack_items


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def spec():
    return ReprSpec(dim=3, user_field_count=2, source_field_count=2, target_field_count=2)


@pytest.fixture
def source_params(spec, rng):
    return SourceItemAttentionParams.initialize(spec, hidden=5, rank=2, rng=rng)


@pytest.fixture
def target_params(spec, rng):
    return TargetItemAttentionParams.initialize(spec, hidden=5, rng=rng)


def _vec(rng, n):
    return Tensor(rng.normal(size=n))


def _count(params):
    return sum(t.size for t in params.parameters().values())


# Embedding


def test_lookup_concat_field_order(rng):
    table = EmbeddingTable.initialize(6, 2, rng)
    out = lookup_concat([3, 1], table)
    np.testing.assert_array_equal(out.data, np.concatenate([table.column(3), table.column(1)]))


def test_lookup_concat_mean_pools_bags(rng):
    table = EmbeddingTable.initialize(6, 2, rng)
    out = lookup_concat([(2, 4), (5,)], table)
    expected = np.concatenate([(table.column(2) + table.column(4)) / 2, table.column(5)])
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-15)


def test_lookup_rejects_out_of_range(rng):
    table = EmbeddingTable.initialize(6, 2, rng)
    with pytest.raises(FeatureIndexError):
        lookup_concat([6], table)


def test_pack_items_field_count():
    with pytest.raises(SchemaError):
        pack_items([((1,), (2,))], n_fields=3, n_features=5)


def test_repr_spec_widths(tiny_schema):
    spec = ReprSpec.from_schema(tiny_schema, dim=4)
    assert (spec.d_u, spec.d_s, spec.d_t) == (8, 8, 8)
    assert spec.item_width(Domain.SOURCE) == 8


def test_build_reprs_empty_sequences(tiny_spec, instance_factory, rng):
    table = EmbeddingTable.initialize(24, tiny_spec.dim, rng)
    instance = instance_factory(rng, n_source=0, n_target=0)
    reprs = build_reprs(instance, table, tiny_spec)
    assert reprs.clicked_source == [] and reprs.clicked_target == []
    assert reprs.p_u.shape == [tiny_spec.d_u]
    assert reprs.q.shape == [tiny_spec.d_t]


def test_build_reprs_schema_mismatch(rng, instance_factory):
    spec = ReprSpec(dim=2, user_field_count=3, source_field_count=2, target_field_count=2)
    table = EmbeddingTable.initialize(24, 2, rng)
    with pytest.raises(SchemaError):
        build_reprs(instance_factory(rng), table, spec)


def test_embed_batch_segments(tiny_spec, instance_factory, rng):
    table = EmbeddingTable.initialize(24, tiny_spec.dim, rng)
    batch = [instance_factory(rng, n_source=n, n_target=0) for n in (2, 0, 3)]
    reprs = embed_batch(batch, table, tiny_spec)
    np.testing.assert_array_equal(reprs.clicked_source.counts(), [2, 0, 3])
    assert reprs.clicked_target.empty
    assert reprs.batch_size == 3


def test_embedding_gradient_touches_only_present_features(tiny_spec, instance_factory, rng):
    table = EmbeddingTable.initialize(24, tiny_spec.dim, rng)
    instance = instance_factory(rng, n_source=2, n_target=1)
    with Tape() as tape:
        reprs = build_reprs(instance, table, tiny_spec)
        loss = total(concat([reprs.p_u, reprs.q, *reprs.clicked_source, *reprs.clicked_target]))
    backward(loss, tape)
    touched = set(np.flatnonzero(np.any(table.matrix.grad != 0, axis=0)).tolist())
    assert touched == set(instance.feature_ids())


def test_shared_table_gives_identical_user_vectors(tiny_spec, instance_factory, rng):
    table = EmbeddingTable.initialize(24, tiny_spec.dim, rng)
    ad_impression = instance_factory(rng, Domain.TARGET)
    news_impression = instance_factory(rng, Domain.SOURCE).model_copy(
        update={"user_feature_ids": ad_impression.user_feature_ids}
    )
    target_reprs = embed_batch([ad_impression], table, tiny_spec)
    source_reprs = embed_batch([news_impression], table, tiny_spec, with_sequences=False)
    np.testing.assert_array_equal(target_reprs.p_u.data, source_reprs.p_u.data)


def test_embedding_parameter_count(rng):
    table = EmbeddingTable.initialize(37, 10, rng)
    assert table.matrix.size == 10 * 37
    spec = ReprSpec(dim=10, user_field_count=4, source_field_count=3, target_field_count=2)
    assert spec.d_u == 40
    assert lookup_concat([1, 2, 3, 4], table).shape == [spec.d_u]


# Transfer


def test_transfer_matches_explicit_product():
    rng = np.random.default_rng(0)
    for _ in range(100):
        dim = int(rng.integers(1, 4))
        spec = ReprSpec(
            dim=dim,
            user_field_count=int(rng.integers(1, 4)),
            source_field_count=int(rng.integers(1, 4)),
            target_field_count=int(rng.integers(1, 4)),
        )
        params = SourceItemAttentionParams.initialize(spec, hidden=3, rank=int(rng.integers(1, 6)), rng=rng)
        r = _vec(rng, spec.d_s)
        explicit = params.M1.data @ params.M2.data @ r.data
        np.testing.assert_allclose(transfer(r, params).data, explicit, rtol=0, atol=1e-12)


def test_transfer_parameter_count(spec, source_params):
    assert source_params.transfer_parameter_count() == (spec.d_t + spec.d_s) * 2


def test_full_rank_transfer(spec, rng):
    params = SourceItemAttentionParams.initialize(spec, hidden=5, rank=2, rng=rng, full_rank=True)
    r = _vec(rng, spec.d_s)
    assert params.transfer_parameter_count() == spec.d_t * spec.d_s
    np.testing.assert_allclose(transfer(r, params).data, params.M.data @ r.data, rtol=0, atol=1e-12)
    assert "source_attention.M1" not in params.parameters()


def test_transfer_wrong_width(spec, source_params, rng):
    with pytest.raises(DimensionError):
        transfer(_vec(rng, spec.d_s + 1), source_params)


# Item-level attention


def test_alpha_sums_to_one(spec, source_params, rng):
    clicked = [_vec(rng, spec.d_s) for _ in range(4)]
    a_s, alpha = aggregate_source(clicked, _vec(rng, spec.d_t), _vec(rng, spec.d_u), source_params, spec)
    assert abs(alpha.sum() - 1.0) < 1e-12
    assert np.all(alpha > 0)
    expected = sum(w * r.data for w, r in zip(alpha, clicked))
    np.testing.assert_allclose(a_s.data, expected, atol=1e-12)


def test_empty_sequence_gives_zero_vector(spec, source_params, target_params, rng):
    q_t, p_u = _vec(rng, spec.d_t), _vec(rng, spec.d_u)
    a_s, alpha = aggregate_source([], q_t, p_u, source_params, spec)
    a_t, beta = aggregate_target([], q_t, p_u, target_params, spec)
    np.testing.assert_array_equal(a_s.data, np.zeros(spec.d_s))
    np.testing.assert_array_equal(a_t.data, np.zeros(spec.d_t))
    assert alpha.size == 0 and beta.size == 0


def test_single_clicked_ad_passes_through(spec, target_params, rng):
    r = _vec(rng, spec.d_t)
    a_t, beta = aggregate_target([r], _vec(rng, spec.d_t), _vec(rng, spec.d_u), target_params, spec)
    np.testing.assert_array_equal(beta, [1.0])
    np.testing.assert_allclose(a_t.data, r.data, atol=1e-15)


def test_permutation_invariance(spec, source_params, rng):
    clicked = [_vec(rng, spec.d_s) for _ in range(5)]
    q_t, p_u = _vec(rng, spec.d_t), _vec(rng, spec.d_u)
    a_s, alpha = aggregate_source(clicked, q_t, p_u, source_params, spec)
    order = [3, 0, 4, 1, 2]
    a_perm, alpha_perm = aggregate_source([clicked[i] for i in order], q_t, p_u, source_params, spec)
    np.testing.assert_allclose(alpha_perm, alpha[order], atol=1e-12)
    np.testing.assert_allclose(a_perm.data, a_s.data, atol=1e-12)


def test_alpha_depends_on_target_ad(spec, source_params, rng):
    clicked = [_vec(rng, spec.d_s) for _ in range(4)]
    p_u = _vec(rng, spec.d_u)
    alphas = [aggregate_source(clicked, _vec(rng, spec.d_t), p_u, source_params, spec)[1] for _ in range(10)]
    assert max(np.abs(a - alphas[0]).max() for a in alphas[1:]) > 1e-6


def test_item_alone_scoring_ignores_target_ad(spec, rng):
    params = SourceItemAttentionParams.initialize(spec, 5, 2, rng, scoring=ItemScoring.ITEM_ALONE)
    assert params.W.shape == [5, spec.d_s]
    clicked = [_vec(rng, spec.d_s) for _ in range(4)]
    p_u = _vec(rng, spec.d_u)
    first = aggregate_source(clicked, _vec(rng, spec.d_t), p_u, params, spec, ItemScoring.ITEM_ALONE)[1]
    second = aggregate_source(clicked, _vec(rng, spec.d_t), p_u, params, spec, ItemScoring.ITEM_ALONE)[1]
    np.testing.assert_array_equal(first, second)


def test_score_source_item_is_scalar(spec, source_params, rng):
    score = score_source_item(_vec(rng, spec.d_s), _vec(rng, spec.d_t), _vec(rng, spec.d_u), source_params, spec)
    assert score.shape == []


def test_source_attention_gradients(spec, source_params, rng):
    clicked = [Tensor(rng.normal(size=spec.d_s), requires_grad=True) for _ in range(3)]
    q_t, p_u = _vec(rng, spec.d_t), _vec(rng, spec.d_u)

    def fn():
        a_s, _ = aggregate_source(clicked, q_t, p_u, source_params, spec)
        return total(a_s)

    tensors = [source_params.W, source_params.h, source_params.M1, source_params.M2, *clicked]
    assert gradcheck(fn, tensors) < 1e-5


def test_attention_parameter_counts(rng):
    spec = ReprSpec(dim=3, user_field_count=2, source_field_count=3, target_field_count=1)
    d_u, d_s, d_t, hidden, rank = spec.d_u, spec.d_s, spec.d_t, 4, 2
    source = SourceItemAttentionParams.initialize(spec, hidden, rank, rng)
    target = TargetItemAttentionParams.initialize(spec, hidden, rng)
    interest = InterestAttentionParams.initialize(spec, hidden, rng)
    assert _count(source) == hidden * (d_s + 2 * d_t + d_u) + hidden + (d_t + d_s) * rank
    assert _count(target) == hidden * (3 * d_t + d_u) + hidden
    assert _count(interest) == 3 * (hidden * (d_s + 2 * d_t + d_u) + hidden + 1)
    assert source.transfer_parameter_count() < d_t * d_s


@pytest.fixture
def unit_spec():
    """One field per group with D = 1, small enough to evaluate by hand"""
    return ReprSpec(dim=1, user_field_count=1, source_field_count=1, target_field_count=1)


def test_source_item_score_by_hand(unit_spec):
    params = SourceItemAttentionParams(
        W=Tensor([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]),
        h=Tensor([0.5, 3.0]),
        M1=Tensor([[2.0]]),
        M2=Tensor([[1.5]]),
    )
    # features [r, q, p, (M1 M2 r) * q] = [0.5, -1, 2, -1.5]; W x = [2.5, -2.5]; relu -> [2.5, 0]
    score = score_source_item(Tensor([0.5]), Tensor([-1.0]), Tensor([2.0]), params, unit_spec)
    assert score.shape == []
    assert score.item() == pytest.approx(1.25, abs=1e-12)


def test_target_item_scores_and_weights_by_hand(unit_spec):
    params = TargetItemAttentionParams(W=Tensor([[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 0.0, 0.0]]), h=Tensor([2.0, -1.0]))
    q_t, p_u = Tensor([-0.5]), Tensor([1.0])
    clicked = [Tensor([2.0]), Tensor([-1.0])]
    # [2, -0.5, 1, -1] -> relu([1.5, 2.5]) . h = 0.5; [-1, -0.5, 1, 0.5] -> relu([0, -0.5]) . h = 0
    scores = [score_target_item(r, q_t, p_u, params, unit_spec).item() for r in clicked]
    assert scores == pytest.approx([0.5, 0.0], abs=1e-12)
    a_t, beta = aggregate_target(clicked, q_t, p_u, params, unit_spec)
    expected_beta = np.array([np.exp(0.5), 1.0]) / (np.exp(0.5) + 1.0)
    np.testing.assert_allclose(beta, expected_beta, rtol=0, atol=1e-12)
    assert a_t.item() == pytest.approx(2.0 * expected_beta[0] - expected_beta[1], abs=1e-12)


# Interest-level attention


def test_interest_weights_positive(spec, rng):
    params = InterestAttentionParams.initialize(spec, hidden=5, rng=rng)
    vectors = (_vec(rng, spec.d_t), _vec(rng, spec.d_u), _vec(rng, spec.d_s), _vec(rng, spec.d_t))
    for kind in InterestActivation:
        weights = interest_weights(*vectors, params, kind)
        assert all(w.item() > 0 for w in weights)
        if kind == InterestActivation.SIGMOID:
            assert all(w.item() < 1 for w in weights)


def test_exp_gate_can_exceed_one(spec, rng):
    params = InterestAttentionParams.initialize(spec, hidden=5, rng=rng)
    params.u.g.data[...] = 0.0
    params.u.b.data[...] = 1.0
    vectors = (_vec(rng, spec.d_t), _vec(rng, spec.d_u), _vec(rng, spec.d_s), _vec(rng, spec.d_t))
    v_u, _, _ = interest_weights(*vectors, params, InterestActivation.EXP)
    assert abs(v_u.item() - np.e) < 1e-12
    sig_u, _, _ = interest_weights(*vectors, params, InterestActivation.SIGMOID)
    assert sig_u.item() < 1.0


def test_build_m_t_layout(spec, rng):
    q_t, p_u, a_s, a_t = _vec(rng, spec.d_t), _vec(rng, spec.d_u), _vec(rng, spec.d_s), _vec(rng, spec.d_t)
    weights = (Tensor(2.0), Tensor(0.5), Tensor(3.0))
    m_t = build_m_t(q_t, p_u, a_s, a_t, weights)
    expected = np.concatenate([q_t.data, 2.0 * p_u.data, 0.5 * a_s.data, 3.0 * a_t.data])
    np.testing.assert_allclose(m_t.data, expected, atol=1e-15)
    assert m_t.shape == [2 * spec.d_t + spec.d_u + spec.d_s]


def test_build_m_t_rejects_negative_weights(spec, rng):
    vectors = (_vec(rng, spec.d_t), _vec(rng, spec.d_u), _vec(rng, spec.d_s), _vec(rng, spec.d_t))
    with pytest.raises(ArgumentError):
        build_m_t(*vectors, (Tensor(1.0), Tensor(-0.1), Tensor(1.0)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
