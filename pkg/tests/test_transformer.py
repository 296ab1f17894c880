import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicnet.errors import CapacityError, ConfigurationError, DimensionError
from bicnet.numerics import Initializer, ScalarKind, Tensor, backward, using_kind
from bicnet.numerics.gradcheck import check_gradients
from bicnet.transformer import (
    Aggregator,
    BlockConfig,
    PositionalTable,
    TBlock,
    aggregate,
    attention,
    mlp,
    multi_head_attention,
    positional_add,
    t_block,
)


# -- naive oracles (loops over plain floats / numpy rows) ---------------------

def naive_attention(q, k, v):
    n, dk = q.shape
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        logits = [sum(q[i, t] * k[j, t] for t in range(dk)) / math.sqrt(dk) for j in range(n)]
        top = max(logits)
        exps = [math.exp(s - top) for s in logits]
        z = sum(exps)
        for j in range(n):
            out[i] += exps[j] / z * v[j]
    return out


def naive_mha(x, blk):
    heads = [naive_attention(x @ blk.w_q.data[i], x @ blk.w_k.data[i], x @ blk.w_v.data[i])
             for i in range(blk.w_q.shape[0])]
    return np.concatenate(heads, axis=1) @ blk.w_o.data


def naive_gelu(a):
    return np.vectorize(lambda t: 0.5 * t * (1 + math.erf(t / math.sqrt(2))))(a)


def naive_ln(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    sd = np.sqrt(((x - mu) ** 2).mean(-1, keepdims=True) + eps)
    return (x - mu) / sd * g + b


def block(d=4, heads=2, seed=0, hidden=None):
    return TBlock(BlockConfig(d, heads, hidden), Initializer(seed))


# -- attention ---------------------------------------------------------------

def test_attention_single_key_returns_v(f64, rng):
    q, k, v = (Tensor(rng.standard_normal((1, 3))) for _ in range(3))
    out, w = attention(q, k, v)
    assert np.array_equal(out.data, v.data)
    assert w.data.tolist() == [[1.0]]


def test_attention_identical_keys_average_values(f64, rng):
    k = np.tile(rng.standard_normal((1, 3)), (4, 1))
    v = rng.standard_normal((4, 2))
    out, _ = attention(Tensor(rng.standard_normal((4, 3))), Tensor(k), Tensor(v))
    np.testing.assert_allclose(out.data, np.tile(v.mean(0), (4, 1)), atol=1e-12)


def test_attention_matches_naive(f64, rng):
    q, k, v = rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    out, w = attention(Tensor(q), Tensor(k), Tensor(v))
    np.testing.assert_allclose(out.data, naive_attention(q, k, v), atol=1e-6)
    np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-6)


def test_attention_rejects_empty(f64):
    with pytest.raises(DimensionError):
        attention(Tensor(np.ones((0, 2))), Tensor(np.ones((0, 2))), Tensor(np.ones((0, 2))))


# -- multi-head attention ------------------------------------------------------

def test_mha_single_head_is_attention_then_wo(f64, rng):
    blk = block(d=4, heads=1)
    x = rng.standard_normal((3, 4))
    q, k, v = (x @ w.data[0] for w in (blk.w_q, blk.w_k, blk.w_v))
    expected = attention(Tensor(q), Tensor(k), Tensor(v))[0].data @ blk.w_o.data
    np.testing.assert_allclose(multi_head_attention(Tensor(x), blk).data, expected, atol=1e-12)


def test_mha_zero_output_projection(f64, rng):
    blk = block()
    blk.w_o.data[...] = 0.0
    assert not multi_head_attention(Tensor(rng.standard_normal((3, 4))), blk).data.any()


def test_mha_matches_per_head_oracle(f64, rng):
    blk = block(d=4, heads=2, seed=3)
    x = rng.standard_normal((3, 4))
    np.testing.assert_allclose(multi_head_attention(Tensor(x), blk).data, naive_mha(x, blk), atol=1e-6)


def test_mha_batched_matches_unbatched(f64, rng):
    blk = block(d=8, heads=4)
    x = rng.standard_normal((2, 3, 5, 8))
    batched = multi_head_attention(Tensor(x), blk).data
    for i in range(2):
        for j in range(3):
            np.testing.assert_allclose(batched[i, j], naive_mha(x[i, j], blk), atol=1e-10)


def test_block_config_validation():
    with pytest.raises(ConfigurationError):
        BlockConfig(6, heads=4)
    with pytest.raises(ConfigurationError):
        BlockConfig(8, heads=2, layers=0)
    assert BlockConfig(8, 2).head_dim == 4
    assert BlockConfig(8, 2).hidden == 32


# -- mlp -----------------------------------------------------------------------

def test_mlp_zero_first_layer_gives_bias(f64, rng):
    blk = block()
    blk.w_1.data[...] = 0.0
    blk.b_2.data[...] = [1.0, -2.0, 3.0, 0.5]
    out = mlp(Tensor(rng.standard_normal((5, 4))), blk).data
    assert np.array_equal(out, np.tile([1.0, -2.0, 3.0, 0.5], (5, 1)))


def test_mlp_unit_scalar(f64):
    blk = TBlock(BlockConfig(1, 1, 1), Initializer(0))
    blk.w_1.data[...] = 1.0
    blk.w_2.data[...] = 1.0
    assert mlp(Tensor([[0.0]]), blk).data.tolist() == [[0.0]]


def test_mlp_matches_composition(f64, rng):
    blk = block(d=3, heads=1, hidden=5)
    blk.b_1.data[...] = rng.standard_normal(5)
    blk.b_2.data[...] = rng.standard_normal(3)
    x = rng.standard_normal((2, 3))
    expected = naive_gelu(x @ blk.w_1.data + blk.b_1.data) @ blk.w_2.data + blk.b_2.data
    np.testing.assert_allclose(mlp(Tensor(x), blk).data, expected, atol=1e-6)


# -- t_block ---------------------------------------------------------------------

def test_t_block_zeroed_is_identity(f64, rng):
    blk = block(d=8, heads=4)
    blk.zero_output_projections()
    x = rng.standard_normal((5, 8))
    assert np.array_equal(t_block(Tensor(x), blk).data, x)


def test_t_block_zeroed_identity_training32(f32, rng):
    blk = block(d=8, heads=4)
    blk.zero_output_projections()
    x = rng.standard_normal((2, 5, 8)).astype(np.float32)
    assert np.array_equal(t_block(Tensor(x), blk).data, x)


def test_t_block_single_row_closed_form(f64, rng):
    blk = block(d=4, heads=2, seed=5)
    for p in (blk.ln1_gamma, blk.ln1_beta, blk.ln2_gamma, blk.ln2_beta, blk.b_1, blk.b_2):
        p.data[...] = rng.standard_normal(p.shape)
    x = rng.standard_normal((1, 4))
    h = naive_ln(x, blk.ln1_gamma.data, blk.ln1_beta.data)
    # one key: every head returns its value projection unchanged
    values = np.concatenate([h @ blk.w_v.data[i] for i in range(2)], axis=1)
    x1 = x + values @ blk.w_o.data
    h2 = naive_ln(x1, blk.ln2_gamma.data, blk.ln2_beta.data)
    x2 = x1 + naive_gelu(h2 @ blk.w_1.data + blk.b_1.data) @ blk.w_2.data + blk.b_2.data
    np.testing.assert_allclose(t_block(Tensor(x), blk).data, x2, atol=1e-12)


def test_t_block_gradients(f64, rng):
    blk = block(d=4, heads=2, seed=7)
    blk.assign_names()
    for name, p in blk.named_parameters():
        if name.startswith(("ln", "b_")):
            p.data[...] = rng.standard_normal(p.shape) * 0.5 + (1.0 if "gamma" in name else 0.0)
    x = Tensor(rng.standard_normal((3, 4)))
    probe = Tensor(rng.standard_normal((3, 4)))
    report = check_gradients(lambda: (t_block(x, blk) * probe).sum(), blk.parameters())
    assert max(report.values()) < 1e-4, report


def test_t_block_input_gradient(f64, rng):
    blk = block(d=4, heads=2, seed=8)
    from bicnet.numerics import Parameter
    x = Parameter(rng.standard_normal((3, 4)), "x")
    probe = Tensor(rng.standard_normal((3, 4)))
    report = check_gradients(lambda: (t_block(x, blk) * probe).sum(), [x])
    assert report["x"] < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_t_block_is_permutation_equivariant(seed, n):
    with using_kind(ScalarKind.Verification64):
        r = np.random.default_rng(seed)
        blk = TBlock(BlockConfig(8, 4), Initializer(seed))
        x = r.standard_normal((n, 8))
        perm = r.permutation(n)
        out = t_block(Tensor(x), blk).data
        out_perm = t_block(Tensor(x[perm]), blk).data
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-6)


def test_attention_weight_rows_sum_to_one(f32, rng):
    blk = block(d=8, heads=4)
    t_block(Tensor(rng.standard_normal((6, 8))), blk)
    assert blk.last_attention.shape == (4, 6, 6)
    np.testing.assert_allclose(blk.last_attention.sum(-1), 1.0, atol=1e-6)


# -- aggregate ---------------------------------------------------------------------

def test_aggregate_single_row(f64, rng):
    agg = Aggregator(5, Initializer(0))
    x = rng.standard_normal((1, 5))
    assert np.array_equal(aggregate(Tensor(x), agg).data, x[0])


def test_aggregate_identical_rows(f64, rng):
    agg = Aggregator(5, Initializer(0))
    row = rng.standard_normal(5)
    np.testing.assert_allclose(aggregate(Tensor(np.tile(row, (4, 1))), agg).data, row, atol=1e-12)


def test_aggregate_zero_query_is_mean(f64, rng):
    agg = Aggregator(5, Initializer(0))
    agg.query.data[...] = 0.0
    x = rng.standard_normal((7, 5))
    np.testing.assert_allclose(aggregate(Tensor(x), agg).data, x.mean(0), atol=1e-12)
    np.testing.assert_allclose(agg.last_weights, np.full(7, 1 / 7), atol=1e-15)


def test_aggregate_mask_ignores_padding(f64, rng):
    agg = Aggregator(4, Initializer(2))
    x = rng.standard_normal((3, 4))
    padded = np.vstack([x, np.zeros((2, 4))])
    masked = aggregate(Tensor(padded), agg, mask=np.array([1, 1, 1, 0, 0])).data
    np.testing.assert_allclose(masked, aggregate(Tensor(x), agg).data, atol=1e-12)


def test_aggregate_empty_rejected(f64):
    agg = Aggregator(4, Initializer(2))
    with pytest.raises(DimensionError):
        aggregate(Tensor(np.ones((0, 4))), agg)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_aggregate_is_permutation_invariant(seed, n):
    with using_kind(ScalarKind.Verification64):
        r = np.random.default_rng(seed)
        agg = Aggregator(6, Initializer(seed))
        x = r.standard_normal((n, 6))
        perm = r.permutation(n)
        np.testing.assert_allclose(aggregate(Tensor(x[perm]), agg).data, aggregate(Tensor(x), agg).data, atol=1e-12)


def test_aggregate_gradients(f64, rng):
    agg = Aggregator(4, Initializer(3))
    agg.assign_names()
    x = Tensor(rng.standard_normal((2, 5, 4)))
    probe = Tensor(rng.standard_normal((2, 4)))
    report = check_gradients(lambda: (aggregate(x, agg) * probe).sum(), agg.parameters())
    assert max(report.values()) < 1e-4


# -- positional table ------------------------------------------------------------

def test_positional_disabled_is_identity(f64, rng):
    table = PositionalTable(6, 4, Initializer(0), enabled=False)
    x = Tensor(rng.standard_normal((3, 4)))
    assert positional_add(x, table) is x


def test_positional_zero_table_is_identity(f64, rng):
    table = PositionalTable(6, 4, Initializer(0))
    table.table.data[...] = 0.0
    x = rng.standard_normal((3, 4))
    assert np.array_equal(positional_add(Tensor(x), table).data, x)


def test_positional_breaks_equivariance(f64, rng):
    table = PositionalTable(6, 4, Initializer(0))
    x = rng.standard_normal((4, 4))
    perm = np.array([2, 0, 3, 1])
    out = positional_add(Tensor(x), table).data
    out_perm = positional_add(Tensor(x[perm]), table).data
    assert np.abs(out_perm - out[perm]).max() > 1e-3


def test_positional_capacity(f64):
    table = PositionalTable(3, 4, Initializer(0))
    with pytest.raises(CapacityError):
        positional_add(Tensor(np.ones((4, 4))), table)


def test_positional_gradient_reaches_used_rows_only(f64, rng):
    table = PositionalTable(5, 2, Initializer(0))
    backward(positional_add(Tensor(rng.standard_normal((3, 2))), table).sum())
    assert np.array_equal(table.table.grad, np.vstack([np.ones((3, 2)), np.zeros((2, 2))]))
