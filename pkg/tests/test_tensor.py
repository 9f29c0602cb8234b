"""Engine tests: forward oracles, finite-difference backward checks, contracts."""

import numpy as np
import pytest

from ggsa import tensor as T
from ggsa.errors import (ConfigError, ContractError, DegenerateMaskError,
                         InputError, ShapeError)
from ggsa.gradcheck import check_gradients

FD_TOL = 1e-6


def leaf(rng, *shape):
    return T.parameter(rng.standard_normal(shape))


def fd_assert(build_out, leaves, rng, tol=FD_TOL):
    """Check analytic vs numerical gradients of a random projection of the output."""
    probe = {}

    def build():
        out = build_out()
        if "w" not in probe:
            probe["w"] = T.constant(rng.standard_normal(out.shape))
        return T.sum_all(T.hadamard(out, probe["w"]))

    errors = check_gradients(build, leaves)
    worst = max(errors.values())
    assert worst < tol, f"finite differences disagree: {errors}"


class TestForwardOracles:
    """Forward values against independent reference computations."""

    def test_matmul_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            m, k, n = rng.integers(1, 6, size=3)
            a = rng.standard_normal((m, k))
            b = rng.standard_normal((k, n))
            ref = np.zeros((m, n))
            for i in range(m):
                for j in range(n):
                    for p in range(k):
                        ref[i, j] += a[i, p] * b[p, j]
            got = T.matmul(T.constant(a), T.constant(b)).data
            np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_elementwise_ops(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((3, 4))
        np.testing.assert_allclose(T.add(T.constant(a), T.constant(b)).data, a + b)
        np.testing.assert_allclose(T.sub(T.constant(a), T.constant(b)).data, a - b)
        np.testing.assert_allclose(T.hadamard(T.constant(a), T.constant(b)).data, a * b)
        np.testing.assert_allclose(T.scale(T.constant(a), -2.5).data, -2.5 * a)
        np.testing.assert_allclose(T.add_scalar(T.constant(a), 0.3).data, a + 0.3)
        np.testing.assert_allclose(T.transpose(T.constant(a)).data, a.T)

    def test_nonlinearities(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 3)) * 3
        np.testing.assert_allclose(T.sigmoid(T.constant(x)).data, 1 / (1 + np.exp(-x)), rtol=1e-12)
        np.testing.assert_allclose(T.tanh(T.constant(x)).data, np.tanh(x))
        np.testing.assert_allclose(T.relu(T.constant(x)).data, np.maximum(x, 0))
        pos = np.abs(x) + 0.5
        np.testing.assert_allclose(T.log(T.constant(pos)).data, np.log(pos))

    def test_sigmoid_is_stable_at_extremes(self):
        x = T.constant(np.array([[-500.0, 500.0]]))
        s = T.sigmoid(x).data
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s, [[0.0, 1.0]], atol=1e-12)

    def test_add_col_broadcasts_bias(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 5))
        v = rng.standard_normal(4)
        np.testing.assert_allclose(T.add_col(T.constant(x), T.constant(v)).data,
                                   x + v[:, None])

    def test_broadcast_col_is_columnwise_product(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((4, 5))
        v = rng.standard_normal(4)
        np.testing.assert_allclose(T.broadcast_col(T.constant(v), T.constant(x)).data,
                                   x * v[:, None])

    def test_broadcast_col_single_column_degenerates_to_hadamard(self):
        rng = np.random.default_rng(5)
        c = rng.standard_normal(6)
        x = rng.standard_normal((6, 1))
        via_broadcast = T.broadcast_col(T.constant(c), T.constant(x)).data.ravel()
        via_hadamard = T.hadamard(T.constant(c), T.reshape(T.constant(x), (6,))).data
        np.testing.assert_allclose(via_broadcast, via_hadamard)

    def test_softmax_columns_sum_to_one(self):
        rng = np.random.default_rng(6)
        w = T.softmax_columns(T.constant(rng.standard_normal((5, 7)) * 4)).data
        np.testing.assert_allclose(w.sum(axis=0), np.ones(7), atol=1e-12)
        assert np.all(w > 0)

    def test_softmax_columns_is_shift_stable(self):
        x = np.array([[10000.0, -10000.0], [10001.0, -10001.0]])
        w = T.softmax_columns(T.constant(x)).data
        assert np.all(np.isfinite(w))
        np.testing.assert_allclose(w.sum(axis=0), [1.0, 1.0])

    def test_softmax_masked_entries_are_exact_zero(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((6, 4))
        mask = rng.random((6, 4)) > 0.4
        mask[0, :] = True
        w = T.softmax_columns(T.constant(x), mask).data
        assert np.all(w[~mask] == 0.0)
        np.testing.assert_allclose(w.sum(axis=0), np.ones(4), atol=1e-6)

    def test_softmax_empty_column_policies(self):
        x = T.constant(np.ones((3, 2)))
        mask = np.array([[True, False], [True, False], [True, False]])
        with pytest.raises(DegenerateMaskError):
            T.softmax_columns(x, mask)
        w = T.softmax_columns(x, mask, empty="zero").data
        np.testing.assert_allclose(w[:, 1], np.zeros(3))
        np.testing.assert_allclose(w[:, 0].sum(), 1.0)

    def test_layer_norm_matches_scalar_formula(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((5, 3))
        gain = rng.standard_normal(5)
        bias = rng.standard_normal(5)
        eps = 1e-6
        got = T.layer_norm(T.constant(x), T.constant(gain), T.constant(bias), eps).data
        for col in range(3):
            mu = x[:, col].mean()
            var = ((x[:, col] - mu) ** 2).mean()
            ref = gain * (x[:, col] - mu) / np.sqrt(var + eps) + bias
            np.testing.assert_allclose(got[:, col], ref, rtol=1e-10)

    def test_mean_pool_skips_masked_columns(self):
        x = np.array([[1.0, 2.0, 100.0], [3.0, 5.0, 100.0]])
        valid = np.array([True, True, False])
        got = T.mean_pool_columns(T.constant(x), valid).data
        np.testing.assert_allclose(got, [1.5, 4.0])

    def test_max_pool_skips_masked_and_breaks_ties_leftward(self):
        x = np.array([[2.0, 2.0, 9.0], [1.0, 5.0, 9.0]])
        valid = np.array([True, True, False])
        out = T.max_pool_columns(T.constant(x), valid)
        np.testing.assert_allclose(out.data, [2.0, 5.0])
        leafy = T.parameter(x)
        out = T.max_pool_columns(leafy, valid)
        T.backward(T.sum_all(out))
        # the tied max in row 0 must route gradient to the earliest column
        np.testing.assert_allclose(leafy.grad, [[1, 0, 0], [0, 1, 0]])

    def test_slice_concat_roundtrip(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((6, 8))
        t = T.constant(x)
        rows = T.concat_rows([T.slice_rows(t, 0, 2), T.slice_rows(t, 2, 6)])
        cols = T.concat_cols([T.slice_cols(t, 0, 3), T.slice_cols(t, 3, 8)])
        np.testing.assert_allclose(rows.data, x)
        np.testing.assert_allclose(cols.data, x)

    def test_reshape_and_rank_limits(self):
        x = T.constant(np.arange(6.0).reshape(2, 3))
        np.testing.assert_allclose(T.reshape(x, (6,)).data, np.arange(6.0))
        with pytest.raises(ShapeError):
            T.reshape(x, (4,))
        with pytest.raises(ShapeError):
            T.Tensor(np.zeros((2, 2, 2, 2)))

    def test_embedding_lookup_gathers_columns(self):
        rng = np.random.default_rng(10)
        table = rng.standard_normal((4, 9))
        ids = np.array([3, 0, 3, 8])
        got = T.embedding_lookup(T.constant(table), ids).data
        np.testing.assert_allclose(got, table[:, ids])

    def test_dropout_keep_one_is_identity_and_scaling_is_inverted(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((5, 40)) + 3.0
        same = T.dropout(T.constant(x), 1.0, np.random.default_rng(0)).data
        np.testing.assert_allclose(same, x)
        dropped = T.dropout(T.constant(x), 0.5, np.random.default_rng(0)).data
        kept = dropped != 0
        np.testing.assert_allclose(dropped[kept], x[kept] / 0.5)
        assert 0.2 < kept.mean() < 0.8

    def test_segment_ops_match_per_slice_references(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((4, 10))
        segs = [(0, 3), (3, 7), (7, 10)]
        valid = rng.random(10) > 0.3
        for a, b in segs:
            if not valid[a:b].any():
                valid[a] = True
        mean_b = T.segment_mean_columns(T.constant(x), segs, valid).data
        pool = T.segment_mean_pool(T.constant(x), segs, valid).data
        mx = T.segment_max_pool(T.constant(x), segs, valid).data
        for k, (a, b) in enumerate(segs):
            ref_mean = x[:, a:b][:, valid[a:b]].mean(axis=1)
            np.testing.assert_allclose(pool[:, k], ref_mean)
            for col in range(a, b):
                np.testing.assert_allclose(mean_b[:, col], ref_mean)
            ref_max = x[:, a:b][:, valid[a:b]].max(axis=1)
            np.testing.assert_allclose(mx[:, k], ref_max)

    def test_segment_partition_is_enforced(self):
        x = T.constant(np.zeros((2, 6)))
        for bad in ([(0, 3)], [(0, 3), (4, 6)], [(0, 3), (3, 7)], []):
            with pytest.raises((ShapeError, ContractError)):
                T.segment_mean_pool(x, bad)

    def test_columns_to_segments_broadcasts_and_shares_sources(self):
        src = T.parameter(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = T.columns_to_segments(src, [1, 0, 1], [(0, 2), (2, 3), (3, 6)], 6)
        ref = np.array([[2, 2, 1, 2, 2, 2], [4, 4, 3, 4, 4, 4]], dtype=float)
        np.testing.assert_allclose(out.data, ref)
        T.backward(T.sum_all(out))
        # column 1 feeds five output columns, column 0 feeds one
        np.testing.assert_allclose(src.grad, [[1, 5], [1, 5]])

    def test_columnwise_cosine_known_geometry(self):
        u = T.constant(np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 1.0]]))
        v = T.constant(np.array([[1.0, 0.0, -1.0], [0.0, 1.0, -1.0]]))
        cos = T.columnwise_cosine(u, v).data
        np.testing.assert_allclose(cos, [1.0, 0.0, -1.0], atol=1e-12)

    def test_columnwise_cosine_zero_vector_flagged(self):
        u = T.parameter(np.array([[0.0], [0.0]]))
        v = T.parameter(np.array([[1.0], [2.0]]))
        with pytest.warns(RuntimeWarning):
            cos = T.columnwise_cosine(u, v)
        np.testing.assert_allclose(cos.data, [0.0])
        T.backward(T.sum_all(cos))
        np.testing.assert_allclose(u.grad, np.zeros((2, 1)))
        np.testing.assert_allclose(v.grad, np.zeros((2, 1)))


class TestBackward:
    """Central finite differences against every op's analytic backward."""

    def test_matmul(self):
        rng = np.random.default_rng(20)
        a, b = leaf(rng, 3, 4), leaf(rng, 4, 2)
        fd_assert(lambda: T.matmul(a, b), {"a": a, "b": b}, rng)

    def test_transpose(self):
        rng = np.random.default_rng(21)
        a = leaf(rng, 3, 5)
        fd_assert(lambda: T.transpose(a), {"a": a}, rng)

    def test_add_sub_hadamard(self):
        rng = np.random.default_rng(22)
        a, b = leaf(rng, 4, 3), leaf(rng, 4, 3)
        fd_assert(lambda: T.add(a, b), {"a": a, "b": b}, rng)
        fd_assert(lambda: T.sub(a, b), {"a": a, "b": b}, rng)
        fd_assert(lambda: T.hadamard(a, b), {"a": a, "b": b}, rng)

    def test_scale_and_add_scalar(self):
        rng = np.random.default_rng(23)
        a = leaf(rng, 2, 5)
        fd_assert(lambda: T.scale(a, -1.7), {"a": a}, rng)
        fd_assert(lambda: T.add_scalar(a, 2.3), {"a": a}, rng)

    def test_add_col_and_broadcast_col(self):
        rng = np.random.default_rng(24)
        x, v = leaf(rng, 4, 6), leaf(rng, 4)
        fd_assert(lambda: T.add_col(x, v), {"x": x, "v": v}, rng)
        fd_assert(lambda: T.broadcast_col(v, x), {"x": x, "v": v}, rng)

    def test_nonlinearities(self):
        rng = np.random.default_rng(25)
        a = leaf(rng, 3, 4)
        fd_assert(lambda: T.sigmoid(a), {"a": a}, rng)
        fd_assert(lambda: T.tanh(a), {"a": a}, rng)
        shifted = T.parameter(np.sign(a.data) * (np.abs(a.data) + 0.1))
        fd_assert(lambda: T.relu(shifted), {"a": shifted}, rng)
        pos = T.parameter(np.abs(a.data) + 0.5)
        fd_assert(lambda: T.log(pos), {"a": pos}, rng)

    def test_softmax_columns(self):
        rng = np.random.default_rng(26)
        x = leaf(rng, 5, 4)
        fd_assert(lambda: T.softmax_columns(x), {"x": x}, rng)
        mask = rng.random((5, 4)) > 0.3
        mask[0, :] = True
        fd_assert(lambda: T.softmax_columns(x, mask), {"x": x}, rng)

    def test_layer_norm(self):
        rng = np.random.default_rng(27)
        x, g, b = leaf(rng, 6, 3), leaf(rng, 6), leaf(rng, 6)
        fd_assert(lambda: T.layer_norm(x, g, b), {"x": x, "g": g, "b": b}, rng)

    def test_pooling(self):
        rng = np.random.default_rng(28)
        x = leaf(rng, 4, 7)
        valid = np.array([True, True, False, True, True, False, True])
        fd_assert(lambda: T.mean_pool_columns(x, valid), {"x": x}, rng)
        fd_assert(lambda: T.max_pool_columns(x, valid), {"x": x}, rng)

    def test_slicing_and_concat(self):
        rng = np.random.default_rng(29)
        x = leaf(rng, 6, 5)
        y = leaf(rng, 2, 5)
        fd_assert(lambda: T.slice_rows(x, 1, 4), {"x": x}, rng)
        fd_assert(lambda: T.slice_cols(x, 0, 3), {"x": x}, rng)
        fd_assert(lambda: T.concat_rows([x, y]), {"x": x, "y": y}, rng)
        fd_assert(lambda: T.concat_cols([T.slice_cols(x, 0, 2), T.slice_cols(x, 2, 5)]),
                  {"x": x}, rng)

    def test_reshape_and_sum(self):
        rng = np.random.default_rng(30)
        x = leaf(rng, 3, 4)
        fd_assert(lambda: T.reshape(x, (12,)), {"x": x}, rng)
        fd_assert(lambda: T.reshape(x, (2, 2, 3)), {"x": x}, rng)

    def test_embedding_lookup_accumulates_repeats(self):
        rng = np.random.default_rng(31)
        table = leaf(rng, 3, 6)
        ids = np.array([2, 2, 0, 5, 2])
        fd_assert(lambda: T.embedding_lookup(table, ids), {"t": table}, rng)
        out = T.embedding_lookup(table, ids)
        T.backward(T.sum_all(out))
        np.testing.assert_allclose(table.grad[:, 2], np.full(3, 3.0))

    def test_dropout(self):
        rng = np.random.default_rng(32)
        x = leaf(rng, 4, 6)
        fd_assert(lambda: T.dropout(x, 0.6, np.random.default_rng(99)), {"x": x}, rng)

    def test_segment_kernels(self):
        rng = np.random.default_rng(33)
        x = leaf(rng, 3, 8)
        segs = [(0, 3), (3, 8)]
        valid = np.array([True, False, True, True, True, False, True, True])
        fd_assert(lambda: T.segment_mean_columns(x, segs, valid), {"x": x}, rng)
        fd_assert(lambda: T.segment_mean_pool(x, segs, valid), {"x": x}, rng)
        fd_assert(lambda: T.segment_max_pool(x, segs, valid), {"x": x}, rng)

    def test_columns_to_segments(self):
        rng = np.random.default_rng(34)
        src = leaf(rng, 3, 2)
        fd_assert(lambda: T.columns_to_segments(src, [1, 1, 0], [(0, 2), (2, 5), (5, 6)], 6),
                  {"src": src}, rng)

    def test_columnwise_cosine(self):
        rng = np.random.default_rng(35)
        u, v = leaf(rng, 5, 3), leaf(rng, 5, 3)
        fd_assert(lambda: T.columnwise_cosine(u, v), {"u": u, "v": v}, rng)

    def test_backward_is_linear_in_the_root(self):
        rng = np.random.default_rng(36)
        alpha, beta = 0.7, -2.3

        def graphs():
            x = T.parameter(rng.standard_normal((3, 3)))
            return x, T.sum_all(T.sigmoid(x)), T.sum_all(T.matmul(x, x))

        rng = np.random.default_rng(36)
        x1, l1, _ = graphs()
        T.backward(l1)
        g1 = x1.grad.copy()
        rng = np.random.default_rng(36)
        x2, _, l2 = graphs()
        T.backward(l2)
        g2 = x2.grad.copy()
        rng = np.random.default_rng(36)
        x3, la, lb = graphs()
        T.backward(T.add(T.scale(la, alpha), T.scale(lb, beta)))
        np.testing.assert_allclose(x3.grad, alpha * g1 + beta * g2, rtol=1e-10)

    def test_shared_leaf_accumulates(self):
        x = T.parameter(np.array([2.0, 3.0]))
        T.backward(T.sum_all(T.hadamard(x, x)))
        np.testing.assert_allclose(x.grad, [4.0, 6.0])

    def test_backward_resets_between_calls(self):
        x = T.parameter(np.array([1.0, 2.0]))
        for _ in range(2):
            T.backward(T.sum_all(T.hadamard(x, x)))
        np.testing.assert_allclose(x.grad, [2.0, 4.0])


class TestContracts:
    """Error taxonomy: loud, typed failures instead of silent nonsense."""

    def test_backward_requires_scalar_root(self):
        x = T.parameter(np.ones((2, 2)))
        with pytest.raises(ContractError):
            T.backward(T.sigmoid(x))

    def test_shape_errors_name_both_shapes(self):
        a = T.constant(np.ones((2, 3)))
        b = T.constant(np.ones((4, 5)))
        with pytest.raises(ShapeError, match=r"2, 3"):
            T.matmul(a, b)
        with pytest.raises(ShapeError, match=r"4, 5"):
            T.add(a, b)

    def test_mask_shape_mismatch(self):
        x = T.constant(np.ones((3, 3)))
        with pytest.raises(ShapeError):
            T.softmax_columns(x, np.ones((2, 3), dtype=bool))
        with pytest.raises(ShapeError):
            T.mean_pool_columns(x, np.ones(5, dtype=bool))

    def test_degenerate_pooling_masks(self):
        x = T.constant(np.ones((2, 3)))
        nothing = np.zeros(3, dtype=bool)
        with pytest.raises(DegenerateMaskError):
            T.mean_pool_columns(x, nothing)
        with pytest.raises(DegenerateMaskError):
            T.max_pool_columns(x, nothing)

    def test_log_domain(self):
        with pytest.raises(ContractError):
            T.log(T.constant(np.array([1.0, -0.5])))

    def test_dropout_keep_range(self):
        x = T.constant(np.ones((2, 2)))
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ConfigError):
                T.dropout(x, bad, np.random.default_rng(0))

    def test_embedding_rejects_out_of_vocabulary(self):
        table = T.constant(np.ones((2, 4)))
        with pytest.raises(InputError):
            T.embedding_lookup(table, np.array([0, 4]))
        with pytest.raises(InputError):
            T.embedding_lookup(table, np.array([-1]))

    def test_item_requires_single_element(self):
        with pytest.raises(ContractError):
            T.constant(np.ones(3)).item()
