"""Reverse-mode autodiff: primitive gradients vs finite differences,
tape mechanics, the parameter store and checkpoint round-trips."""
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuetrack.autodiff import (AutodiffError, ParameterStore, Tensor, add,
                               concat_cols, concat_rows, constant, exp, fill,
                               grad_check, group_norm, load_checkpoint,
                               logsumexp_cols, logsumexp_rows, matmul,
                               mean_rows, mul, relu, save_checkpoint, scale,
                               slice_cols, softmax_rows, total, transpose)

RNG = np.random.default_rng(12345)


def _fd(fn, x, h=1e-6):
    """Central-difference gradient of a scalar-valued fn at array x."""
    g = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def _check_unary(op, x, tol=1e-7):
    t = Tensor(x.copy(), requires_grad=True)
    out = total(op(t))
    out.backward()
    num = _fd(lambda a: float(total(op(Tensor(a))).data[0, 0]), x.copy())
    assert np.max(np.abs(t.grad - num)) < tol, op.__name__


class TestPrimitiveGradients:
    def test_add_mul_scale(self):
        x = RNG.normal(size=(3, 4))
        y = RNG.normal(size=(3, 4))
        a = Tensor(x.copy(), requires_grad=True)
        b = Tensor(y.copy(), requires_grad=True)
        out = total(add(mul(a, b), scale(a, 2.5)))
        out.backward()
        assert np.allclose(a.grad, y + 2.5)
        assert np.allclose(b.grad, x)

    def test_matmul(self):
        x = RNG.normal(size=(3, 5))
        y = RNG.normal(size=(5, 2))
        a = Tensor(x.copy(), requires_grad=True)
        b = Tensor(y.copy(), requires_grad=True)
        g = RNG.normal(size=(3, 2))
        matmul(a, b).backward(g)
        assert np.allclose(a.grad, g @ y.T)
        assert np.allclose(b.grad, x.T @ g)

    def test_unary_ops_match_finite_differences(self):
        x = RNG.normal(size=(4, 6))
        for op in (exp, transpose, softmax_rows, logsumexp_rows,
                   logsumexp_cols, mean_rows):
            _check_unary(op, x)

    def test_relu_gradient_away_from_kink(self):
        x = RNG.normal(size=(4, 6))
        x[np.abs(x) < 0.05] = 0.1  # keep clear of the non-differentiable point
        _check_unary(relu, x)

    def test_slice_and_concat(self):
        x = RNG.normal(size=(3, 4))
        y = RNG.normal(size=(3, 2))
        a = Tensor(x.copy(), requires_grad=True)
        b = Tensor(y.copy(), requires_grad=True)
        out = total(slice_cols(concat_cols([a, b]), 2, 5))
        out.backward()
        expect_a = np.zeros((3, 4))
        expect_a[:, 2:] = 1.0
        expect_b = np.zeros((3, 2))
        expect_b[:, 0] = 1.0
        assert np.allclose(a.grad, expect_a)
        assert np.allclose(b.grad, expect_b)

    def test_concat_rows_gradient(self):
        x = RNG.normal(size=(2, 3))
        y = RNG.normal(size=(4, 3))
        a = Tensor(x.copy(), requires_grad=True)
        b = Tensor(y.copy(), requires_grad=True)
        g = RNG.normal(size=(6, 3))
        concat_rows([a, b]).backward(g)
        assert np.allclose(a.grad, g[:2])
        assert np.allclose(b.grad, g[2:])

    def test_fill_routes_gradient_to_scalar(self):
        s = Tensor(np.array([[0.7]]), requires_grad=True)
        total(fill((3, 5), s)).backward()
        assert np.allclose(s.grad, [[15.0]])

    def test_group_norm_matches_finite_differences(self):
        x = RNG.normal(size=(5, 8))
        gamma = RNG.normal(size=(1, 8)) + 1.0
        beta = RNG.normal(size=(1, 8))
        tx = Tensor(x.copy(), requires_grad=True)
        tg = Tensor(gamma.copy(), requires_grad=True)
        tb = Tensor(beta.copy(), requires_grad=True)
        total(group_norm(tx, tg, tb, num_groups=4)).backward()

        def f(xx, gg, bb):
            return float(total(group_norm(Tensor(xx), Tensor(gg), Tensor(bb),
                                          num_groups=4)).data[0, 0])

        assert np.max(np.abs(tx.grad - _fd(lambda a: f(a, gamma, beta), x.copy()))) < 1e-6
        assert np.max(np.abs(tg.grad - _fd(lambda a: f(x, a, beta), gamma.copy()))) < 1e-6
        assert np.max(np.abs(tb.grad - _fd(lambda a: f(x, gamma, a), beta.copy()))) < 1e-6

    def test_softmax_rows_sum_to_one(self):
        x = RNG.normal(size=(6, 9)) * 5
        p = softmax_rows(Tensor(x)).data
        assert np.allclose(p.sum(axis=1), 1.0)

    def test_logsumexp_is_stable_for_large_inputs(self):
        x = np.full((2, 3), 1e4)
        out = logsumexp_rows(Tensor(x)).data
        assert np.allclose(out, 1e4 + np.log(3))


class TestTapeMechanics:
    def test_gradient_accumulates_through_shared_node(self):
        a = Tensor(np.array([[2.0]]), requires_grad=True)
        out = add(mul(a, a), a)  # a^2 + a -> grad 2a + 1 = 5
        out.backward()
        assert np.allclose(a.grad, [[5.0]])

    def test_backward_repeats_after_reset(self):
        a = Tensor(np.array([[3.0]]), requires_grad=True)
        out = scale(a, 2.0)
        out.backward()
        first = a.grad.copy()
        out.zero_grad_tree()
        out.backward()
        assert np.allclose(a.grad, first) and np.allclose(first, [[2.0]])

    def test_zero_grad_tree(self):
        a = Tensor(np.array([[3.0]]), requires_grad=True)
        out = scale(a, 2.0)
        out.backward()
        out.zero_grad_tree()
        assert a.grad is None or np.allclose(a.grad, 0.0)

    def test_constant_is_not_a_trainable_leaf(self):
        c = constant(np.ones((2, 2)))
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        total(mul(c, a)).backward()
        assert not c.requires_grad
        assert np.allclose(a.grad, 1.0)

    def test_deep_chain_does_not_recurse(self):
        a = Tensor(np.array([[1.0]]), requires_grad=True)
        out = a
        for _ in range(5000):
            out = scale(out, 1.0)
        out.backward()
        assert np.allclose(a.grad, [[1.0]])

    @given(st.integers(min_value=1, max_value=6),
           st.integers(min_value=1, max_value=6))
    @settings(max_examples=20, deadline=None)
    def test_matmul_grad_shapes(self, m, n):
        a = Tensor(np.ones((m, n)), requires_grad=True)
        b = Tensor(np.ones((n, m)), requires_grad=True)
        total(matmul(a, b)).backward()
        assert a.grad.shape == (m, n)
        assert b.grad.shape == (n, m)


class TestParameterStore:
    def test_init_is_order_independent(self):
        s1 = ParameterStore(seed=5)
        s1.create("w1", (4, 4))
        s1.create("w2", (4, 4))
        s2 = ParameterStore(seed=5)
        s2.create("w2", (4, 4))
        s2.create("w1", (4, 4))
        assert np.array_equal(s1.entries["w1"], s2.entries["w1"])
        assert np.array_equal(s1.entries["w2"], s2.entries["w2"])

    def test_different_names_different_values(self):
        s = ParameterStore(seed=5)
        assert not np.array_equal(s.create("a", (3, 3)), s.create("b", (3, 3)))

    def test_unknown_init_raises(self):
        with pytest.raises(AutodiffError):
            ParameterStore().create("w", (2, 2), init="lecun")

    def test_grad_check_on_small_mlp(self):
        store = ParameterStore(seed=1)
        store.create("W1", (3, 4))
        store.create("b1", (1, 4), init="zeros")
        store.create("W2", (4, 2))
        x = constant(RNG.normal(size=(5, 3)))

        def fn(leaves):
            h = relu(add(matmul(x, leaves["W1"]), leaves["b1"]))
            return total(matmul(h, leaves["W2"]))

        assert grad_check(fn, store) < 1e-7

    def test_grad_check_rejects_bad_step(self):
        store = ParameterStore(seed=1)
        store.create("w", (2, 2))
        with pytest.raises(AutodiffError):
            grad_check(lambda lv: total(lv["w"]), store, h=0.0)


class TestCheckpoints:
    def test_round_trip_bitwise(self, tmp_path):
        store = ParameterStore(seed=9)
        store.create("enc.W", (7, 3))
        store.create("enc.b", (1, 3), init="zeros")
        store.entries["enc.b"] += 0.25
        path = os.path.join(tmp_path, "ckpt.bin")
        save_checkpoint(store, path)
        loaded = load_checkpoint(path)
        assert loaded.names() == store.names()
        for name in store.names():
            # float32 storage: exact after a float32 round trip
            assert np.array_equal(loaded.entries[name],
                                  store.entries[name].astype(np.float32).astype(np.float64))

    def test_manifest_is_first_line_json(self, tmp_path):
        import json
        store = ParameterStore(seed=9)
        store.create("w", (2, 2))
        path = os.path.join(tmp_path, "ckpt.bin")
        save_checkpoint(store, path)
        with open(path, "rb") as fh:
            manifest = json.loads(fh.readline().decode())
        assert "w" in str(manifest)
