import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmflow import autodiff as ad


def central_diff_jacobian(f, x, h=1e-5):
    """Finite-difference Jacobian oracle, independent of the engine."""
    x = np.asarray(x, dtype=np.float64)
    y0 = np.ravel(f(x))
    J = np.zeros((y0.size, x.size))
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx.ravel()[i] = h
        J[:, i] = (np.ravel(f(x + dx)) - np.ravel(f(x - dx))) / (2 * h)
    return J


def central_diff_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx.ravel()[i] = h
        g.ravel()[i] = (f(x + dx) - f(x - dx)) / (2 * h)
    return g


def small_net(x):
    """3-layer nonlinear map used as a generic nonlinear program."""
    rng = np.random.default_rng(0)
    W1 = ad.constant(rng.normal(size=(3, 3)))
    W2 = ad.constant(rng.normal(size=(3, 3)))
    h = ad.tanh(ad.matmul(ad.reshape(x, (1, 3)), W1))
    h = ad.sigmoid(ad.matmul(h, W2)) + h
    return ad.reshape(h, (3,))


def small_net_np(x):
    rng = np.random.default_rng(0)
    W1 = rng.normal(size=(3, 3))
    W2 = rng.normal(size=(3, 3))
    h = np.tanh(x.reshape(1, 3) @ W1)
    h = 1 / (1 + np.exp(-(h @ W2))) + h
    return h.reshape(3)


class TestJvp:
    def test_identity_program(self):
        out, jt = ad.jvp(lambda x: x, np.zeros(2), np.array([1.0, 0.0]))
        np.testing.assert_array_equal(jt, [1.0, 0.0])

    def test_linear_map(self):
        A = np.array([[2.0, 0.0], [0.0, 3.0]])
        f = lambda z: ad.reshape(ad.matmul(ad.constant(A), ad.reshape(z, (2, 1))), (2,))
        _, jt = ad.jvp(f, np.zeros(2), np.ones(2))
        np.testing.assert_allclose(jt, [2.0, 3.0])

    def test_shape_mismatch(self):
        with pytest.raises(ad.ShapeMismatchError):
            ad.jvp(lambda x: x, np.zeros(2), np.zeros(3))

    def test_matches_finite_differences(self):
        x = np.random.default_rng(1).normal(size=3)
        J_fd = central_diff_jacobian(small_net_np, x)
        J_ad = ad.jacobian(small_net, x)
        np.testing.assert_allclose(J_ad, J_fd, rtol=1e-5, atol=1e-7)


class TestVjp:
    def test_identity(self):
        _, row = ad.vjp(lambda x: x, np.zeros(3), np.array([0.0, 1.0, 0.0]))
        np.testing.assert_array_equal(row, [0.0, 1.0, 0.0])

    def test_linear_map_row(self):
        A = np.array([[1.0, 1.0], [0.0, 1.0]])
        f = lambda z: ad.reshape(ad.matmul(ad.constant(A), ad.reshape(z, (2, 1))), (2,))
        _, row = ad.vjp(f, np.zeros(2), np.array([0.0, 1.0]))
        np.testing.assert_allclose(row, [0.0, 1.0])

    def test_transpose_consistency(self):
        """Rows from vjps == transpose of columns from jvps, entrywise."""
        x = np.random.default_rng(2).normal(size=3)
        J_cols = ad.jacobian(small_net, x)
        rows = []
        _, pull = ad.linearize_vjp(small_net, x)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            rows.append(pull(e).value)
        J_rows = np.stack(rows, axis=0)
        np.testing.assert_allclose(J_rows, J_cols, atol=1e-12)


class TestGrad:
    def test_quadratic(self):
        theta = np.array([1.0, -2.0, 0.5])
        g = ad.grad(lambda t: ad.mul(ad.sum_(ad.mul(t, t)), 0.5), theta)
        np.testing.assert_allclose(g, theta)

    def test_grad_through_vjp_row(self):
        """log squared norm of one vjp row of a parametrized linear map."""

        def loss_np(a):
            A = a.reshape(2, 2)
            row = np.array([0.0, 1.0]) @ A
            return np.log(np.sum(row**2))

        def loss(a):
            A = ad.reshape(a, (2, 2))
            f = lambda z: ad.reshape(ad.matmul(A, ad.reshape(z, (2, 1))), (2,))
            _, row = ad.vjp(f, ad.constant(np.zeros(2)), ad.constant([0.0, 1.0]))
            return ad.log(ad.sum_(ad.mul(row, row)))

        a0 = np.array([1.3, 0.4, -0.2, 2.0])
        g = ad.grad(loss, a0)
        g_fd = central_diff_grad(loss_np, a0)
        np.testing.assert_allclose(g, g_fd, rtol=1e-6, atol=1e-9)

    def test_grad_through_jvp_column(self):
        def loss_np(a):
            A = a.reshape(2, 2)
            col = A @ np.array([1.0, 0.0])
            return np.sum(np.tanh(col) ** 2)

        def loss(a):
            A = ad.reshape(a, (2, 2))
            f = lambda z: ad.reshape(ad.matmul(A, ad.reshape(z, (2, 1))), (2,))
            _, col = ad.jvp(f, ad.constant(np.zeros(2)), ad.constant([1.0, 0.0]))
            t = ad.tanh(col)
            return ad.sum_(ad.mul(t, t))

        a0 = np.array([0.3, -1.4, 0.9, 0.1])
        g = ad.grad(loss, a0)
        np.testing.assert_allclose(g, central_diff_grad(loss_np, a0), rtol=1e-6, atol=1e-9)

    def test_nonfinite_gradient_reports_index(self):
        def loss(t):
            return ad.sum_(ad.div(ad.constant([1.0, 1.0]), t))

        prev = ad.set_finite_checks(False)
        try:
            with pytest.raises(ad.NonFiniteError, match="index 0"):
                ad.grad(loss, np.array([0.0, 1.0]))
        finally:
            ad.set_finite_checks(prev)

    def test_nonscalar_rejected(self):
        with pytest.raises(ad.AutodiffError):
            ad.grad(lambda t: t, np.zeros(2))


class TestPrimitives:
    @pytest.mark.parametrize(
        "op,ref",
        [
            (ad.exp, np.exp),
            (ad.log, np.log),
            (ad.tanh, np.tanh),
            (ad.sigmoid, lambda v: 1 / (1 + np.exp(-v))),
            (ad.relu, lambda v: np.maximum(v, 0)),
            (ad.softplus, lambda v: np.log1p(np.exp(-np.abs(v))) + np.maximum(v, 0)),
        ],
    )
    def test_elementwise_values_and_grads(self, op, ref):
        x = np.array([0.3, 0.9, 2.2])
        out = op(ad.constant(x))
        np.testing.assert_allclose(out.value, ref(x), rtol=1e-12)
        g = ad.grad(lambda t: ad.sum_(op(t)), x)
        g_fd = central_diff_grad(lambda v: np.sum(ref(v)), x, h=1e-6)
        np.testing.assert_allclose(g, g_fd, rtol=1e-6, atol=1e-9)

    def test_power_and_sqrt(self):
        x = np.array([0.5, 2.0])
        np.testing.assert_allclose(ad.power(ad.constant(x), 3).value, x**3)
        g = ad.grad(lambda t: ad.sum_(ad.sqrt(t)), x)
        np.testing.assert_allclose(g, 0.5 / np.sqrt(x))

    def test_slice_concat_roundtrip(self):
        x = np.arange(6.0).reshape(2, 3)
        n = ad.constant(x)
        parts = [ad.slice_(n, (slice(None), slice(0, 1))), ad.slice_(n, (slice(None), slice(1, 3)))]
        back = ad.concat(parts, axis=1)
        np.testing.assert_array_equal(back.value, x)
        g = ad.grad(lambda t: ad.sum_(ad.mul(ad.concat(
            [ad.slice_(t, (slice(None), slice(0, 1))),
             ad.slice_(t, (slice(None), slice(1, 3)))], axis=1), ad.constant(x))), x)
        np.testing.assert_array_equal(g, x)

    def test_where_mask(self):
        mask = np.array([True, False, True])
        a, b = np.ones(3), np.zeros(3)
        out = ad.where_mask(mask, ad.constant(a), ad.constant(b))
        np.testing.assert_array_equal(out.value, [1.0, 0.0, 1.0])
        g = ad.grad(lambda t: ad.sum_(ad.where_mask(mask, t, ad.constant(b))), a)
        np.testing.assert_array_equal(g, mask.astype(float))

    def test_stop_gradient(self):
        g = ad.grad(lambda t: ad.sum_(ad.mul(t, ad.stop_gradient(t))), np.array([3.0]))
        np.testing.assert_allclose(g, [3.0])

    def test_logsumexp_stable(self):
        x = np.array([[1000.0, 1000.0, 999.0]])
        out = ad.logsumexp(ad.constant(x), axis=1)
        expect = 1000.0 + np.log(2 + np.exp(-1.0))
        np.testing.assert_allclose(out.value, [expect])
        g = ad.grad(lambda t: ad.sum_(ad.logsumexp(t, axis=1)), x)
        e = np.exp(x - x.max())
        np.testing.assert_allclose(g, e / e.sum(), rtol=1e-12)

    def test_matmul_grad(self):
        A = np.random.default_rng(3).normal(size=(2, 3))
        B = np.random.default_rng(4).normal(size=(3, 2))

        def loss(a):
            return ad.sum_(ad.matmul(ad.reshape(a, (2, 3)), ad.constant(B)))

        g = ad.grad(loss, A.ravel())
        np.testing.assert_allclose(g.reshape(2, 3), np.ones((2, 2)) @ B.T)

    def test_nonfinite_intermediate_raises(self):
        with pytest.raises(ad.NonFiniteError):
            ad.log(ad.constant([-1.0]))

    def test_broadcast_binary_grad(self):
        x = np.ones((2, 3))
        b = np.array([1.0, 2.0, 3.0])
        g = ad.grad(lambda t: ad.sum_(ad.mul(ad.constant(x), ad.broadcast_to(ad.reshape(t, (1, 3)), (2, 3)))), b)
        np.testing.assert_allclose(g, [2.0, 2.0, 2.0])


class TestProperties:
    @given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=25, deadline=None)
    def test_jvp_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=3)
        u = rng.normal(size=3)
        v = rng.normal(size=3)
        _, push = ad.linearize(small_net, x)
        lhs = push(a * u + b * v).value
        rhs = a * push(u).value + b * push(v).value
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_transpose_consistency_random_points(self, seed):
        x = np.random.default_rng(seed).normal(size=3)
        J = ad.jacobian(small_net, x)
        _, pull = ad.linearize_vjp(small_net, x)
        rows = np.stack([pull(np.eye(3)[i]).value for i in range(3)])
        np.testing.assert_allclose(rows, J, atol=1e-12)

    def test_reexecution_bitwise_identical(self):
        x = np.random.default_rng(7).normal(size=3)
        a = small_net(ad.constant(x)).value
        b = small_net(ad.constant(x)).value
        assert np.array_equal(a, b)

    def test_probe_counter(self):
        ad.reset_probe_count()
        ad.jvp(lambda x: x, np.zeros(2), np.ones(2))
        ad.vjp(lambda x: x, np.zeros(2), np.ones(2))
        assert ad.probe_count() == 2
        ad.reset_probe_count()
        assert ad.probe_count() == 0

    def test_second_order_scalar(self):
        """d/dx of (x * dy/dx) for y = x^3: derivative of 3x^3 is 9x^2."""

        def inner(x):
            g = ad.grad(lambda t: ad.sum_(ad.power(t, 3)), x)
            return ad.sum_(ad.mul(x, g))

        x0 = np.array([2.0])
        g2 = ad.grad(inner, x0)
        np.testing.assert_allclose(g2, 9 * x0**2)
