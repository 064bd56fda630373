import numpy as np
import pytest

import pmflow.autodiff as ad
from pmflow import contours as ct
from pmflow import objectives as obj
from pmflow.cookbook import block_orthogonal_jacobian
from pmflow.errors import FlowError
from pmflow.layers import ActNorm, SlicePad
from pmflow.stack import FlowStack, GaussianPrior

from conftest import make_affine_stack, make_injective_stack, make_linear_stack


def identity_stack(dim=2):
    return FlowStack([ActNorm(dim)])


def embed_linear_injective(J: np.ndarray) -> FlowStack:
    """Injective stack computing x = J z for a tall J via zero-padding and a
    square completion of J."""
    n, m = J.shape
    W = np.zeros((n, n))
    W[:, :m] = J
    q, _ = np.linalg.qr(J)
    # complete with an orthonormal basis of the orthogonal complement
    full, _ = np.linalg.qr(np.hstack([J, np.random.default_rng(0).normal(size=(n, n - m))]))
    W[:, m:] = full[:, m:]
    lin = make_linear_stack(W)
    return FlowStack([SlicePad(m, n)] + lin.layers, prior=GaussianPrior(m),
                     params=lin.params)


class TestConfig:
    def test_rejects_bad_kind(self):
        with pytest.raises(FlowError):
            obj.ObjectiveConfig(kind="nope")

    def test_json_roundtrip(self):
        cfg = obj.ObjectiveConfig(kind="PF", alpha=10.0,
                                  partition=ct.Partition.singletons(2),
                                  estimator="UNBIASED_SINGLE_BLOCK", seed=3)
        clone = obj.ObjectiveConfig.from_json(cfg.to_json())
        assert clone == cfg


class TestPfLagrangian:
    def test_alpha_zero_is_nll(self, affine_stack_2d):
        x = np.random.default_rng(0).normal(size=(16, 2))
        part = ct.Partition.singletons(2)
        got = obj.pf_lagrangian(affine_stack_2d, x, 0.0, part)
        assert got == pytest.approx(obj.nll(affine_stack_2d, x), abs=1e-10)

    def test_identity_stack_alpha_one(self):
        stack = identity_stack()
        x = np.random.default_rng(1).normal(size=(8, 2))
        got = obj.pf_lagrangian(stack, x, 1.0, ct.Partition.singletons(2))
        expect = -np.mean(-0.5 * np.sum(x**2, axis=1) - np.log(2 * np.pi))
        assert got == pytest.approx(expect, abs=1e-12)

    def test_matches_contours_oracle(self, affine_stack_2d):
        x = np.random.default_rng(2).normal(size=(6, 2)) * 0.7
        part = ct.Partition.singletons(2)
        alpha = 3.0
        per_point = []
        for xi in x:
            z, _ = affine_stack_2d.inverse(xi)
            per_point.append(
                -float(affine_stack_2d.log_prob(xi))
                + alpha * ct.forward_partition_pmi(affine_stack_2d, z, part)
            )
        got = obj.pf_lagrangian(affine_stack_2d, x, alpha, part)
        assert got == pytest.approx(np.mean(per_point), abs=1e-10)


class TestPfObjective:
    def test_alpha_zero_is_nll(self, affine_stack_2d):
        x = np.random.default_rng(3).normal(size=(16, 2))
        got = obj.pf_objective(affine_stack_2d, x, 0.0, ct.Partition.singletons(2))
        assert got == pytest.approx(obj.nll(affine_stack_2d, x), abs=1e-10)

    def test_identity_stack_any_alpha(self):
        stack = identity_stack()
        x = np.random.default_rng(4).normal(size=(8, 2))
        for alpha in (0.0, 1.0, 7.5):
            got = obj.pf_objective(stack, x, alpha, ct.Partition.singletons(2))
            expect = -np.mean(-0.5 * np.sum(x**2, axis=1) - np.log(2 * np.pi))
            assert got == pytest.approx(expect, abs=1e-12)

    def test_matches_ihat_oracle(self, affine_stack_2d):
        x = np.random.default_rng(5).normal(size=(6, 2)) * 0.7
        part = ct.Partition.singletons(2)
        alpha = 2.5
        per_point = []
        for xi in x:
            _, ihat = ct.partition_pmi(affine_stack_2d, part, x=xi)
            per_point.append(-float(affine_stack_2d.log_prob(xi)) - alpha * ihat)
        got = obj.pf_objective(affine_stack_2d, x, alpha, part)
        assert got == pytest.approx(np.mean(per_point), abs=1e-10)

    def test_orthogonal_flow_all_forms_equal_nll(self):
        rng = np.random.default_rng(6)
        J = block_orthogonal_jacobian(rng, 2, [[0], [1]])
        stack = make_linear_stack(J)
        x = rng.normal(size=(5, 2))
        part = ct.Partition.singletons(2)
        base = obj.nll(stack, x)
        assert obj.pf_objective(stack, x, 4.0, part) == pytest.approx(base, abs=1e-9)
        assert obj.pf_lagrangian(stack, x, 4.0, part) == pytest.approx(base, abs=1e-9)


class TestUnbiasedEstimator:
    def test_single_block_partition_identical(self, affine_stack_2d):
        x = np.random.default_rng(7).normal(size=(4, 2)) * 0.5
        part = ct.Partition.of_blocks([[0, 1]], dim=2)
        exact = obj.pf_objective(affine_stack_2d, x, 3.0, part)
        est = obj.pf_objective_unbiased(affine_stack_2d, x, 3.0, part, seed=0)
        assert est == pytest.approx(exact, abs=1e-12)

    def test_exhaustive_mean_equals_exact(self, affine_stack_2d):
        x = np.random.default_rng(8).normal(size=(4, 2)) * 0.5
        part = ct.Partition.singletons(2)
        p = affine_stack_2d.param_node()
        vals = []
        for k in (0, 1):
            choice = np.full(4, k)
            vals.append(
                obj.pf_objective_single_block_node(affine_stack_2d, p, x, 3.0, part, choice).value
            )
        exact = obj.pf_objective(affine_stack_2d, x, 3.0, part)
        assert np.mean(vals) == pytest.approx(exact, abs=1e-12)

    def test_probe_count_one_vjp_per_sample(self, affine_stack_2d):
        x = np.random.default_rng(9).normal(size=(32, 2)) * 0.5
        part = ct.Partition.singletons(2)
        ad.reset_probe_count()
        obj.pf_objective_unbiased(affine_stack_2d, x, 3.0, part, seed=1)
        assert ad.probe_count() == 1  # one batched sweep == one probe per sample
        ad.reset_probe_count()
        obj.pf_objective(affine_stack_2d, x, 3.0, part)
        assert ad.probe_count() == 2

    def test_unequal_blocks_rejected(self):
        stack = make_affine_stack(dim=3, seed=1)
        x = np.random.default_rng(0).normal(size=(3, 3)) * 0.3
        part = ct.Partition.of_blocks([[0], [1, 2]], dim=3)
        with pytest.raises(FlowError):
            obj.pf_objective_unbiased(stack, x, 1.0, part, seed=0)


class TestIpfObjective:
    def test_block_orthogonal_bound_tight(self):
        rng = np.random.default_rng(10)
        J = block_orthogonal_jacobian(rng, 3, [[0], [1]])
        stack = embed_linear_injective(J)
        z = rng.normal(size=(6, 2))
        part = ct.Partition.singletons(2)
        bound = obj.ipf_objective(stack, z, part)
        exact = -np.mean([stack.log_prob_injective(zi) for zi in z])
        assert bound == pytest.approx(exact, abs=1e-10)

    def test_shear_gap_half_log_two(self):
        J = np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
        stack = embed_linear_injective(J)
        z = np.random.default_rng(11).normal(size=(5, 2))
        part = ct.Partition.singletons(2)
        bound = obj.ipf_objective(stack, z, part)
        exact = -np.mean([stack.log_prob_injective(zi) for zi in z])
        assert bound - exact == pytest.approx(0.5 * np.log(2.0), abs=1e-10)

    def test_gap_equals_partition_pmi(self):
        stack = make_injective_stack(seed=12)
        part = ct.Partition.singletons(2)
        rng = np.random.default_rng(12)
        for _ in range(3):
            z = rng.normal(size=2) * 0.6
            bound = obj.ipf_objective(stack, z[None, :], part)
            exact = -stack.log_prob_injective(z)
            gap = bound - exact
            np.testing.assert_allclose(gap, ct.forward_partition_pmi(stack, z, part),
                                       atol=1e-10)
            assert gap >= -1e-10

    def test_square_alpha_one_special_case(self, affine_stack_2d):
        x = np.random.default_rng(13).normal(size=(4, 2)) * 0.5
        part = ct.Partition.singletons(2)
        z, _ = affine_stack_2d.inverse(x)
        lag = obj.pf_lagrangian(affine_stack_2d, x, 1.0, part)
        ipf = obj.ipf_objective(affine_stack_2d, z, part)
        assert lag == pytest.approx(ipf, abs=1e-10)


class TestIpfStages:
    def test_on_manifold_reconstruction_zero(self):
        stack = make_injective_stack(seed=14)
        z = np.random.default_rng(14).normal(size=(5, 2)) * 0.5
        x, _ = stack.forward(z)
        part = ct.Partition.singletons(2)
        with_recon = obj.ipf_stage1(stack, x, 10.0, part, seed=0)
        without = obj.ipf_stage1(stack, x, 0.0, part, seed=0)
        assert with_recon == pytest.approx(without, abs=1e-9)

    def test_off_manifold_linear_penalty(self):
        stack = FlowStack([SlicePad(1, 2)], prior=GaussianPrior(1))
        d = 0.37
        x = np.array([[0.3, d]])
        part = ct.Partition.singletons(1)
        g10 = obj.ipf_stage1(stack, x, 10.0, part, seed=0)
        g0 = obj.ipf_stage1(stack, x, 0.0, part, seed=0)
        assert g10 - g0 == pytest.approx(10.0 * d * d, abs=1e-12)

    def test_exhaustive_mean_matches_ipf_objective(self):
        stack = make_injective_stack(seed=15)
        z = np.random.default_rng(15).normal(size=(4, 2)) * 0.5
        x, _ = stack.forward(z)
        part = ct.Partition.singletons(2)
        p = stack.param_node()
        vals = [
            obj.ipf_stage1_single_block_node(stack, p, x, 0.0, part, np.full(4, k)).value
            for k in (0, 1)
        ]
        zg, _ = stack.inverse(x)
        expect = obj.ipf_objective(stack, zg, part)
        assert np.mean(vals) == pytest.approx(expect, abs=1e-12)

    def test_stage2_is_stage1_gamma_zero(self):
        stack = make_injective_stack(seed=16)
        x = stack.forward(np.random.default_rng(16).normal(size=(4, 2)) * 0.5)[0]
        part = ct.Partition.singletons(2)
        a = obj.ipf_stage2(stack, x, part, seed=5)
        b = obj.ipf_stage1(stack, x, 0.0, part, seed=5)
        assert a == pytest.approx(b, abs=1e-12)

    def test_probe_accounting_one_jvp_vs_latent_dim(self):
        stack = make_injective_stack(seed=17)
        x = stack.forward(np.random.default_rng(17).normal(size=(8, 2)) * 0.5)[0]
        part = ct.Partition.singletons(2)
        ad.reset_probe_count()
        obj.ipf_stage1(stack, x, 10.0, part, seed=0)
        assert ad.probe_count() == 1
        z, _ = stack.inverse(x)
        ad.reset_probe_count()
        obj.injective_nll(stack, z)
        assert ad.probe_count() == stack.latent_dim


class TestGradients:
    def _fd(self, f, p, h=1e-5):
        g = np.zeros_like(p)
        for i in range(p.size):
            dp = np.zeros_like(p)
            dp[i] = h
            g[i] = (f(p + dp) - f(p - dp)) / (2 * h)
        return g

    @staticmethod
    def _with_params(stack, params):
        clone = FlowStack.from_config(stack.config(), params=params.copy())
        return clone

    def test_pf_objective_grad_matches_fd(self):
        stack = make_affine_stack(dim=2, n_coupling=1, seed=18, hidden=4)
        x = np.random.default_rng(18).normal(size=(3, 2)) * 0.5
        part = ct.Partition.singletons(2)

        def value(pv):
            return obj.pf_objective(self._with_params(stack, pv), x, 2.0, part)

        loss = lambda p: obj.pf_objective_node(stack, p, x, 2.0, part)
        g = ad.grad(loss, stack.params)
        g_fd = self._fd(value, stack.params)
        scale = np.maximum(np.abs(g_fd), 1e-3)
        assert np.max(np.abs(g - g_fd) / scale) < 1e-4

    def test_pf_lagrangian_grad_matches_fd(self):
        stack = make_affine_stack(dim=2, n_coupling=1, seed=19, hidden=4)
        x = np.random.default_rng(19).normal(size=(3, 2)) * 0.5
        part = ct.Partition.singletons(2)

        def value(pv):
            return obj.pf_lagrangian(self._with_params(stack, pv), x, 2.0, part)

        g = ad.grad(lambda p: obj.pf_lagrangian_node(stack, p, x, 2.0, part), stack.params)
        g_fd = self._fd(value, stack.params)
        scale = np.maximum(np.abs(g_fd), 1e-3)
        assert np.max(np.abs(g - g_fd) / scale) < 1e-4

    def test_ipf_objective_grad_matches_fd(self):
        stack = make_injective_stack(seed=20)
        z = np.random.default_rng(20).normal(size=(3, 2)) * 0.5
        part = ct.Partition.singletons(2)

        def value(pv):
            return obj.ipf_objective(self._with_params(stack, pv), z, part)

        g = ad.grad(lambda p: obj.ipf_objective_node(stack, p, z, part), stack.params)
        g_fd = self._fd(value, stack.params)
        scale = np.maximum(np.abs(g_fd), 1e-3)
        assert np.max(np.abs(g - g_fd) / scale) < 1e-4
