import math

import numpy as np
import pytest
from scipy import optimize

from asm2tv import tensor as T
from asm2tv.losses import (LOSS_COLUMNS, LossBreakdown, UncertaintyParams, cross_entropy,
                           fusion_regularizer, gca_loss, kl_divergence, total_objective)
from asm2tv.tensor import ShapeError, Tensor


def _kl(p, q):
    p, q = np.asarray(p, float), np.maximum(np.asarray(q, float), 1e-12)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


class TestCrossEntropy:
    def test_confident_true_class(self):
        assert cross_entropy(Tensor([[50.0, -50.0]]), [0]).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_logits(self):
        assert cross_entropy(Tensor(np.zeros((3, 5))), [0, 1, 4]).item() == pytest.approx(math.log(5))

    def test_matches_direct_evaluation(self):
        rng    = np.random.default_rng(42)
        z      = rng.normal(size=(6, 4))
        y      = rng.integers(0, 4, size=6)
        logp   = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        direct = -np.mean(logp[np.arange(6), y])
        assert cross_entropy(Tensor(z), y).item() == pytest.approx(direct, abs=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(ValueError):
            cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


class TestFusionRegularizer:
    def test_agreement_is_zero(self):
        p = Tensor([[0.2, 0.8]])
        assert fusion_regularizer({0: [p, p]}, {0: p}).item() == 0.0

    def test_hand_value(self):
        out = fusion_regularizer({0: [Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]])]},
                                 {0: Tensor([[0.5, 0.5]])})
        assert out.item() == pytest.approx(math.sqrt(0.5))

    def test_halving_deviation_halves_value(self):
        rng    = np.random.default_rng(42)
        anchor = rng.dirichlet(np.ones(3), size=4)
        views  = [rng.dirichlet(np.ones(3), size=4) for _ in range(3)]
        full   = fusion_regularizer({0: [Tensor(v) for v in views]}, {0: Tensor(anchor)}).item()
        half   = fusion_regularizer({0: [Tensor(anchor + (v - anchor) / 2) for v in views]},
                                    {0: Tensor(anchor)}).item()
        assert half == pytest.approx(full / 2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fusion_regularizer({0: [Tensor([[1.0, 0.0]])]}, {0: Tensor([[1.0, 0.0, 0.0]])})


class TestKl:
    def test_self_is_zero(self):
        p = Tensor([0.1, 0.6, 0.3])
        assert kl_divergence(p, p).item() == pytest.approx(0.0, abs=1e-15)

    def test_log_two(self):
        assert kl_divergence(Tensor([1.0, 0.0]), Tensor([0.5, 0.5])).item() == pytest.approx(math.log(2))

    def test_matches_direct_sum_and_is_nonnegative(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
            value = kl_divergence(Tensor(p), Tensor(q)).item()
            assert value == pytest.approx(_kl(p, q), abs=1e-12)
            assert value >= 0

    def test_one_value_per_row(self):
        p = Tensor(np.full((3, 2), 0.5))
        assert kl_divergence(p, p).shape == (3,)

    def test_negative_entries(self):
        with pytest.raises(ValueError):
            kl_divergence(Tensor([1.2, -0.2]), Tensor([0.5, 0.5]))


class TestGcaLoss:
    ref = np.array([[0.7, 0.2, 0.1]])
    near = np.array([[0.6, 0.3, 0.1]])
    far = np.array([[0.2, 0.3, 0.5]])

    def test_identical_families_zero(self):
        p     = Tensor(self.ref)
        terms = gca_loss({0: p}, {0: [p, p]}, {0: [p, p]}, UncertaintyParams(1))
        assert terms.total.item() == pytest.approx(0.0, abs=1e-15)

    def test_direct_substitution(self):
        params = UncertaintyParams(1)
        params.alpha.data = np.array([0.3])
        params.beta.data  = np.array([-0.4])
        c, d = _kl(self.ref[0], self.near[0]), _kl(self.ref[0], self.far[0])
        assert d < 2.0
        terms = gca_loss({0: Tensor(self.ref)}, {0: [Tensor(self.near)] * 2},
                         {0: [Tensor(self.far)] * 2}, params, margin=2.0)
        a, b = 0.3, -0.4
        expected = 2 * (math.exp(-a) * c + a) + 2 * (-math.exp(-b) * d + b)
        assert terms.total.item() == pytest.approx(expected, abs=1e-12)

    def test_margin_caps_discrimination(self):
        far = np.array([[1e-9, 1e-9, 1.0 - 2e-9]])
        terms = gca_loss({0: Tensor(self.ref)}, {0: [Tensor(self.ref)]},
                         {0: [Tensor(far)] * 2}, UncertaintyParams(1), margin=0.5)
        assert terms.discrimination.item() == pytest.approx(-1.0)

    def test_alpha_stationary_at_log_c(self):
        c      = _kl(self.ref[0], self.near[0])
        params = UncertaintyParams(1)
        params.alpha.data = np.array([math.log(c)])
        terms = gca_loss({0: Tensor(self.ref)}, {0: [Tensor(self.near)] * 3},
                         {0: [Tensor(self.far)] * 2}, params)
        T.backward(terms.total)
        assert params.alpha.grad[0] == pytest.approx(0.0, abs=1e-12)

    def test_consistency_minimised_over_alpha_at_log_c(self):
        c = _kl(self.ref[0], self.near[0])

        def consistency(a):
            params = UncertaintyParams(1)
            params.alpha.data = np.array([a])
            return gca_loss({0: Tensor(self.ref)}, {0: [Tensor(self.near)]},
                            {0: [Tensor(self.far)] * 2}, params).consistency.item()

        best = optimize.minimize_scalar(consistency, bounds=(-10.0, 5.0), method="bounded",
                                        options={"xatol": 1e-8})
        assert best.x == pytest.approx(math.log(c), abs=1e-4)

    def test_reference_gets_no_gradient(self):
        ref = Tensor(self.ref, requires_grad=True)
        q   = Tensor(self.near, requires_grad=True)
        T.backward(gca_loss({0: ref}, {0: [q]}, {0: [q, q]}, UncertaintyParams(1)).total)
        np.testing.assert_array_equal(ref.grad, 0.0)
        assert np.abs(q.grad).sum() > 0

    def test_requires_internal_and_external_pair(self):
        p = Tensor(self.ref)
        with pytest.raises(ValueError):
            gca_loss({0: p}, {0: []}, {0: [p, p]}, UncertaintyParams(1))
        with pytest.raises(ValueError):
            gca_loss({0: p}, {0: [p]}, {0: [p]}, UncertaintyParams(1))


class TestTotalObjective:
    def test_supervised_only(self):
        l_s = Tensor(1.25)
        assert total_objective(l_s, Tensor(9.0), None, 0.0, 0.0) is l_s

    def test_unsupervised_only(self):
        assert total_objective(Tensor(0.0), Tensor(0.0), Tensor(0.8), 1.0, 0.1).item() == pytest.approx(0.8)

    def test_linear_in_lambda(self):
        parts = Tensor(0.5), Tensor(0.2), Tensor(0.3)
        j = [total_objective(*parts, lam, 0.1).item() for lam in (0.5, 1.0, 1.5)]
        assert j[1] - j[0] == pytest.approx(j[2] - j[1])

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            total_objective(Tensor(0.0), Tensor(0.0), Tensor(0.0), -1.0, 0.0)


def test_breakdown_row_has_every_column():
    row = LossBreakdown(Tensor(1.0), Tensor(0.5), None, None, Tensor(1.05), 5.0, 0.0, 0.0).as_row(3)
    assert tuple(row) == LOSS_COLUMNS
    assert row["L_u_cons"] == 0.0 and row["step"] == 3
