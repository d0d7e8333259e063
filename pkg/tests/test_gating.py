import numpy as np
import pytest
from scipy import stats

from asm2tv.gating import (GatingPolicy, export_gate_matrix, gate_weights, gumbel_from_uniform,
                           hard_assignment, hard_mode, load_gate_matrix, sample_gumbel)


def _policy(logits, **kw):
    logits = np.asarray(logits, dtype=np.float64)
    policy = GatingPolicy(1, logits.shape[0], logits.shape[1], unit_mode="view", **kw)
    policy.logits.data = logits.copy()
    return policy


class TestGumbel:
    def test_u_one_over_e_gives_zero(self):
        assert gumbel_from_uniform(1 / np.e) == pytest.approx(0.0, abs=1e-15)

    def test_extremes_are_clamped(self):
        assert np.isfinite(gumbel_from_uniform([0.0, 1.0])).all()

    def test_same_seed_same_draws(self):
        np.testing.assert_array_equal(sample_gumbel(8, 3).values, sample_gumbel(8, 3).values)

    def test_needs_positive_count(self):
        with pytest.raises(ValueError):
            sample_gumbel(0, 1)

    def test_mean_is_euler_gamma(self):
        g = sample_gumbel(1_000_000, 0).values
        assert g.mean() == pytest.approx(np.euler_gamma, abs=0.005)

    def test_perturbed_argmax_is_categorical(self):
        pi     = np.array([0.2, 0.3, 0.5])
        n      = 100_000
        g      = sample_gumbel(n * pi.size, 11).values.reshape(n, pi.size)
        counts = np.bincount(np.argmax(np.log(pi) + g, axis=1), minlength=pi.size)
        np.testing.assert_allclose(counts / n, pi, atol=0.01)
        assert stats.chisquare(counts, n * pi).pvalue > 0.01


class TestGateWeights:
    def test_equal_logits_are_uniform(self):
        for tau in (0.1, 1.0, 7.0):
            p = _policy([[0.4, 0.4]], tau=tau)
            np.testing.assert_allclose(gate_weights(p, 0, np.zeros(2)).data, [0.5, 0.5])

    def test_always_on_the_simplex(self):
        rng = np.random.default_rng(42)
        for tau in (0.05, 0.5, 5.0):
            p = _policy(rng.normal(size=(1, 5)) * 4, tau=tau)
            for _ in range(50):
                w = gate_weights(p, 0, sample_gumbel(5, rng).values).data
                assert np.all(w >= 0) and abs(w.sum() - 1.0) <= 1e-12

    def test_low_temperature_is_near_one_hot(self):
        p = _policy([[0.0, 5.0]], tau=0.01)
        assert np.max(np.abs(gate_weights(p, 0, np.zeros(2)).data - [0.0, 1.0])) < 1e-6

    def test_unit_temperature_is_plain_softmax(self):
        z = np.random.default_rng(42).normal(size=(1, 5))
        p = _policy(z, tau=1.0)
        expected = np.exp(z[0]) / np.exp(z[0]).sum()
        np.testing.assert_allclose(gate_weights(p, 0, None).data, expected, atol=1e-14)

    def test_converges_to_argmax_of_perturbed_logits(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            z = rng.normal(size=(1, 4))
            g = sample_gumbel(4, rng).values
            s = np.sort(z[0] + g)
            if s[-1] - s[-2] <= 0.5:
                continue
            p = _policy(z, tau=0.01)
            onehot = np.eye(4)[np.argmax(z[0] + g)]
            assert np.max(np.abs(gate_weights(p, 0, g).data - onehot)) < 1e-6

    def test_hard_mode_is_exact_one_hot(self):
        p = _policy([[1.0, 3.0, 2.0]])
        p.mode = "hard"
        np.testing.assert_array_equal(gate_weights(p, 0, np.full(3, 9.0)).data, [0.0, 1.0, 0.0])

    def test_hard_mode_block_restores_soft(self):
        p = _policy([[1.0, 3.0, 2.0]], tau=2.0)
        with pytest.raises(RuntimeError):
            with hard_mode(p):
                np.testing.assert_array_equal(gate_weights(p, 0, np.full(3, 9.0)).data, [0.0, 1.0, 0.0])
                raise RuntimeError("boom")
        assert p.mode == "soft"
        assert gate_weights(p, 0, None).data.max() < 1.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            _policy([[0.0, 0.0]]).mode = "straight_through"

    def test_fixed_policy(self):
        p = GatingPolicy(2, 2, 3, fixed=[0, 2, 1, 1])
        assert p.logits is None and p.named_parameters() == []
        np.testing.assert_array_equal(gate_weights(p, 1, None).data, [0.0, 0.0, 1.0])
        assert p.draw(np.random.default_rng(0)) is None

    def test_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            GatingPolicy(1, 1, 2, tau=0.0)

    def test_gradient_reaches_logits(self):
        from asm2tv import tensor as T
        p = _policy([[0.1, -0.2, 0.3]])
        w = gate_weights(p, 0, np.zeros(3))
        T.backward(T.sum(T.mul(w, T.Tensor([1.0, 0.0, 0.0]))))
        assert np.abs(p.logits.grad).sum() > 0


class TestAssignment:
    def test_argmax(self):
        assert hard_assignment(_policy([[1, 3, 2]]))[0] == 1

    def test_tie_goes_to_lowest_block(self):
        assert hard_assignment(_policy([[2, 2]]))[0] == 0

    def test_units(self):
        p = GatingPolicy(2, 3, 2)
        assert p.n_units == 6 and p.unit(1, 2) == 5
        assert p.unit_labels()[4] == "t1_v1"
        q = GatingPolicy(2, 3, 2, unit_mode="view")
        assert q.n_units == 3 and q.unit(1, 2) == 2
        with pytest.raises(IndexError):
            p.unit(2, 0)


class TestExport:
    def test_zero_logits_uniform(self):
        frame = export_gate_matrix(GatingPolicy(2, 3, 4))
        assert list(frame.columns) == ["unit", "block_0", "block_1", "block_2", "block_3"]
        np.testing.assert_allclose(frame.iloc[:, 1:].to_numpy(), 0.25)

    def test_dominant_logits_near_one_hot(self):
        frame = export_gate_matrix(_policy([[40.0, 0.0], [0.0, 40.0]]))
        np.testing.assert_allclose(frame.iloc[:, 1:].to_numpy(), np.eye(2), atol=1e-12)

    def test_csv_roundtrip_is_exact(self, tmp_path):
        p = _policy(np.random.default_rng(42).normal(size=(3, 4)))
        frame = export_gate_matrix(p, tmp_path / "gates.csv")
        back  = load_gate_matrix(tmp_path / "gates.csv")
        np.testing.assert_array_equal(back.iloc[:, 1:].to_numpy(), frame.iloc[:, 1:].to_numpy())
        assert list(back["unit"]) == ["v0", "v1", "v2"]
