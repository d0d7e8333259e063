import numpy as np
import pytest

from asm2tv.optim import Adam, AdamState, adam_step
from asm2tv.tensor import ShapeError, Tensor


class TestAdamStep:
    def test_first_step_is_sign_like(self):
        rng   = np.random.default_rng(42)
        p     = {"w": rng.normal(size=(3, 4))}
        g     = {"w": rng.normal(size=(3, 4))}
        state = AdamState(lr=1e-3, weight_decay=0.0)
        new, _ = adam_step(p, g, state)
        delta = new["w"] - p["w"]
        expected = -state.lr * g["w"] / (np.abs(g["w"]) + state.eps)
        assert np.max(np.abs(delta - expected)) < 1e-12

    def test_zero_grad_leaves_params(self):
        p = {"w": np.ones((2, 2))}
        new, _ = adam_step(p, {"w": np.zeros((2, 2))}, AdamState(weight_decay=0.0))
        np.testing.assert_array_equal(new["w"], p["w"])

    def test_deterministic(self):
        rng   = np.random.default_rng(42)
        p     = {"a": rng.normal(size=5), "b": rng.normal(size=(2, 2))}
        grads = [{k: rng.normal(size=v.shape) for k, v in p.items()} for _ in range(5)]

        def run():
            cur, st = dict(p), AdamState()
            for g in grads:
                cur, st = adam_step(cur, g, st)
            return cur

        a, b = run(), run()
        for k in p:
            assert np.array_equal(a[k], b[k])

    def test_does_not_write_in_place(self):
        p = {"w": np.ones(3)}
        adam_step(p, {"w": np.ones(3)}, AdamState())
        np.testing.assert_array_equal(p["w"], np.ones(3))

    def test_weight_decay_shrinks_with_zero_grad(self):
        p = {"w": np.full(2, 2.0)}
        new, _ = adam_step(p, {"w": np.zeros(2)}, AdamState(lr=0.1, weight_decay=0.5))
        np.testing.assert_allclose(new["w"], 2.0 - 0.1 * 0.5 * 2.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.ones(3)}, {"w": np.ones(4)}, AdamState())
        with pytest.raises(ShapeError):
            adam_step({"w": np.ones(3)}, {"v": np.ones(3)}, AdamState())


class TestAdam:
    def test_minimises_quadratic(self):
        from asm2tv import tensor as T
        x   = Tensor([3.0, -2.0], requires_grad=True)
        opt = Adam([("x", x)], lr=0.1, weight_decay=0.0)
        for _ in range(300):
            opt.zero_grad()
            T.backward(T.sum(T.mul(x, x)))
            opt.step()
        assert np.abs(x.data).max() < 0.05
        assert opt.state.step == 300

    def test_rejects_duplicates_and_frozen(self):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError):
            Adam([("x", x), ("x", x)])
        with pytest.raises(ValueError):
            Adam([("c", Tensor([1.0]))])

    def test_set_lr(self):
        opt = Adam([("x", Tensor([1.0], requires_grad=True))])
        opt.set_lr(0.5)
        assert opt.state.hyperparameters()["lr"] == 0.5

    def test_zero_grad_clears_every_parameter(self):
        from asm2tv import tensor as T
        x, y = Tensor([1.0, 2.0], requires_grad=True), Tensor([[3.0]], requires_grad=True)
        opt  = Adam([("x", x), ("y", y)])
        T.backward(T.sum(T.mul(x, x)) + T.sum(y))
        assert np.abs(x.grad).sum() > 0 and y.grad[0, 0] == 1.0
        opt.zero_grad()
        np.testing.assert_array_equal(x.grad, 0.0)
        np.testing.assert_array_equal(y.grad, 0.0)
