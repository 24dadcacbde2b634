import numpy as np
import pytest

from engress import losses, mlp, optim
from engress.core import Rng
from engress.errors import DomainError, ShapeError, TrainingDiverged


def tiny_net(noise_dim=0, seed=0):
    cfg = mlp.NetConfig(in_dim=1, out_dim=1, hidden_dim=16, num_layers=1,
                        noise_dim=noise_dim)
    return cfg, mlp.init_params(cfg, Rng(seed))


class TestAdam:
    def test_first_step_unit_scaled(self):
        cfg, p = tiny_net()
        for arr in p.arrays():
            arr[:] = 0.0
        g = mlp.zeros_like_params(p)
        for arr in g.arrays():
            arr[:] = 1.0
        state = optim.adam_init(p, lr=0.1)
        optim.adam_step(p, g, state)
        # bias correction makes the first step lr * g / (|g| + eps)
        for arr in p.arrays():
            assert np.allclose(arr, -0.1, atol=1e-8)

    def test_zero_grad_no_change(self):
        cfg, p = tiny_net(seed=3)
        before = [a.copy() for a in p.arrays()]
        state = optim.adam_init(p, lr=0.1)
        optim.adam_step(p, mlp.zeros_like_params(p), state)
        for a, b in zip(p.arrays(), before):
            assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        cfg, p = tiny_net()
        cfg2, p2 = tiny_net()
        g = mlp.zeros_like_params(p2)
        g.weights[0] = np.zeros((2, 2))
        with pytest.raises(ShapeError):
            optim.adam_step(p, g, optim.adam_init(p, lr=0.1))


class TestTrainConfig:
    def test_m_per_obs_validation(self):
        with pytest.raises(DomainError):
            optim.TrainConfig(m_per_obs=1, loss=losses.LossSpec("energy"))

    def test_pointwise_allows_m1(self):
        optim.TrainConfig(m_per_obs=1, loss=losses.LossSpec("l2"))


class TestTrain:
    def test_zero_steps_no_change(self):
        cfg, p = tiny_net(seed=1)
        before = [a.copy() for a in p.arrays()]
        x = np.linspace(-1, 1, 20)[:, None]
        tc = optim.TrainConfig(steps=0, lr=1e-2, loss=losses.LossSpec("l2"))
        p, trace = optim.train(p, cfg, x, 2 * x, tc, Rng(0))
        assert trace.size == 0
        for a, b in zip(p.arrays(), before):
            assert np.array_equal(a, b)

    def test_l2_linear_regression(self):
        cfg, p = tiny_net(seed=2)
        x = np.linspace(-2, 2, 128)[:, None]
        y = 2.0 * x
        tc = optim.TrainConfig(steps=2000, lr=1e-2, loss=losses.LossSpec("l2"))
        p, trace = optim.train(p, cfg, x, y, tc, Rng(1))
        pred, _ = mlp.forward(p, cfg, x)
        assert float(np.mean((pred - y) ** 2)) < 1e-3
        assert np.all(np.isfinite(trace))

    def test_bit_reproducible(self):
        results = []
        for _ in range(2):
            cfg, p = tiny_net(noise_dim=4, seed=5)
            x = np.linspace(0, 1, 32)[:, None]
            y = x + 0.1
            tc = optim.TrainConfig(steps=50, lr=1e-2, loss=losses.LossSpec("energy"))
            p, trace = optim.train(p, cfg, x, y, tc, Rng(7))
            results.append((np.concatenate([a.ravel() for a in p.arrays()]), trace))
        assert np.array_equal(results[0][0], results[1][0])
        assert np.array_equal(results[0][1], results[1][1])

    def test_energy_loss_learns_conditional_spread(self):
        # Y = X + N(0,1): the fitted sampler's spread at x=0 approaches 1
        rng = Rng(11)
        n = 2000
        x = (4 * rng.uniform(n) - 2)[:, None]
        y = x + rng.normal(size=(n, 1))
        cfg = mlp.NetConfig(in_dim=1, out_dim=1, hidden_dim=100, num_layers=1,
                            noise_dim=100)
        p = mlp.init_params(cfg, Rng(12))
        tc = optim.TrainConfig(steps=800, lr=1e-2, loss=losses.LossSpec("energy"))
        p, _ = optim.train(p, cfg, x, y, tc, Rng(13))
        draws, _ = mlp.forward(p, cfg, np.zeros((400, 1)), rng=Rng(14))
        assert 0.8 <= float(draws.std()) <= 1.2

    def test_divergence_raises_with_step(self):
        # an absurd learning rate overflows the squared loss right after
        # the first update
        cfg, p = tiny_net(seed=8)
        x = np.ones((10, 1))
        y = np.ones((10, 1))
        tc = optim.TrainConfig(steps=5, lr=1e200, loss=losses.LossSpec("l2"))
        with pytest.raises(TrainingDiverged) as err:
            with np.errstate(over="ignore", invalid="ignore"):
                optim.train(p, cfg, x, y, tc, Rng(2))
        assert err.value.step >= 0

    def test_nonfinite_data_rejected(self):
        cfg, p = tiny_net()
        x = np.array([[np.nan]])
        tc = optim.TrainConfig(steps=1, loss=losses.LossSpec("l2"))
        with pytest.raises(DomainError):
            optim.train(p, cfg, x, x, tc, Rng(0))

    def test_minibatch_runs(self):
        cfg, p = tiny_net(noise_dim=2, seed=9)
        x = np.linspace(0, 1, 64)[:, None]
        tc = optim.TrainConfig(steps=30, lr=1e-2, batch_size=16,
                               loss=losses.LossSpec("energy"))
        p, trace = optim.train(p, cfg, x, x, tc, Rng(3))
        assert np.all(np.isfinite(trace))
