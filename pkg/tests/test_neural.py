import numpy as np

from svcsim.identify import (LinearEstimator, NeuralEstimator, TanhNetwork,
                             pure_delay_theta, regressor_length)
from svcsim.polyalg import PolyMatrix


def forward_oracle(net, x):
    """Independent two-loop forward pass."""
    xa = list(np.asarray(x) / net.input_scale) + [1.0]
    hidden = []
    for r in range(net.hidden):
        acc = 0.0
        for c in range(len(xa)):
            acc += net.w_hid[r, c] * xa[c]
        hidden.append(np.tanh(acc))
    hidden.append(1.0)
    out = []
    for r in range(net.n_out):
        acc = 0.0
        for c in range(len(hidden)):
            acc += net.w_out[r, c] * hidden[c]
        out.append(acc)
    return np.array(out)


def make_net(n_in=4, n_out=2, hidden=5, seed=0, **kw):
    rng = np.random.default_rng(seed)
    args = dict(w_max=100.0, learn_rate=1e-2, input_scale=1.0)
    args.update(kw)
    return TanhNetwork(n_in, n_out, hidden, rng=rng, **args)


class TestForward:
    def test_zero_weights_output_zero(self):
        net = make_net()
        net.w_hid[:] = 0.0
        net.w_out[:] = 0.0
        assert np.array_equal(net.forward(np.ones(4)), np.zeros(2))

    def test_zero_output_layer_any_hidden(self):
        net = make_net(seed=3)
        assert np.array_equal(net.forward(np.random.default_rng(0).standard_normal(4)),
                              np.zeros(2))

    def test_matches_two_loop_oracle(self):
        rng = np.random.default_rng(5)
        net = make_net(seed=5)
        net.w_out = rng.standard_normal(net.w_out.shape)
        for _ in range(10):
            x = rng.standard_normal(4)
            assert np.allclose(net.forward(x), forward_oracle(net, x), atol=1e-12)


class TestTraining:
    def test_zero_gradient_at_exact_fit(self):
        net = make_net(seed=7)
        x = np.ones(4)
        target = net.forward(x)
        w_hid, w_out = net.w_hid.copy(), net.w_out.copy()
        net.train_step(x, target)
        assert np.array_equal(net.w_hid, w_hid)
        assert np.array_equal(net.w_out, w_out)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        failures = 0
        for trial in range(100):
            net = make_net(n_in=3, n_out=2, hidden=4, seed=trial)
            net.w_out = 0.5 * rng.standard_normal(net.w_out.shape)
            x = rng.standard_normal(3)
            target = rng.standard_normal(2)
            g_hid, g_out, _ = net.gradients(x, target)
            step = 1e-6

            def loss():
                diff = net.forward(x) - target
                return 0.5 * float(diff @ diff)

            for w, g in ((net.w_hid, g_hid), (net.w_out, g_out)):
                num = np.zeros_like(w)
                it = np.nditer(w, flags=["multi_index"])
                while not it.finished:
                    idx = it.multi_index
                    orig = w[idx]
                    w[idx] = orig + step
                    lp = loss()
                    w[idx] = orig - step
                    lm = loss()
                    w[idx] = orig
                    num[idx] = (lp - lm) / (2 * step)
                    it.iternext()
                rel = np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12)
                if rel >= 1e-5:
                    failures += 1
        assert failures == 0

    def test_single_scalar_neuron_analytic(self):
        # one input, one hidden unit, one output; check against hand formula
        net = make_net(n_in=1, n_out=1, hidden=1, seed=1)
        net.w_hid = np.array([[0.7, -0.2]])
        net.w_out = np.array([[1.3, 0.4]])
        x = np.array([0.5])
        target = np.array([2.0])
        g_hid, g_out, y = net.gradients(x, target)
        z = 0.7 * 0.5 - 0.2
        a = np.tanh(z)
        y_hand = 1.3 * a + 0.4
        dy = y_hand - 2.0
        assert np.isclose(y[0], y_hand)
        assert np.allclose(g_out, [[dy * a, dy]])
        da = dy * 1.3
        dz = da * (1 - a * a)
        assert np.allclose(g_hid, [[dz * 0.5, dz]])

    def test_norm_cap_after_every_step(self):
        rng = np.random.default_rng(13)
        net = make_net(w_max=0.5, learn_rate=0.5, seed=13)
        for _ in range(50):
            net.train_step(rng.standard_normal(4), 10 * rng.standard_normal(2))
            assert np.linalg.norm(net.w_hid) <= 0.5 + 1e-12
            assert np.linalg.norm(net.w_out) <= 0.5 + 1e-12

    def test_nonfinite_gradient_skipped(self):
        net = make_net()
        net.w_out[:] = 1.0
        w_before = net.w_out.copy()
        ok = net.train_step(np.full(4, np.nan), np.ones(2))
        assert not ok
        assert np.array_equal(net.w_out, w_before)


class TestNeuralEstimator:
    def make(self, m=2, n=2, d=1, seed=0):
        f = PolyMatrix.from_scalar([1.0, -0.2], m)
        theta0 = pure_delay_theta(m, n, d, f)
        net = TanhNetwork(regressor_length(m, n, d), m, 6, w_max=50.0,
                          learn_rate=1e-2, input_scale=1.0,
                          rng=np.random.default_rng(seed))
        return NeuralEstimator(m, n, d, rho=0.1, h_min=1e-3, theta_box=1e3,
                               theta0=theta0, net=net)

    def test_reduces_to_linear_error_with_zero_net(self):
        est = self.make()
        lin = LinearEstimator(2, 2, 1, 0.1, 1e-3, 1e3, est.theta_est.lagged_theta().copy())
        rng = np.random.default_rng(4)
        y = rng.standard_normal(2)
        x = rng.standard_normal(est.theta.shape[0])
        h0 = est.forward(x)  # W_out starts at zero -> 0
        assert np.array_equal(h0, np.zeros(2))
        assert np.allclose(est.identification_error(y, x, h0),
                           lin.identification_error(y, x))

    def test_perfect_network_gives_zero_error(self):
        est = self.make()
        rng = np.random.default_rng(6)
        x = rng.standard_normal(est.theta.shape[0])
        h_true = rng.standard_normal(2)
        y = est.theta_est.lagged_theta().T @ x + h_true
        assert np.allclose(est.identification_error(y, x, h_true), 0.0, atol=1e-12)

    def test_cache_round_trip(self):
        est = self.make()
        est.cache_h(5, np.array([1.0, 2.0]))
        est.cache_h(6, np.array([3.0, 4.0]))
        assert np.array_equal(est.cached_h(5), [1.0, 2.0])
        assert est.has_cached_h(6) and not est.has_cached_h(4)

    def test_training_reduces_nonlinear_error(self):
        # static nonlinear map: train the net online; e_N should shrink
        # well below e_L for the same theta
        rng = np.random.default_rng(21)
        m, n, d = 1, 1, 1
        f = PolyMatrix.identity(1)
        theta_true = np.array([[0.3], [1.0]])
        est = NeuralEstimator(m, n, d, rho=0.02, h_min=1e-4, theta_box=1e3,
                              theta0=theta_true.copy(),
                              net=TanhNetwork(2, 1, 12, w_max=100.0, learn_rate=0.05,
                                              input_scale=1.0, rng=np.random.default_rng(3)))

        def h_fn(x):
            return np.array([0.5 * np.tanh(2.0 * x[0]) * x[1]])

        e_l_hist, e_n_hist = [], []
        for k in range(3000):
            x = rng.uniform(-1, 1, 2)
            y = theta_true.T @ x + h_fn(x)
            h_hat = est.forward(x)
            e_n = est.identification_error(y, x, h_hat)
            e_l = y - theta_true.T @ x  # linear-model error with true theta
            est.train(x, est.train_target(y, x))
            e_l_hist.append(np.linalg.norm(e_l))
            e_n_hist.append(np.linalg.norm(e_n))
        tail = slice(-300, None)
        assert np.mean(e_n_hist[tail]) < 0.5 * np.mean(e_l_hist[tail])
