import logging
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from rlmh.baselines import (AmalaConfig, ArwmhState, _arwmh_move, _mala_log_q, _mala_move,
                            _mala_point, adapt_eps, amala_run, arwmh_gamma, arwmh_run, arwmh_step,
                            blend_cov, jittered, mala, mala_step, summarize_warm_path, warm_start)
from rlmh.laplace import factorize
from rlmh.targets import Target, gaussian


def _flat(d):
    return Target(d, lambda x: 0.0, lambda x: np.zeros(d), "flat")


class TestArwmhStep:
    def test_initial_state(self):
        s = ArwmhState.initial(3)
        assert not s.x.any() and not s.mu.any() and s.lam == 1.0
        np.testing.assert_array_equal(s.cov, np.eye(3))

    def test_zero_gamma_freezes_adaptation(self, rng):
        s = ArwmhState(np.ones(2), np.array([0.5, 0.1]), np.diag([2.0, 3.0]), 1.7)
        for _ in range(20):
            s2, _ = arwmh_step(s, gaussian(dim=2), 0.0, rng)
            assert s2.lam == s.lam
            np.testing.assert_array_equal(s2.mu, s.mu)
            np.testing.assert_array_equal(s2.cov, s.cov)
            s = s2

    def test_scale_update(self, rng):
        s = ArwmhState.initial(2)
        s2, acc = arwmh_step(s, _flat(2), 0.5, rng)
        assert acc
        assert math.log(s2.lam) - math.log(s.lam) == pytest.approx(0.383, abs=1e-12)

    def test_covariance_shrinks_when_state_equals_mean(self, rng):
        x0 = np.array([1.0, -2.0])
        only_x0 = Target(2, lambda x: 0.0 if np.array_equal(x, x0) else -np.inf)
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        s = ArwmhState(x0.copy(), x0.copy(), cov, 1.0)
        s2, acc = arwmh_step(s, only_x0, 0.25, rng)
        assert not acc
        np.testing.assert_array_equal(s2.x, x0)
        np.testing.assert_allclose(s2.cov, 0.75 * cov, rtol=1e-15)

    def test_rank_one_recursion_matches_batch_oracle(self, rng):
        # with weights 1/i the recursion is a running average of (x_i - mu_{i-1})(...)^T
        tgt = gaussian(mean=[1.0, -1.0, 0.5], cov=np.diag([1.0, 2.0, 0.5]))
        s = ArwmhState.initial(3)
        xs = []
        for i in range(1, 401):
            s, _ = arwmh_step(s, tgt, 1.0 / i, rng)
            xs.append(s.x)
        X = np.array(xs)
        prev_mean = np.vstack([np.zeros(3), np.cumsum(X, axis=0)[:-1] / np.arange(1, 400)[:, None]])
        dev = X - prev_mean
        oracle_cov = np.einsum("ni,nj->ij", dev, dev) / X.shape[0]
        np.testing.assert_allclose(s.mu, X.mean(axis=0), rtol=0, atol=1e-8)
        np.testing.assert_allclose(s.cov, oracle_cov, rtol=0, atol=1e-8)

    def test_acceptance_matches_alpha_on_frozen_state(self):
        # E[accept] = E[alpha] from a fixed state; acceptance uses log U < log alpha
        rng = np.random.default_rng(0)
        tgt = gaussian(dim=2)
        s = ArwmhState(np.array([1.5, -0.5]), np.zeros(2), np.eye(2), 2.0)
        n = 20_000
        acc = np.empty(n)
        alpha = np.empty(n)
        for k in range(n):
            _, acc[k], _, la = _arwmh_move(s, tgt, 0.0, rng, 0.234, False)
            alpha[k] = math.exp(la)
        se = math.sqrt(0.25 / n)
        assert abs(acc.mean() - alpha.mean()) < 4 * se

    def test_gamma_schedule(self):
        assert arwmh_gamma(0, 0.6) == 0.5
        assert arwmh_gamma(3, 0.6) == pytest.approx(0.5 / 4 ** 0.6)


class TestArwmhRun:
    def test_acceptance_target(self):
        run = arwmh_run(gaussian(dim=5), 20_000, 0.6, np.random.default_rng(0))
        rate = run.accepted[10_000:].mean()
        assert 0.174 <= rate <= 0.294
        assert 1e-6 <= run.scales.min() and run.scales.max() <= 1e6

    def test_reproducible(self):
        a = arwmh_run(gaussian(dim=2), 500, 0.6, np.random.default_rng(4))
        b = arwmh_run(gaussian(dim=2), 500, 0.6, np.random.default_rng(4))
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.state.lam == b.state.lam

    def test_validation(self, rng):
        with pytest.raises(ValueError):
            arwmh_run(gaussian(dim=1), 0, 0.6, rng)
        with pytest.raises(ValueError):
            arwmh_run(gaussian(dim=1), 10, 1.5, rng)

    def test_frozen_run_does_not_adapt(self, rng):
        s = ArwmhState(np.zeros(2), np.ones(2), np.eye(2) * 2, 0.7)
        run = arwmh_run(gaussian(dim=2), 200, 0.6, rng, state=s, adapt=False)
        assert run.state.lam == 0.7
        np.testing.assert_array_equal(run.state.cov, s.cov)
        # proposals and log alpha line up with the acceptance flags
        moved = np.any(run.samples == run.proposals, axis=1)
        np.testing.assert_array_equal(moved, run.accepted)
        assert np.all(run.log_alpha <= 0)


class TestWarmStart:
    def test_identical_states(self):
        X = np.tile([3.0, -1.0], (12, 1))
        w = summarize_warm_path(X)
        np.testing.assert_array_equal(w.mean, [3.0, -1.0])
        np.testing.assert_allclose(w.cov, 1e-6 * np.eye(2), rtol=1e-15, atol=0)

    def test_final_third(self):
        X = np.arange(18.0).reshape(9, 2)
        w = summarize_warm_path(X)
        np.testing.assert_array_equal(w.mean, X[-3:].mean(axis=0))
        np.testing.assert_array_equal(w.x0, X[-1])
        np.testing.assert_allclose(w.cov, jittered(np.cov(X[-3:], rowvar=False)), rtol=1e-15)

    def test_ceil_of_third(self):
        X = np.random.default_rng(0).standard_normal((10, 1))
        w = summarize_warm_path(X)
        np.testing.assert_allclose(w.mean, X[-4:].mean(axis=0), rtol=1e-15)

    def test_diagonal_gaussian(self):
        tgt = gaussian(mean=[0.0, 0.0], cov=np.diag([4.0, 1.0]))
        w = warm_start(tgt, 10_000, 0.6, np.random.default_rng(0))
        np.testing.assert_allclose(np.diag(w.cov), [4.0, 1.0], rtol=0.3)
        assert w.samples.shape == (10_000, 2)

    def test_too_short(self, rng):
        with pytest.raises(ValueError):
            warm_start(gaussian(dim=1), 8, 0.6, rng)

    def test_degenerate_after_jitter(self):
        X = np.zeros((9, 2))
        X[:, 0] = [np.nan] * 9
        with pytest.raises(ValueError):
            summarize_warm_path(X)


class TestMala:
    def test_drift_example(self):
        tgt = gaussian(dim=1)
        cur = _mala_point(tgt, np.array([1.0]))
        rng = np.random.default_rng(0)
        z = np.random.default_rng(0).standard_normal(1)
        _, _, _, y, _ = _mala_move(cur, 0.5, factorize(np.eye(1)), tgt, rng)
        # y = ν(x) + sqrt(2ε) z with ν(1) = 1 + 0.5 * (-1) = 0.5
        np.testing.assert_allclose(y, 0.5 + z, rtol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_log_alpha_matches_density_oracle(self, seed):
        rng = np.random.default_rng(seed)
        d = 2
        A = rng.standard_normal((d, d))
        cov_t = A @ A.T + np.eye(d)
        tgt = gaussian(mean=rng.standard_normal(d), cov=cov_t)
        pre = np.diag(rng.uniform(0.5, 2.0, d))
        eps = 0.3
        x = rng.standard_normal(d)
        _, _, _, y, la = _mala_move(_mala_point(tgt, x), eps, factorize(pre), tgt, rng)

        def drift(v):
            return v + eps * pre @ tgt.grad_log_density(v)

        q = multivariate_normal
        log_ratio = (tgt.log_density(y) - tgt.log_density(x)
                     + q.logpdf(x, drift(y), 2 * eps * pre) - q.logpdf(y, drift(x), 2 * eps * pre))
        assert la == pytest.approx(min(0.0, log_ratio), abs=1e-10)

    def test_self_transition_log_alpha(self):
        tgt = gaussian(dim=2)
        p = _mala_point(tgt, np.array([0.3, -0.2]))
        f = factorize(np.eye(2))
        assert tgt.log_density(p.x) - p.log_p + _mala_log_q(p.x, p, 0.1, f) \
            - _mala_log_q(p.x, p, 0.1, f) == 0.0

    def test_tiny_step_accepts(self, rng):
        _, acc = mala(np.zeros(2), 1e-5, np.eye(2), 2000, gaussian(dim=2), rng)
        assert acc.mean() > 0.99

    def test_step_api(self, rng):
        x, acc = mala_step(np.zeros(1), 0.5, np.eye(1), gaussian(dim=1), rng)
        assert x.shape == (1,) and isinstance(acc, bool)
        with pytest.raises(ValueError):
            mala_step(np.zeros(1), 0.0, np.eye(1), gaussian(dim=1), rng)

    def test_non_finite_gradient_rejected(self, rng, caplog):
        def grad(x):
            return np.full_like(np.asarray(x, dtype=float), np.nan) if np.any(np.asarray(x) > 0.05) \
                else -np.asarray(x, dtype=float)

        tgt = Target(1, lambda x: -0.5 * float(np.sum(np.asarray(x) ** 2)), grad)
        with caplog.at_level(logging.WARNING, logger="rlmh.baselines"):
            X, acc = mala(np.array([-1.0]), 1.0, np.eye(1), 200, tgt, rng)
        assert np.all(X <= 0.05)
        assert "non-finite gradient" in caplog.text

    def test_bad_start(self, rng):
        with pytest.raises(ValueError):
            mala(np.array([0.0]), 0.1, np.eye(1), 5,
                 Target(1, lambda x: -np.inf, lambda x: np.zeros(1)), rng)


class TestAmala:
    def test_fixed_point(self):
        assert adapt_eps(0.37, 0.574) == 0.37

    def test_blend_one(self, rng):
        cov = np.array([[2.0, 0.1], [0.1, 1.0]])
        np.testing.assert_array_equal(blend_cov(cov, rng.standard_normal((50, 2)), 1.0), cov)

    def test_acceptance_target(self):
        cfg = AmalaConfig(final_epoch_length=10_000)
        run = amala_run(gaussian(dim=2), cfg, np.random.default_rng(0))
        assert 0.514 <= run.acceptance_rate <= 0.634
        assert run.samples.shape == (10_000, 2)
        assert len(run.epoch_eps) == 10 and run.epoch_eps[0] == 1.0

    def test_eps_changes_only_between_epochs(self):
        cfg = AmalaConfig(n_epochs=4, warm_epoch_length=200, final_epoch_length=300)
        run = amala_run(gaussian(dim=1), cfg, np.random.default_rng(1))
        for prev, cur, rho in zip(run.epoch_eps, run.epoch_eps[1:], run.epoch_acceptance):
            assert cur == pytest.approx(prev * math.exp(rho - 0.574), rel=1e-12)
        assert run.eps == run.epoch_eps[-1]

    def test_short_epochs_rejected(self, rng):
        with pytest.raises(ValueError):
            amala_run(gaussian(dim=1), AmalaConfig(warm_epoch_length=1), rng)

    def test_equal_budget_default(self):
        assert sum(AmalaConfig(final_epoch_length=51_000).epoch_lengths()) == 60_000
