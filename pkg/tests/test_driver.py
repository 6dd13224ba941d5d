import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rlmh.baselines import warm_start
from rlmh.ddpg import DDPGAgent, DDPGConfig
from rlmh.driver import (LearningRateSchedule, NonFiniteParameterError, RlmhConfig,
                         clip_gradient, learning_rate, rlmh_run)
from rlmh.env import mh_chain
from rlmh.policy import Policy
from rlmh.targets import gaussian


class TestClip:
    def test_example(self):
        np.testing.assert_allclose(clip_gradient([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)

    def test_small_unchanged(self):
        g = np.array([0.1, -0.2])
        np.testing.assert_array_equal(clip_gradient(g, 1.0), g)

    def test_zero(self):
        np.testing.assert_array_equal(clip_gradient(np.zeros(3), 1.0), np.zeros(3))

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6), st.floats(1e-3, 10))
    def test_norm_bound_and_direction(self, g, tau):
        g = np.array(g)
        out = clip_gradient(g, tau)
        assert np.linalg.norm(out) <= tau * (1 + 1e-12)
        if np.linalg.norm(g) > tau:
            # positive multiple of g
            k = np.linalg.norm(out) / np.linalg.norm(g)
            np.testing.assert_allclose(out, k * g, rtol=1e-12, atol=1e-300)


class TestSchedule:
    def test_theory_first_term(self):
        assert learning_rate(LearningRateSchedule("theory", 1e-6, 1.1), 0) == 1e-6

    def test_practice_constant(self):
        s = LearningRateSchedule("practice", 3e-4)
        assert all(s(n) == 3e-4 for n in (0, 1, 10, 10_000))

    @pytest.mark.parametrize("kappa", [1.05, 1.1, 1.5, 2.0, 3.0])
    def test_partial_sums_bounded(self, kappa):
        s = LearningRateSchedule("theory", 1e-6, kappa)
        n = np.arange(200_000)
        partial = float(np.sum(1e-6 / (n + 1.0) ** kappa))
        assert partial <= 1e-6 * (1 + 1 / (kappa - 1))
        assert s.partial_sum(500) <= 1e-6 * (1 + 1 / (kappa - 1))

    def test_validation(self):
        with pytest.raises(ValueError):
            LearningRateSchedule("theory", 1e-6, 1.0)
        with pytest.raises(ValueError):
            LearningRateSchedule("greedy")
        with pytest.raises(ValueError):
            LearningRateSchedule("practice", 0.0)
        with pytest.raises(ValueError):
            learning_rate(LearningRateSchedule(), -1)


def _setup(seed=0, dim=1, m=300):
    target = gaussian(dim=dim)
    rng = np.random.default_rng(seed)
    warm = warm_start(target, m, 0.6, rng)
    policy = Policy.initial(warm.mean, warm.factor, (4,), 10.0, rng)
    return target, warm, policy


def _config(**kw):
    base = dict(episodes=3, steps_per_episode=40, ddpg=DDPGConfig(batch_size=8), n_eval=50)
    base.update(kw)
    return RlmhConfig(**base)


class TestRun:
    def test_zero_clip_reduces_to_fixed_kernel(self):
        target, warm, policy = _setup()
        cfg = _config(clip=0.0, n_eval=0)
        res = rlmh_run(cfg, target, warm, policy, np.random.default_rng(7))
        np.testing.assert_array_equal(res.policy.theta, policy.theta)
        assert not res.step_norms.any()
        # same chain as plain φ-MH driven by the same stream
        chain_rng, _, _ = np.random.default_rng(7).spawn(3)
        fixed = mh_chain(target, policy, warm.x0, cfg.total_steps, chain_rng)
        np.testing.assert_array_equal(res.samples, fixed.samples)
        np.testing.assert_array_equal(res.rewards, fixed.rewards)

    def test_theory_bounds(self):
        target, warm, policy = _setup()
        sched = LearningRateSchedule("theory", 1e-2, 1.1)
        res = rlmh_run(_config(schedule=sched, episodes=4), target, warm, policy,
                       np.random.default_rng(1))
        tau = res.clip
        assert tau == pytest.approx(math.sqrt(policy.mlp.n_params))
        rates = np.array([sched(n) for n in range(res.step_norms.size)])
        np.testing.assert_array_equal(res.learning_rates, rates)
        assert np.all(res.step_norms <= rates * tau + 1e-12)
        assert np.all(res.drift_norms <= tau * np.cumsum(rates) + 1e-12)
        assert res.step_norms.max() > 0

    def test_determinism(self):
        target, warm, policy = _setup()
        a = rlmh_run(_config(), target, warm, policy, np.random.default_rng(3))
        b = rlmh_run(_config(), target, warm, policy, np.random.default_rng(3))
        np.testing.assert_array_equal(a.rewards, b.rewards)
        np.testing.assert_array_equal(a.policy.theta, b.policy.theta)
        np.testing.assert_array_equal(a.evaluation.samples, b.evaluation.samples)

    def test_traces(self):
        target, warm, policy = _setup()
        cfg = _config()
        res = rlmh_run(cfg, target, warm, policy, np.random.default_rng(0))
        n = cfg.total_steps
        for arr in (res.rewards, res.log_alpha, res.step_norms, res.drift_norms,
                    res.learning_rates, res.accepted):
            assert arr.shape == (n,)
        assert res.samples.shape == (n, 1)
        np.testing.assert_allclose(res.episode_rewards,
                                   res.rewards.reshape(cfg.episodes, -1).mean(axis=1))
        assert res.evaluation.samples.shape == (cfg.n_eval, 1)
        assert np.all(res.rewards >= cfg.r_min)

    def test_non_finite_parameters(self, monkeypatch):
        target, warm, policy = _setup()

        def bad_gradient(self, transition, pol):
            g = np.zeros_like(pol.theta)
            g[3] = np.nan
            return g

        monkeypatch.setattr(DDPGAgent, "observe", bad_gradient)
        with pytest.raises(NonFiniteParameterError) as info:
            rlmh_run(_config(), target, warm, policy, np.random.default_rng(0))
        assert info.value.step == 0
        assert info.value.index == 3
