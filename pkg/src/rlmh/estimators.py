"""scikit-learn style wrappers around the three samplers.

Each sampler is configured through constructor keywords (so ``get_params``
and ``set_params`` work as usual), adapts to a target in :meth:`fit`, and
draws a further non-adaptive path with :meth:`sample`.  ``fit`` takes a
:class:`~rlmh.targets.Target` rather than a data matrix.

Example:
    >>> from rlmh import ARWMHSampler, make_builtin_target
    >>> tgt = make_builtin_target("gaussian", mean=[0.0], cov=[[1.0]])
    >>> X = ARWMHSampler(n_iter=2000, random_state=0).fit(tgt).sample(500)
    >>> X.shape
    (500, 1)
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_rng
from .baselines import AmalaConfig, amala_run, arwmh_run, mala, warm_start
from .ddpg import DDPGConfig, buffer_length_cap
from .driver import LearningRateSchedule, RlmhConfig, rlmh_run
from .env import R_MIN, mh_chain, path_rewards
from .metrics import MetricReport, evaluate
from .policy import Policy, pretrain
from .targets import Target


def _check_target(target) -> Target:
    if not isinstance(target, Target):
        raise TypeError(f"fit expects a Target, got {type(target).__name__}")
    return target


class _SamplerMixin:
    """Shared ``sample``/``score`` plumbing; subclasses define ``_frozen_path``."""

    def sample(self, n: int | None = None) -> np.ndarray:
        """Run ``n`` (default ``n_eval``) further steps with adaptation off.

        The path continues from the last state reached.  Per-step acceptance
        flags and log-ESJD rewards ``2 log||x_{i-1} - x*_i|| + log α_i`` are
        kept in ``last_accepted_`` and ``last_rewards_``.
        """
        check_is_fitted(self, "target_")
        n = self.n_eval if n is None else int(n)
        if n < 1:
            raise ValueError("n must be at least 1")
        start = self.current_state_
        X, acc, proposals, log_alpha = self._frozen_path(n)
        prev = np.vstack([start[None, :], X[:-1]])
        self.last_accepted_ = acc
        self.last_rewards_ = path_rewards(prev, proposals, log_alpha,
                                          getattr(self, "r_min", R_MIN))
        self.last_sample_ = X
        self.current_state_ = X[-1].copy()
        return X

    def report(self, reference, lengthscale: float | None = None) -> MetricReport:
        """Metrics of the most recent :meth:`sample` path against ``reference``."""
        check_is_fitted(self, "last_sample_")
        return evaluate(self.last_sample_, self.last_accepted_, reference, lengthscale)

    def score(self, reference, lengthscale: float | None = None) -> float:
        """Negative MMD of the most recent path (higher is better)."""
        return -self.report(reference, lengthscale).mmd


class ARWMHSampler(_SamplerMixin, BaseEstimator):
    """Adaptive random-walk Metropolis with global scale adaptation.

    Args:
        n_iter: adaptive iterations run by :meth:`fit`.
        beta: exponent of the learning rate ``1 / (2 (i + 1)^beta)``.
        n_eval: default length of :meth:`sample`.
        random_state: seed or generator.
    """

    def __init__(self, n_iter: int = 60_000, beta: float = 0.6, n_eval: int = 5000,
                 random_state=None):
        self.n_iter = n_iter
        self.beta = beta
        self.n_eval = n_eval
        self.random_state = random_state

    def fit(self, target, y=None):
        self.target_ = _check_target(target)
        self._rng = check_rng(self.random_state)
        run = arwmh_run(target, int(self.n_iter), self.beta, self._rng)
        self.state_ = run.state
        self.samples_ = run.samples
        self.accepted_ = run.accepted
        self.acceptance_rate_ = run.acceptance_rate
        self.scale_ = run.state.lam
        self.mean_ = run.state.mu
        self.covariance_ = run.state.cov
        self.current_state_ = run.state.x.copy()
        return self

    def _frozen_path(self, n):
        run = arwmh_run(self.target_, n, self.beta, self._rng, state=self.state_, adapt=False)
        self.state_ = run.state
        return run.samples, run.accepted, run.proposals, run.log_alpha


class AMALASampler(_SamplerMixin, BaseEstimator):
    """Epoch-wise adaptive preconditioned MALA.

    Args:
        eps0: initial step scale.
        n_epochs: number of epochs, the last of which has length
            ``final_epoch_length``.
        warm_epoch_length: length of every epoch but the last.
        final_epoch_length: length of the last adaptive epoch.
        blend: weight kept on the old preconditioner at each update.
        n_eval: default length of :meth:`sample`.
        random_state: seed or generator.
    """

    def __init__(self, eps0: float = 1.0, n_epochs: int = 10, warm_epoch_length: int = 1000,
                 final_epoch_length: int = 51_000, blend: float = 0.3, n_eval: int = 5000,
                 random_state=None):
        self.eps0 = eps0
        self.n_epochs = n_epochs
        self.warm_epoch_length = warm_epoch_length
        self.final_epoch_length = final_epoch_length
        self.blend = blend
        self.n_eval = n_eval
        self.random_state = random_state

    def fit(self, target, y=None):
        self.target_ = _check_target(target)
        self._rng = check_rng(self.random_state)
        cfg = AmalaConfig(self.eps0, int(self.n_epochs), int(self.warm_epoch_length),
                          int(self.final_epoch_length), self.blend)
        run = amala_run(target, cfg, self._rng)
        self.eps_ = run.eps
        self.covariance_ = run.cov
        self.samples_ = run.samples
        self.accepted_ = run.accepted
        self.acceptance_rate_ = run.acceptance_rate
        self.epoch_acceptance_ = run.epoch_acceptance
        self.epoch_eps_ = run.epoch_eps
        self.current_state_ = run.samples[-1].copy()
        return self

    def _frozen_path(self, n):
        return mala(self.current_state_, self.eps_, self.covariance_, n, self.target_, self._rng,
                    return_trace=True)


class RLMHSampler(_SamplerMixin, BaseEstimator):
    """φ-MH whose Laplace-proposal mean map is trained by policy gradient.

    :meth:`fit` runs the ARWMH warm start, pre-trains the policy network on
    the warm-start path and then trains it along one continuous chain.

    Args:
        warm_m: ARWMH warm-start iterations.
        warm_beta: ARWMH learning-rate exponent.
        hidden: hidden-layer widths of the policy network.
        radius: ellipsoid radius ``ℓ`` of the transition to the identity map.
        pretrain_threshold: validation loss at which pre-training stops.
        pretrain_epochs: maximum number of pre-training epochs.
        episodes, steps_per_episode: training length.
        clip: gradient clipping threshold ``τ``; ``None`` means ``sqrt(p)``.
        schedule: ``"practice"`` (constant rate) or ``"theory"``.
        alpha0, kappa: learning-rate schedule parameters.
        gamma, batch_size, critic_lr, tau, buffer_capacity, critic_hidden:
            DDPG settings.
        cap_critic_lr: cap the critic rate at ``min(d / ||Σ||_F², 1e-5)``.
        r_min: reward floor.
        n_eval: default length of :meth:`sample`.
        random_state: seed or generator.
    """

    def __init__(self, warm_m: int = 10_000, warm_beta: float = 0.6, hidden=(32,),
                 radius: float = 10.0, pretrain_threshold: float = 1.0,
                 pretrain_epochs: int = 2000, episodes: int = 100,
                 steps_per_episode: int = 500, clip: float | None = None,
                 schedule: str = "practice", alpha0: float = 1e-6, kappa: float = 1.1,
                 gamma: float = 0.99, batch_size: int = 64, critic_lr: float = 1e-3,
                 tau: float = 1e-3, buffer_capacity: int = 1_000_000, critic_hidden=(8,),
                 cap_critic_lr: bool = True, r_min: float = R_MIN, n_eval: int = 5000,
                 random_state=None):
        self.warm_m = warm_m
        self.warm_beta = warm_beta
        self.hidden = hidden
        self.radius = radius
        self.pretrain_threshold = pretrain_threshold
        self.pretrain_epochs = pretrain_epochs
        self.episodes = episodes
        self.steps_per_episode = steps_per_episode
        self.clip = clip
        self.schedule = schedule
        self.alpha0 = alpha0
        self.kappa = kappa
        self.gamma = gamma
        self.batch_size = batch_size
        self.critic_lr = critic_lr
        self.tau = tau
        self.buffer_capacity = buffer_capacity
        self.critic_hidden = critic_hidden
        self.cap_critic_lr = cap_critic_lr
        self.r_min = r_min
        self.n_eval = n_eval
        self.random_state = random_state

    def _config(self) -> RlmhConfig:
        ddpg = DDPGConfig(self.gamma, int(self.batch_size), self.critic_lr, self.tau,
                          int(self.buffer_capacity), tuple(self.critic_hidden))
        return RlmhConfig(int(self.episodes), int(self.steps_per_episode), self.clip,
                          LearningRateSchedule(self.schedule, self.alpha0, self.kappa),
                          ddpg, n_eval=0, r_min=self.r_min)

    def fit(self, target, y=None):
        self.target_ = _check_target(target)
        config = self._config()
        rng = check_rng(self.random_state)
        warm_rng, init_rng, train_rng, self._rng = rng.spawn(4)
        self.warm_ = warm_start(target, int(self.warm_m), self.warm_beta, warm_rng)
        if self.cap_critic_lr:
            cap = buffer_length_cap(target.dim, self.warm_.cov)
            config = replace(config, ddpg=replace(config.ddpg, critic_lr_cap=cap))
        init = Policy.initial(self.warm_.mean, self.warm_.factor, tuple(self.hidden),
                              self.radius, init_rng)
        self.pretrain_ = pretrain(init, self.warm_.samples, max_epochs=int(self.pretrain_epochs),
                                  threshold=self.pretrain_threshold, return_history=True)
        self.result_ = rlmh_run(config, target, self.warm_, self.pretrain_.policy, train_rng)
        self.policy_ = self.result_.policy
        self.initial_policy_ = self.pretrain_.policy
        self.samples_ = self.result_.samples
        self.accepted_ = self.result_.accepted
        self.acceptance_rate_ = float(np.mean(self.result_.accepted))
        self.current_state_ = self.result_.samples[-1].copy()
        return self

    def _frozen_path(self, n):
        run = mh_chain(self.target_, self.policy_, self.current_state_, n, self._rng, self.r_min)
        self.last_run_ = run
        return run.samples, run.accepted, run.proposals, run.log_alpha
