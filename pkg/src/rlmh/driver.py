"""The RLMH outer loop.

Each iteration runs one φ-MH step under the current policy, pushes the
transition to the DDPG agent, clips the returned policy gradient to norm
``τ`` and takes the ascent step ``θ ← θ + α_n g``.  With a summable
learning-rate schedule the total parameter movement is bounded by
``τ Σ α_n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import WarmStart
from .ddpg import DDPGAgent, DDPGConfig
from .env import R_MIN, ChainResult, PhiMHChain, mh_chain
from .policy import Policy
from .targets import Target

log = logging.getLogger(__name__)


class NonFiniteParameterError(FloatingPointError):
    def __init__(self, step: int, index: int):
        super().__init__(f"policy parameter {index} became non-finite at step {step}")
        self.step = step
        self.index = index


@dataclass(frozen=True)
class LearningRateSchedule:
    """``theory``: ``α_n = α₀ / (n + 1)^κ`` with ``κ > 1``; ``practice``: ``α_n = α₀``."""

    mode: str = "practice"
    alpha0: float = 1e-6
    kappa: float = 1.1

    def __post_init__(self):
        if self.mode not in ("theory", "practice"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if self.mode == "theory" and not self.kappa > 1:
            raise ValueError("theory mode needs kappa > 1 for a summable schedule")

    def __call__(self, n: int) -> float:
        return learning_rate(self, n)

    def partial_sum(self, n: int) -> float:
        """``Σ_{i<n} α_i``."""
        return float(sum(self(i) for i in range(n)))


def learning_rate(schedule: LearningRateSchedule, n: int) -> float:
    if n < 0:
        raise ValueError("n must be non-negative")
    if schedule.mode == "practice":
        return schedule.alpha0
    return schedule.alpha0 / (n + 1.0) ** schedule.kappa


def clip_gradient(g, tau: float) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm > tau:
        return g * (tau / norm)
    return g.copy()


@dataclass
class RlmhConfig:
    episodes: int = 100
    steps_per_episode: int = 500
    clip: float | None = None  # default sqrt(p)
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    ddpg: DDPGConfig = field(default_factory=DDPGConfig)
    n_eval: int = 5000
    r_min: float = R_MIN
    seed: int | None = None

    @property
    def total_steps(self) -> int:
        return self.episodes * self.steps_per_episode

    def clip_threshold(self, n_params: int) -> float:
        return math.sqrt(n_params) if self.clip is None else float(self.clip)


@dataclass
class RlmhResult:
    """Traces from a training run.

    Step ``n`` (0-based) records the reward and acceptance of the move from
    ``x_n``, the step size ``||θ_{n+1} - θ_n||``, the distance
    ``||θ_{n+1} - θ_0||`` and the learning rate ``α_n``.
    """

    policy: Policy
    initial_policy: Policy
    samples: np.ndarray
    accepted: np.ndarray
    rewards: np.ndarray
    log_alpha: np.ndarray
    step_norms: np.ndarray
    drift_norms: np.ndarray
    learning_rates: np.ndarray
    clip: float
    episode_rewards: np.ndarray
    evaluation: ChainResult | None = None
    agent: DDPGAgent | None = field(default=None, repr=False)


def rlmh_run(config: RlmhConfig, target: Target, warm: WarmStart, policy: Policy,
             rng=None) -> RlmhResult:
    """Train the policy along one continuous chain started at ``warm.x0``.

    ``policy`` should already be pre-trained.  Episode boundaries are pure
    bookkeeping: neither the chain nor the replay buffer is reset.
    After training, ``config.n_eval`` further steps are run with the
    final policy frozen.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    chain_rng, agent_rng, eval_rng = rng.spawn(3)
    theta0 = policy.theta.copy()
    tau = config.clip_threshold(policy.mlp.n_params)
    agent = DDPGAgent(policy, config.ddpg, agent_rng)
    chain = PhiMHChain(target, policy, warm.x0, chain_rng, config.r_min)

    n = config.total_steps
    d = target.dim
    samples = np.empty((n, d))
    accepted = np.empty(n, dtype=bool)
    rewards = np.empty(n)
    log_alpha = np.empty(n)
    step_norms = np.empty(n)
    drift_norms = np.empty(n)
    rates = np.empty(n)

    theta = theta0.copy()
    for step in range(n):
        transition, res = chain.step()
        g = agent.observe(transition, chain.policy)
        g = clip_gradient(g, tau)
        alpha = learning_rate(config.schedule, step)
        new_theta = theta + alpha * g
        bad = ~np.isfinite(new_theta)
        if np.any(bad):
            raise NonFiniteParameterError(step, int(np.argmax(bad)))
        if not np.array_equal(new_theta, theta):
            chain.set_policy(chain.policy.with_theta(new_theta))
        agent.update_targets(chain.policy)

        step_norms[step] = np.linalg.norm(new_theta - theta)
        drift_norms[step] = np.linalg.norm(new_theta - theta0)
        theta = new_theta
        samples[step] = res.state.current
        accepted[step] = res.accepted
        rewards[step] = res.reward
        log_alpha[step] = res.log_alpha
        rates[step] = alpha
        if (step + 1) % config.steps_per_episode == 0:
            ep = (step + 1) // config.steps_per_episode
            log.debug("episode %d mean reward %.4f", ep,
                      rewards[step + 1 - config.steps_per_episode: step + 1].mean())

    episode_rewards = rewards.reshape(config.episodes, config.steps_per_episode).mean(axis=1)
    final = chain.policy
    evaluation = None
    if config.n_eval > 0:
        evaluation = mh_chain(target, final, chain.state.current, config.n_eval, eval_rng,
                              config.r_min)
    return RlmhResult(final, policy, samples, accepted, rewards, log_alpha, step_norms,
                      drift_norms, rates, tau, episode_rewards, evaluation, agent)
