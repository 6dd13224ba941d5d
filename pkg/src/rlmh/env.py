"""φ-MH as a Markov decision process.

The MDP state is the pair ``[x_n, x*_{n+1}]`` of current and proposed chain
states, and the action is ``[φ(x_n), φ(x*_{n+1})]``: the two proposal means
needed for the forward and reverse proposal densities.  The environment
accepts or rejects, draws the next proposal and returns the log-ESJD reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_point, check_rng
from .laplace import CovarianceFactor, proposal_log_density, proposal_sample
from .policy import Policy, phi_map
from .targets import Target

R_MIN = -50.0


@dataclass(frozen=True, eq=False)
class MdpState:
    current: np.ndarray
    proposed: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.current, self.proposed])


@dataclass(frozen=True, eq=False)
class MdpAction:
    phi_current: np.ndarray
    phi_proposed: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.phi_current, self.phi_proposed])


@dataclass(frozen=True, eq=False)
class Transition:
    s: MdpState
    a: MdpAction
    r: float
    s_next: MdpState


class StepResult(NamedTuple):
    reward: float
    state: MdpState
    accepted: bool
    log_alpha: float


def policy_action(policy: Policy, s: MdpState) -> MdpAction:
    """The on-policy action: φ evaluated at both components of the state."""
    both = phi_map(policy, np.stack([s.current, s.proposed]))
    return MdpAction(both[0], both[1])


def acceptance_log_prob(target: Target, factor: CovarianceFactor, a: MdpAction,
                        s: MdpState, log_p_current: float | None = None,
                        log_p_proposed: float | None = None) -> float:
    """Log of the φ-dependent acceptance probability, ``≤ 0``.

    The target log-densities may be passed in when the caller has them
    cached.
    """
    lp_x = target.log_density(s.current) if log_p_current is None else log_p_current
    lp_y = target.log_density(s.proposed) if log_p_proposed is None else log_p_proposed
    if lp_y == -np.inf:
        return -np.inf
    if not np.isfinite(lp_x):
        raise ValueError("log-density at the current state must be finite")
    log_ratio = (lp_y - lp_x
                 + proposal_log_density(factor, a.phi_proposed, s.current)
                 - proposal_log_density(factor, a.phi_current, s.proposed))
    return min(0.0, float(log_ratio))


def reward(s: MdpState, log_alpha: float, r_min: float = R_MIN) -> float:
    """``2 log||x - x*|| + log α``, clamped below at ``r_min``."""
    jump = float(np.linalg.norm(s.current - s.proposed))
    if jump == 0.0 or log_alpha == -np.inf:
        return r_min
    return max(r_min, 2.0 * np.log(jump) + log_alpha)


def path_rewards(current, proposed, log_alpha, r_min: float = R_MIN) -> np.ndarray:
    """Vectorised :func:`reward` over rows of ``current`` and ``proposed``."""
    jump = np.linalg.norm(np.asarray(current, float) - np.asarray(proposed, float), axis=1)
    log_alpha = np.asarray(log_alpha, dtype=float)
    with np.errstate(divide="ignore"):
        r = 2.0 * np.log(jump) + log_alpha
    r = np.where((jump == 0.0) | (log_alpha == -np.inf), r_min, r)
    return np.maximum(r, r_min)


def env_step(target: Target, factor: CovarianceFactor, s: MdpState, a: MdpAction,
             rng: np.random.Generator, r_min: float = R_MIN, *,
             log_p_current: float | None = None,
             log_p_proposed: float | None = None) -> StepResult:
    """Accept/reject, draw the next proposal, and score the move.

    The next proposal is drawn around whichever action component belongs to
    the state that was kept.  The reward uses the pre-acceptance pair.
    """
    log_alpha = acceptance_log_prob(target, factor, a, s, log_p_current, log_p_proposed)
    accepted = bool(np.log(rng.random()) < log_alpha)
    if accepted:
        x_next, mean_next = s.proposed, a.phi_proposed
    else:
        x_next, mean_next = s.current, a.phi_current
    y_next = proposal_sample(factor, mean_next, rng)
    r = reward(s, log_alpha, r_min)
    return StepResult(r, MdpState(x_next, y_next), accepted, log_alpha)


@dataclass
class ChainResult:
    """Path of a chain run: ``samples[i]`` is the state after step ``i + 1``."""

    samples: np.ndarray
    accepted: np.ndarray
    rewards: np.ndarray
    log_alpha: np.ndarray
    proposals: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


class PhiMHChain:
    """Incremental φ-MH chain that caches target evaluations between steps.

    ``policy`` may be swapped between calls to :meth:`step`; a swap redraws
    the pending proposal so every step uses a single fixed kernel.
    """

    def __init__(self, target: Target, policy: Policy, x0, rng, r_min: float = R_MIN):
        self.target = target
        self.policy = policy
        self.r_min = r_min
        self.rng = check_rng(rng)
        x0 = check_point(x0, target.dim, "x0")
        self.log_p_current = float(target.log_density(x0))
        if not np.isfinite(self.log_p_current):
            raise ValueError("initial state has zero target density")
        mean = phi_map(policy, x0)
        self.state = MdpState(x0, proposal_sample(policy.factor, mean, self.rng))
        self._phi_current = mean

    def set_policy(self, policy: Policy) -> None:
        self.policy = policy
        self._phi_current = phi_map(policy, self.state.current)
        y = proposal_sample(policy.factor, self._phi_current, self.rng)
        self.state = MdpState(self.state.current, y)

    def step(self):
        """Advance one step; returns ``(transition, StepResult)``."""
        s = self.state
        phi_y = phi_map(self.policy, s.proposed)
        a = MdpAction(self._phi_current, phi_y)
        lp_y = float(self.target.log_density(s.proposed))
        res = env_step(self.target, self.policy.factor, s, a, self.rng, self.r_min,
                       log_p_current=self.log_p_current, log_p_proposed=lp_y)
        if res.accepted:
            self.log_p_current = lp_y
            self._phi_current = phi_y
        self.state = res.state
        return Transition(s, a, res.reward, res.state), res


def mh_chain(target: Target, policy: Policy, x0, n_steps: int, rng,
             r_min: float = R_MIN) -> ChainResult:
    """Run φ-MH with a frozen policy (no adaptation)."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    chain = PhiMHChain(target, policy, x0, rng, r_min)
    d = target.dim
    samples = np.empty((n_steps, d))
    proposals = np.empty((n_steps, d))
    accepted = np.empty(n_steps, dtype=bool)
    rewards = np.empty(n_steps)
    log_alpha = np.empty(n_steps)
    for i in range(n_steps):
        proposals[i] = chain.state.proposed
        _, res = chain.step()
        samples[i] = res.state.current
        accepted[i] = res.accepted
        rewards[i] = res.reward
        log_alpha[i] = res.log_alpha
    return ChainResult(samples, accepted, rewards, log_alpha, proposals)
