"""Deterministic policy gradient machinery: replay buffer, critic, target nets.

The critic ``Q_w(s, a)`` is an MLP on the concatenation ``[x, x*, φ(x),
φ(x*)] ∈ R^{4d}``.  The actor is the :class:`~rlmh.policy.Policy` itself;
its gradient is the batch mean of ``∇_θ π_θ(s) ∇_a Q_w(s, a)`` at
``a = π_θ(s)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .env import MdpAction, MdpState, Transition
from .policy import MlpParams, Policy, mlp_forward, mlp_grad, phi_grad, phi_map


@dataclass
class Batch:
    """Row-stacked transitions; ``s``, ``a`` and ``s_next`` are ``(M, 2d)``."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self):
        return self.r.shape[0]


class ReplayBuffer:
    """FIFO ring of transitions with uniform sampling (with replacement).

    Storage grows by doubling up to ``capacity`` so a large capacity does
    not cost memory until it is used.
    """

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.count = 0
        self._alloc = 0
        self._s = self._a = self._sn = np.empty((0, 2 * dim))
        self._r = np.empty(0)

    def __len__(self):
        return min(self.count, self.capacity)

    def _grow(self):
        new = min(self.capacity, max(64, 2 * self._alloc))
        w = 2 * self.dim
        for name, width in (("_s", w), ("_a", w), ("_sn", w), ("_r", None)):
            old = getattr(self, name)
            arr = np.empty((new, width)) if width else np.empty(new)
            arr[: self._alloc] = old
            setattr(self, name, arr)
        self._alloc = new

    def push(self, t: Transition) -> None:
        self.push_arrays(t.s.vector(), t.a.vector(), t.r, t.s_next.vector())

    def push_arrays(self, s, a, r, s_next) -> None:
        if self.count < self.capacity and self.count >= self._alloc:
            self._grow()
        i = self.count % self.capacity
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._sn[i] = s_next
        self.count += 1

    def _rows(self):
        """Storage indices in insertion order, oldest first."""
        n = len(self)
        start = self.count % self.capacity if self.count > self.capacity else 0
        return (start + np.arange(n)) % self.capacity

    def transitions(self) -> list[Transition]:
        d = self.dim
        out = []
        for i in self._rows():
            out.append(Transition(MdpState(self._s[i, :d].copy(), self._s[i, d:].copy()),
                                  MdpAction(self._a[i, :d].copy(), self._a[i, d:].copy()),
                                  float(self._r[i]),
                                  MdpState(self._sn[i, :d].copy(), self._sn[i, d:].copy())))
        return out

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, n, size=batch_size)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._sn[idx])


def critic_widths(dim: int, hidden=(8,)) -> tuple[int, ...]:
    return (4 * dim, *hidden, 1)


def q_values(critic: MlpParams, s, a) -> np.ndarray:
    return mlp_forward(critic, np.concatenate([s, a], axis=-1))[..., 0]


def batch_action(policy: Policy, s: np.ndarray) -> np.ndarray:
    """``π_θ(s)`` for a batch of stacked states ``(M, 2d)``."""
    d = policy.dim
    m = s.shape[0]
    both = phi_map(policy, np.concatenate([s[:, :d], s[:, d:]]))
    return np.concatenate([both[:m], both[m:]], axis=1)


@dataclass(eq=False)
class TargetNets:
    actor_theta: np.ndarray
    critic_theta: np.ndarray
    tau: float = 1e-3


def soft_update(targets: TargetNets, theta, w) -> TargetNets:
    """``θ' ← τθ + (1 - τ)θ'`` and the same for the critic."""
    tau = targets.tau
    if not 0.0 < tau <= 1.0:
        raise ValueError("taming factor must lie in (0, 1]")
    return replace(targets,
                   actor_theta=tau * np.asarray(theta) + (1.0 - tau) * targets.actor_theta,
                   critic_theta=tau * np.asarray(w) + (1.0 - tau) * targets.critic_theta)


def bellman_targets(batch: Batch, targets: TargetNets, gamma: float,
                    policy: Policy, critic: MlpParams) -> np.ndarray:
    """``y_i = r_i + γ Q_{w'}(s'_i, π_{θ'}(s'_i))``.

    ``policy`` and ``critic`` provide the architecture (and the fixed ``x̄``,
    ``Σ``, ``ℓ``); their parameters are replaced by the target copies.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if gamma == 0.0:
        return batch.r.copy()
    target_actor = policy.with_theta(targets.actor_theta)
    target_critic = critic.with_theta(targets.critic_theta)
    a_next = batch_action(target_actor, batch.s_next)
    return batch.r + gamma * q_values(target_critic, batch.s_next, a_next)


def critic_loss(critic: MlpParams, batch: Batch, y) -> float:
    err = q_values(critic, batch.s, batch.a) - y
    return float(np.mean(err * err))


def critic_gradient(critic: MlpParams, batch: Batch, y) -> np.ndarray:
    X = np.concatenate([batch.s, batch.a], axis=1)
    err = mlp_forward(critic, X)[:, 0] - y
    g, _ = mlp_grad(critic, X, (2.0 / len(batch)) * err[:, None])
    return g


def critic_update(critic: MlpParams, batch: Batch, y, lr: float) -> MlpParams:
    """One gradient-descent step on the mean squared Bellman error."""
    return critic.with_theta(critic.theta - lr * critic_gradient(critic, batch, y))


def actor_gradient(policy: Policy, batch: Batch, critic: MlpParams) -> np.ndarray:
    """Ascent direction ``(1/M) Σ ∇_θ π_θ(s_i) ∇_a Q_w(s_i, a)|_{a=π_θ(s_i)}``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    d = policy.dim
    a = batch_action(policy, batch.s)
    X = np.concatenate([batch.s, a], axis=1)
    _, dq = mlp_grad(critic, X, np.full((len(batch), 1), 1.0 / len(batch)))
    dq_da = dq[:, 2 * d:]
    # both state components go through φ, so stack them into a single pass
    points = np.concatenate([batch.s[:, :d], batch.s[:, d:]])
    upstream = np.concatenate([dq_da[:, :d], dq_da[:, d:]])
    return phi_grad(policy, points, upstream)


def buffer_length_cap(dim: int, sigma) -> float:
    """``min(d / ||Σ||_F², 1e-5)``, usable as an optional critic learning-rate cap."""
    fro2 = float(np.sum(np.asarray(sigma, dtype=float) ** 2))
    return min(dim / fro2, 1e-5)


@dataclass
class DDPGConfig:
    gamma: float = 0.99
    batch_size: int = 64
    critic_lr: float = 1e-3
    tau: float = 1e-3
    buffer_capacity: int = 1_000_000
    critic_hidden: tuple = (8,)
    critic_lr_cap: float | None = None


class DDPGAgent:
    """Critic, target networks and replay buffer for one RLMH run.

    :meth:`observe` stores a transition, takes one critic step and returns
    the actor ascent direction (zero until the buffer holds a full batch).
    """

    def __init__(self, policy: Policy, config: DDPGConfig | None = None, rng=None):
        self.config = config or DDPGConfig()
        self.rng = rng if rng is not None else np.random.default_rng()
        d = policy.dim
        self.critic = MlpParams.glorot(critic_widths(d, self.config.critic_hidden), self.rng)
        self.targets = TargetNets(policy.theta.copy(), self.critic.theta.copy(),
                                  self.config.tau)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, d)
        lr = self.config.critic_lr
        if self.config.critic_lr_cap is not None:
            lr = min(lr, self.config.critic_lr_cap)
        self.critic_lr = lr

    def observe(self, transition: Transition, policy: Policy) -> np.ndarray:
        self.buffer.push(transition)
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return np.zeros_like(policy.theta)
        batch = self.buffer.sample(cfg.batch_size, self.rng)
        y = bellman_targets(batch, self.targets, cfg.gamma, policy, self.critic)
        self.critic = critic_update(self.critic, batch, y, self.critic_lr)
        return actor_gradient(policy, batch, self.critic)

    def update_targets(self, policy: Policy) -> None:
        self.targets = soft_update(self.targets, policy.theta, self.critic.theta)
