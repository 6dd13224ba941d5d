"""The proposal-mean map ``φ_θ`` and the small MLP behind it.

``φ_θ(x) = ψ_θ(x) + γ(η(x)) (x - ψ_θ(x))`` with ``ψ_θ(x) = x̄ + L ν_θ(x)``,
where ``ν_θ`` is an MLP, ``L`` the Cholesky factor of the warm-start
covariance and ``η(x) = ||L⁻¹(x - x̄)||² / ℓ²``.  Outside the ellipsoid
``η ≥ 1`` the map is the identity, so the chain falls back to a Laplace
random walk there.

Everything that takes a point also takes a row-stacked batch ``(n, d)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from ._validation import check_rng, check_samples
from .laplace import CovarianceFactor, norm1_sigma

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# MLP


@dataclass(eq=False)
class MlpParams:
    """Fully connected ReLU network with a flat parameter vector.

    ``theta`` stores, layer by layer, the ``(in, out)`` weight matrix in
    row-major order followed by the ``out`` biases.
    """

    widths: tuple[int, ...]
    theta: np.ndarray

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid layer widths {self.widths}")
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (n_params(self.widths),):
            raise ValueError(f"theta has shape {self.theta.shape}, "
                             f"expected ({n_params(self.widths)},)")

    @classmethod
    def zeros(cls, widths) -> "MlpParams":
        return cls(tuple(widths), np.zeros(n_params(widths)))

    @classmethod
    def glorot(cls, widths, rng=None) -> "MlpParams":
        """Uniform ±sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
        rng = check_rng(rng)
        params = cls.zeros(widths)
        for W, _ in params.layers():
            lim = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-lim, lim, size=W.shape)
        return params

    @property
    def n_params(self) -> int:
        return self.theta.shape[0]

    def layers(self, theta=None):
        """``[(W, b), ...]`` as views into ``theta`` (default: own parameters)."""
        if theta is None:
            cached = self.__dict__.get("_layers")
            if cached is not None and cached[0] is self.theta:
                return cached[1]
            out = self._views(self.theta)
            self.__dict__["_layers"] = (self.theta, out)
            return out
        return self._views(theta)

    def _views(self, theta):
        out, off = [], 0
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            W = theta[off:off + n_in * n_out].reshape(n_in, n_out)
            off += n_in * n_out
            b = theta[off:off + n_out]
            off += n_out
            out.append((W, b))
        return out

    def with_theta(self, theta) -> "MlpParams":
        return MlpParams(self.widths, np.array(theta, dtype=float))

    def copy(self) -> "MlpParams":
        return self.with_theta(self.theta)


def n_params(widths) -> int:
    return sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))


def mlp_forward(mlp: MlpParams, x) -> np.ndarray:
    h = np.asarray(x, dtype=float)
    layers = mlp.layers()
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def mlp_grad(mlp: MlpParams, x, upstream):
    """Reverse-mode gradients of ``upstream · mlp(x)``.

    Returns ``(grad_theta, grad_x)``.  For a batch, ``grad_theta`` is summed
    over rows and ``grad_x`` keeps one row per input.  The ReLU subgradient
    at 0 is 0.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    U = np.asarray(upstream, dtype=float)
    U = U.reshape(X.shape[0], mlp.widths[-1])

    layers = mlp.layers()
    acts = [X]
    h = X
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)

    grad = np.empty_like(mlp.theta)
    grad_layers = mlp.layers(grad)
    delta = U
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        gW, gb = grad_layers[k]
        gW[...] = acts[k].T @ delta
        gb[...] = delta.sum(axis=0)
        delta = delta @ W.T
        if k > 0:
            delta = delta * (acts[k] > 0.0)
    return grad, (delta[0] if single else delta)


# ---------------------------------------------------------------------------
# policy


@dataclass(eq=False)
class Policy:
    mlp: MlpParams
    warm_mean: np.ndarray
    factor: CovarianceFactor
    radius: float = 10.0

    def __post_init__(self):
        self.warm_mean = np.asarray(self.warm_mean, dtype=float).reshape(-1)
        d = self.warm_mean.shape[0]
        if self.factor.dim != d or self.mlp.widths[0] != d or self.mlp.widths[-1] != d:
            raise ValueError("policy network, warm mean and covariance factor disagree on d")
        if not self.radius > 0:
            raise ValueError("ellipsoid radius must be positive")

    @property
    def dim(self) -> int:
        return self.warm_mean.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return self.mlp.theta

    def with_theta(self, theta) -> "Policy":
        return replace(self, mlp=self.mlp.with_theta(theta))

    @classmethod
    def initial(cls, warm_mean, factor: CovarianceFactor, hidden=(32,), radius=10.0,
                rng=None) -> "Policy":
        d = factor.dim
        mlp = MlpParams.glorot((d, *hidden, d), rng)
        return cls(mlp, warm_mean, factor, radius)

    def __call__(self, x):
        return phi_map(self, x)


def ellipsoid_eta(policy: Policy, x) -> np.ndarray | float:
    z = policy.factor.whiten(np.asarray(x, dtype=float) - policy.warm_mean)
    eta = (z * z).sum(axis=-1) / policy.radius ** 2
    return float(eta) if np.ndim(eta) == 0 else eta


def transition_gamma(eta):
    """Smooth step: 0 on [0, 1/2], 1 on [1, ∞), logistic in between.

    On the open middle interval ``γ = σ((4η - 3) / (2 (2η - 1)(1 - η)))``,
    which equals 1/2 at η = 3/4 and tends to 0 and 1 at the two ends.
    """
    if isinstance(eta, float):
        if eta <= 0.5:
            return 0.0
        if eta >= 1.0:
            return 1.0
        return float(expit((4.0 * eta - 3.0) / (2.0 * (2.0 * eta - 1.0) * (1.0 - eta))))
    eta_arr = np.asarray(eta, dtype=float)
    out = np.where(eta_arr >= 1.0, 1.0, 0.0)
    mid = (eta_arr > 0.5) & (eta_arr < 1.0)
    if np.any(mid):
        e = eta_arr[mid]
        out[mid] = expit((4.0 * e - 3.0) / (2.0 * (2.0 * e - 1.0) * (1.0 - e)))
    return float(out) if np.ndim(out) == 0 else out


def _psi(policy: Policy, x):
    return policy.warm_mean + policy.factor.colour(mlp_forward(policy.mlp, x))


def phi_map(policy: Policy, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.asarray(transition_gamma(ellipsoid_eta(policy, x)))[..., None]
    psi = _psi(policy, x)
    out = psi + g * (x - psi)
    # exact identity outside the ellipsoid, without rounding from the blend
    return np.where(g >= 1.0, x, out)


def phi_grad(policy: Policy, x, upstream) -> np.ndarray:
    """``∇_θ (upstream · φ_θ(x))``; summed over rows for a batch."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(upstream, dtype=float).reshape(x.shape)
    g = np.asarray(transition_gamma(ellipsoid_eta(policy, x)))
    # d φ / d ν = (1 - γ) L, so the upstream seen by the network is (1 - γ) Lᵀ u
    inner = (1.0 - g)[..., None] * (u @ policy.factor.L)
    grad_theta, _ = mlp_grad(policy.mlp, x, inner)
    return grad_theta


def mean_shift_bound(policy: Policy, probes, refine_step: float | None = None) -> float:
    """Empirical lower bound on ``sup_x ||x - φ_θ(x)||_{1,Σ}``.

    Every probe is also perturbed by ``± refine_step`` along each column of
    ``L`` (default ``0.05 ℓ``), and the maximum over all points is returned.
    The result can only grow when probes are added.
    """
    P = check_samples(probes, policy.dim, name="probes")
    h = 0.05 * policy.radius if refine_step is None else refine_step
    steps = h * np.concatenate([policy.factor.L.T, -policy.factor.L.T])
    pts = np.concatenate([P, (P[:, None, :] + steps[None, :, :]).reshape(-1, policy.dim)])
    shift = norm1_sigma(policy.factor, pts - phi_map(policy, pts))
    return float(np.max(shift))


# ---------------------------------------------------------------------------
# ADAM and warm-start pre-training


@dataclass(eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(state: AdamState, theta, grad):
    """One bias-corrected ADAM descent step; returns ``(theta', state')``."""
    grad = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = np.asarray(theta, dtype=float) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return theta, replace(state, m=m, v=v, t=t)


@dataclass
class PretrainResult:
    policy: Policy
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0


def _pretrain_loss(mlp, X, T):
    r = T - mlp_forward(mlp, X)
    return float(np.mean(np.sum(r * r, axis=1))), r


def pretrain(policy: Policy, warm_samples, *, max_epochs: int = 2000,
             threshold: float = 1.0, lr: float = 1e-3, return_history: bool = False):
    """Fit ``ν_θ(x) ≈ L⁻¹(x̄ - x)`` on the warm-start samples.

    The trailing 30% of rows is held out for validation.  Training is
    full-batch ADAM and stops once the validation loss drops below
    ``threshold`` or after ``max_epochs``; the parameters with the best
    validation loss are kept.
    """
    X = check_samples(warm_samples, policy.dim, name="warm_samples")
    m = X.shape[0]
    if m < 10:
        raise ValueError(f"pre-training needs at least 10 warm samples, got {m}")
    T = policy.factor.whiten(policy.warm_mean - X)
    n_train = int(round(0.7 * m))
    Xtr, Ttr, Xva, Tva = X[:n_train], T[:n_train], X[n_train:], T[n_train:]

    mlp = policy.mlp.copy()
    state = AdamState.zeros(mlp.n_params, lr=lr)
    best_theta = mlp.theta.copy()
    best_val, _ = _pretrain_loss(mlp, Xva, Tva)
    history = PretrainResult(policy, [], [best_val], 0)
    for epoch in range(1, max_epochs + 1):
        if best_val < threshold:
            break
        loss, r = _pretrain_loss(mlp, Xtr, Ttr)
        grad, _ = mlp_grad(mlp, Xtr, -2.0 * r / Xtr.shape[0])
        theta, state = adam_step(state, mlp.theta, grad)
        mlp = mlp.with_theta(theta)
        val, _ = _pretrain_loss(mlp, Xva, Tva)
        history.train_loss.append(loss)
        history.val_loss.append(val)
        if val < best_val:
            best_val, best_theta, history.best_epoch = val, mlp.theta.copy(), epoch
    history.policy = policy.with_theta(best_theta)
    return history if return_history else history.policy


# ---------------------------------------------------------------------------
# checkpoints


def policy_to_dict(policy: Policy) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "widths": list(policy.mlp.widths),
        "theta": policy.theta.tolist(),
        "warm_mean": policy.warm_mean.tolist(),
        "cholesky": policy.factor.L.tolist(),
        "radius": float(policy.radius),
    }


def policy_from_dict(record: dict) -> Policy:
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {record.get('version')!r}")
    mlp = MlpParams(tuple(record["widths"]), np.array(record["theta"], dtype=float))
    factor = CovarianceFactor.from_cholesky(record["cholesky"])
    return Policy(mlp, np.array(record["warm_mean"], dtype=float), factor,
                  float(record["radius"]))


def save_policy(policy: Policy, path, extra: dict | None = None) -> Path:
    """Write a JSON checkpoint.  Floats are written with ``repr`` so reloads are exact."""
    path = Path(path)
    record = policy_to_dict(policy)
    if extra:
        record.update(extra)
    path.write_text(json.dumps(record, indent=1))
    return path


def load_policy(path) -> Policy:
    return policy_from_dict(json.loads(Path(path).read_text()))
