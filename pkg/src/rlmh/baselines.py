"""Comparator samplers.

* ARWMH: adaptive Metropolis with global adaptive scaling.  Gaussian random
  walk with covariance ``λ Σ``, where ``Σ`` and the mean are tracked by
  stochastic approximation and ``log λ`` is steered toward a 0.234
  acceptance rate.  Also used to warm-start RLMH.
* MALA with a fixed preconditioner, and its epoch-wise adaptive variant
  steering acceptance toward 0.574.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_point, check_samples
from .laplace import CovarianceFactor, NotPositiveDefiniteError, factorize
from .targets import Target, grad_or_finite_difference

log = logging.getLogger(__name__)

ARWMH_TARGET_ACCEPT = 0.234
MALA_TARGET_ACCEPT = 0.574


def jittered(cov) -> np.ndarray:
    """``cov + 1e-6·mean(diag)·I``; a unit scale is used if the diagonal is zero."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    scale = float(np.mean(np.diag(cov)))
    if not scale > 0:
        scale = 1.0
    return cov + 1e-6 * scale * np.eye(cov.shape[0])


def sample_cov(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.atleast_2d(np.cov(X, rowvar=False))


# ---------------------------------------------------------------------------
# ARWMH


@dataclass(eq=False)
class ArwmhState:
    x: np.ndarray
    mu: np.ndarray
    cov: np.ndarray
    lam: float = 1.0
    log_p: float | None = None

    @classmethod
    def initial(cls, dim: int) -> "ArwmhState":
        return cls(np.zeros(dim), np.zeros(dim), np.eye(dim), 1.0)


def arwmh_gamma(i: int, beta: float) -> float:
    """Learning rate ``1 / (2 (i + 1)^β)``."""
    return 0.5 / (i + 1.0) ** beta


def arwmh_step(state: ArwmhState, target: Target, gamma: float, rng: np.random.Generator,
               target_accept: float = ARWMH_TARGET_ACCEPT, adapt: bool = True):
    """One Metropolis step followed by the scale, mean and covariance updates.

    Returns ``(state', accepted)``.  With ``adapt=False`` (or ``gamma == 0``)
    only the chain moves.
    """
    state, accepted, _, _ = _arwmh_move(state, target, gamma, rng, target_accept, adapt)
    return state, accepted


def _arwmh_move(state, target, gamma, rng, target_accept, adapt):
    x = state.x
    lp_x = target.log_density(x) if state.log_p is None else state.log_p
    factor = factorize(jittered(state.lam * state.cov))
    y = x + factor.colour(rng.standard_normal(x.shape[0]))
    lp_y = target.log_density(y)
    log_alpha = min(0.0, lp_y - lp_x) if lp_y > -np.inf else -np.inf
    accepted = bool(np.log(rng.random()) < log_alpha)
    if accepted:
        x, lp_x = y, lp_y
    if not adapt or gamma == 0.0:
        return replace(state, x=x, log_p=lp_x), accepted, y, log_alpha

    alpha = math.exp(log_alpha)
    lam = math.exp(math.log(state.lam) + gamma * (alpha - target_accept))
    dev = x - state.mu
    mu = state.mu + gamma * dev
    cov = state.cov + gamma * (np.outer(dev, dev) - state.cov)
    cov = 0.5 * (cov + cov.T)
    return ArwmhState(x, mu, cov, lam, lp_x), accepted, y, log_alpha


@dataclass
class ArwmhResult:
    samples: np.ndarray
    accepted: np.ndarray
    state: ArwmhState
    scales: np.ndarray = field(repr=False, default=None)
    proposals: np.ndarray = field(repr=False, default=None)
    log_alpha: np.ndarray = field(repr=False, default=None)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


def arwmh_run(target: Target, m: int, beta: float, rng: np.random.Generator,
              state: ArwmhState | None = None, adapt: bool = True,
              target_accept: float = ARWMH_TARGET_ACCEPT, start: int = 0) -> ArwmhResult:
    """``m`` ARWMH iterations; step ``i`` (1-based) uses ``γ_{start+i-1}``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if adapt and not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    state = state or ArwmhState.initial(target.dim)
    samples = np.empty((m, target.dim))
    accepted = np.empty(m, dtype=bool)
    scales = np.empty(m)
    proposals = np.empty((m, target.dim))
    log_alpha = np.empty(m)
    for i in range(m):
        g = arwmh_gamma(start + i, beta) if adapt else 0.0
        state, accepted[i], proposals[i], log_alpha[i] = _arwmh_move(
            state, target, g, rng, target_accept, adapt)
        samples[i] = state.x
        scales[i] = state.lam
    return ArwmhResult(samples, accepted, state, scales, proposals, log_alpha)


@dataclass
class WarmStart:
    """Initial state, centre and covariance handed from ARWMH to RLMH."""

    x0: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def factor(self) -> CovarianceFactor:
        return factorize(self.cov)


def summarize_warm_path(samples) -> WarmStart:
    """Mean and (jittered) covariance of the final third of a path."""
    X = check_samples(samples, name="samples")
    m = X.shape[0]
    if m < 9:
        raise ValueError("warm start needs at least 9 iterations")
    tail = X[-math.ceil(m / 3):]
    cov = jittered(sample_cov(tail))
    try:
        factorize(cov)
    except NotPositiveDefiniteError as err:
        raise ValueError(f"warm-start covariance is degenerate: {err}") from None
    return WarmStart(X[-1].copy(), tail.mean(axis=0), cov, X)


def warm_start(target: Target, m: int = 10_000, beta: float = 0.6,
               rng: np.random.Generator | None = None) -> WarmStart:
    rng = rng if rng is not None else np.random.default_rng()
    if m < 9:
        raise ValueError("warm start needs at least 9 iterations")
    run = arwmh_run(target, m, beta, rng)
    return summarize_warm_path(run.samples)


# ---------------------------------------------------------------------------
# MALA


@dataclass
class _MalaPoint:
    x: np.ndarray
    log_p: float
    grad: np.ndarray


def _mala_point(target: Target, x) -> _MalaPoint | None:
    lp = float(target.log_density(x))
    if not np.isfinite(lp):
        return None
    try:
        g = grad_or_finite_difference(target, x)
    except ValueError:
        return None
    if not np.all(np.isfinite(g)):
        return None
    return _MalaPoint(x, lp, g)


def _mala_log_q(to, frm: _MalaPoint, eps, factor: CovarianceFactor):
    # Gaussian kernel up to a constant that cancels: -||Σ^{-1/2}(to - ν(frm))||² / (4ε)
    drift = frm.x + eps * (factor.covariance @ frm.grad)
    z = factor.whiten(to - drift)
    return -float(z @ z) / (4.0 * eps)


def mala_step(x, eps: float, cov, target: Target, rng: np.random.Generator,
              _cache: _MalaPoint | None = None, _factor: CovarianceFactor | None = None):
    """One preconditioned MALA step; returns ``(x', accepted)``."""
    if not eps > 0:
        raise ValueError("step scale must be positive")
    factor = _factor or factorize(cov)
    cur = _cache or _mala_point(target, check_point(x, target.dim))
    if cur is None:
        raise ValueError("target log-density or gradient is not finite at the current state")
    x_new, _, accepted, _, _ = _mala_move(cur, eps, factor, target, rng)
    return x_new, accepted


def _mala_move(cur: _MalaPoint, eps, factor, target, rng):
    drift = cur.x + eps * (factor.covariance @ cur.grad)
    y = drift + math.sqrt(2.0 * eps) * factor.colour(rng.standard_normal(cur.x.shape[0]))
    u = rng.random()
    prop = _mala_point(target, y)
    if prop is None:
        if np.isfinite(target.log_density(y)):
            log.warning("MALA proposal rejected: non-finite gradient at %s", y)
        return cur.x, cur, False, y, -np.inf
    log_alpha = min(0.0, prop.log_p - cur.log_p
                    + _mala_log_q(cur.x, prop, eps, factor)
                    - _mala_log_q(y, cur, eps, factor))
    if np.log(u) < log_alpha:
        return y, prop, True, y, log_alpha
    return cur.x, cur, False, y, log_alpha


def mala(x0, eps: float, cov, n: int, target: Target, rng: np.random.Generator,
         return_trace: bool = False):
    """``n`` MALA iterations with a fixed kernel; returns ``(samples, accepted)``.

    With ``return_trace`` the proposals and log acceptance probabilities are
    appended to the returned tuple.
    """
    factor = factorize(cov)
    cur = _mala_point(target, check_point(x0, target.dim, "x0"))
    if cur is None:
        raise ValueError("initial state has non-finite log-density or gradient")
    samples = np.empty((n, target.dim))
    accepted = np.empty(n, dtype=bool)
    proposals = np.empty((n, target.dim))
    log_alpha = np.empty(n)
    for i in range(n):
        _, cur, accepted[i], proposals[i], log_alpha[i] = _mala_move(cur, eps, factor, target, rng)
        samples[i] = cur.x
    if return_trace:
        return samples, accepted, proposals, log_alpha
    return samples, accepted


@dataclass
class AmalaConfig:
    eps0: float = 1.0
    n_epochs: int = 10
    warm_epoch_length: int = 1000
    final_epoch_length: int = 100_000
    blend: float = 0.3

    def epoch_lengths(self) -> list[int]:
        return [self.warm_epoch_length] * (self.n_epochs - 1) + [self.final_epoch_length]


@dataclass
class AmalaResult:
    samples: np.ndarray
    accepted: np.ndarray
    eps: float
    cov: np.ndarray
    epoch_acceptance: list
    epoch_eps: list

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


def adapt_eps(eps: float, rho: float) -> float:
    return eps * math.exp(rho - MALA_TARGET_ACCEPT)


def blend_cov(cov, samples, weight: float) -> np.ndarray:
    return weight * np.asarray(cov) + (1.0 - weight) * sample_cov(samples)


def amala_run(target: Target, config: AmalaConfig | None = None,
              rng: np.random.Generator | None = None, x0=None) -> AmalaResult:
    """Epoch-wise adaptive MALA; the kernel is fixed within each epoch.

    Between epochs the step scale is multiplied by ``exp(ρ - 0.574)``, where
    ``ρ`` is the fraction of moves in the finished epoch, and the
    preconditioner is blended with that epoch's sample covariance.  Only
    the final epoch is returned.
    """
    config = config or AmalaConfig()
    rng = rng if rng is not None else np.random.default_rng()
    lengths = config.epoch_lengths()
    if min(lengths) < 2:
        raise ValueError("epoch lengths must be at least 2")
    x = np.zeros(target.dim) if x0 is None else check_point(x0, target.dim, "x0")
    eps, cov = float(config.eps0), np.eye(target.dim)
    rates, eps_trace = [], []
    samples = accepted = None
    for i, n in enumerate(lengths):
        if i > 0:
            moved = np.any(np.diff(np.vstack([x_prev_start, samples]), axis=0) != 0, axis=1)
            rho = float(np.mean(moved))
            eps = adapt_eps(eps, rho)
            cov = jittered(blend_cov(cov, samples, config.blend))
        eps_trace.append(eps)
        x_prev_start = x
        samples, accepted = mala(x, eps, cov, n, target, rng)
        rates.append(float(np.mean(accepted)))
        x = samples[-1]
    return AmalaResult(samples, accepted, eps, cov, rates, eps_trace)
