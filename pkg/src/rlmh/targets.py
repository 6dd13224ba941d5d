"""Target distributions, described by a log-density on R^d.

Densities are handled in log space throughout.  A log-density of ``-inf``
is the only permitted non-finite value and marks a zero-density point that
any sampler must reject.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import log_ndtr

from ._validation import check_point
from .laplace import CovarianceFactor, NotPositiveDefiniteError, factorize

LOG_2PI = float(np.log(2.0 * np.pi))

LogDensity = Callable[[np.ndarray], "np.ndarray | float"]


@dataclass(frozen=True, eq=False)
class Target:
    """A target density ``p`` on R^d.

    ``log_density`` and ``grad_log_density`` accept either a single point of
    shape ``(d,)`` or a batch of shape ``(n, d)``.  ``sampler``, when given,
    draws exact i.i.d. samples and is used to build reference sets.
    """

    dim: int
    log_density: LogDensity
    grad_log_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "target"
    sampler: Optional[Callable[[int, np.random.Generator], np.ndarray]] = field(
        default=None, repr=False)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.sampler is None:
            raise ValueError(f"target {self.label!r} has no exact sampler")
        return np.asarray(self.sampler(int(n), rng), dtype=float).reshape(n, self.dim)


@dataclass(frozen=True)
class ReferenceSample:
    points: np.ndarray
    source: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("a reference sample needs at least 2 rows of a 2-D array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("reference sample contains non-finite entries")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


class ReferenceParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# built-in families


def _gaussian_parts(mean, cov, name="covariance"):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.shape[0]
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov * np.eye(d)
    elif cov.ndim == 1:
        cov = np.diag(cov)
    try:
        factor = factorize(cov)
    except NotPositiveDefiniteError as err:
        raise NotPositiveDefiniteError(f"{name}: {err}", err.pivot) from None
    if factor.dim != d:
        raise ValueError(f"{name} has shape {cov.shape}, mean has dimension {d}")
    return mean, factor


def _gauss_logpdf(x, mean, factor: CovarianceFactor):
    z = factor.whiten(x - mean)
    d = factor.dim
    return -0.5 * np.sum(z * z, axis=-1) - 0.5 * d * LOG_2PI - factor.log_det_half


def _gauss_score(x, mean, factor: CovarianceFactor):
    # -Σ⁻¹(x - μ) = -L⁻ᵀ L⁻¹ (x - μ)
    z = factor.whiten(x - mean)
    if z.ndim == 1:
        return -solve_triangular(factor.L, z, lower=True, trans="T", check_finite=False)
    return -solve_triangular(factor.L, z.T, lower=True, trans="T", check_finite=False).T


def _logsumexp(a, axis=-1, keepdims=False):
    return np.logaddexp.reduce(a, axis=axis, keepdims=keepdims)


def _as_float(v):
    return float(v) if np.ndim(v) == 0 else v


def gaussian(mean=None, cov=None, label: str | None = None, dim: int | None = None) -> Target:
    """``N(mean, cov)``; ``dim`` alone gives the standard normal on R^dim."""
    if mean is None:
        if dim is None:
            raise ValueError("gaussian needs a mean or a dimension")
        mean = np.zeros(int(dim))
    if cov is None:
        cov = 1.0
    mean, factor = _gaussian_parts(mean, cov)
    d = mean.shape[0]

    def log_density(x):
        return _as_float(_gauss_logpdf(np.asarray(x, dtype=float), mean, factor))

    def grad(x):
        return _gauss_score(np.asarray(x, dtype=float), mean, factor)

    def sampler(n, rng):
        return mean + factor.colour(rng.standard_normal((n, d)))

    return Target(d, log_density, grad, label or f"gaussian(d={d})", sampler)


def gmm(weights, means, covs, label: str | None = None) -> Target:
    """Finite Gaussian mixture, log-density by log-sum-exp over components."""
    weights = np.asarray(weights, dtype=float).ravel()
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("mixture weights must be positive and sum to 1")
    means = [np.atleast_1d(np.asarray(m, dtype=float)) for m in means]
    if len(means) != len(weights) or len(covs) != len(weights):
        raise ValueError("weights, means and covs must have the same length")
    parts = [_gaussian_parts(m, c, name=f"component {k} covariance")
             for k, (m, c) in enumerate(zip(means, covs))]
    d = parts[0][0].shape[0]
    if any(m.shape[0] != d for m, _ in parts):
        raise ValueError("all mixture components must share one dimension")
    log_w = np.log(weights)

    def _component_terms(x):
        return np.stack([lw + _gauss_logpdf(x, m, f) for lw, (m, f) in zip(log_w, parts)],
                        axis=-1)

    def log_density(x):
        x = np.asarray(x, dtype=float)
        return _as_float(_logsumexp(_component_terms(x), axis=-1))

    def grad(x):
        x = np.asarray(x, dtype=float)
        terms = _component_terms(x)
        resp = np.exp(terms - _logsumexp(terms, axis=-1, keepdims=True))
        scores = np.stack([_gauss_score(x, m, f) for m, f in parts], axis=-2)
        return np.sum(resp[..., None] * scores, axis=-2)

    def sampler(n, rng):
        ks = rng.choice(len(weights), size=n, p=weights)
        z = rng.standard_normal((n, d))
        out = np.empty((n, d))
        for k, (m, f) in enumerate(parts):
            sel = ks == k
            out[sel] = m + f.colour(z[sel])
        return out

    return Target(d, log_density, grad, label or f"gmm(k={len(weights)}, d={d})", sampler)


def _skewnorm_logpdf(x, loc, scale, shape):
    z = (x - loc) / scale
    return np.log(2.0) - 0.5 * LOG_2PI - 0.5 * z * z - np.log(scale) + log_ndtr(shape * z)


def _skewnorm_score(x, loc, scale, shape):
    z = (x - loc) / scale
    # d/dz log Φ(a z) = a φ(a z) / Φ(a z), evaluated in log space
    mills = np.exp(-0.5 * (shape * z) ** 2 - 0.5 * LOG_2PI - log_ndtr(shape * z))
    return (-z + shape * mills) / scale


def skew_normal(loc=0.0, scale=1.0, shape=5.0, label: str | None = None) -> Target:
    """One-dimensional skew-normal.  Stands in for the unspecified "skewed" target."""
    from scipy.stats import skewnorm

    if scale <= 0:
        raise ValueError("scale must be positive")

    def log_density(x):
        x = np.asarray(x, dtype=float)
        return _as_float(_skewnorm_logpdf(x[..., 0], loc, scale, shape))

    def grad(x):
        x = np.asarray(x, dtype=float)
        return _skewnorm_score(x[..., 0], loc, scale, shape)[..., None]

    def sampler(n, rng):
        return skewnorm.rvs(shape, loc=loc, scale=scale, size=n, random_state=rng)[:, None]

    return Target(1, log_density, grad, label or f"skew_normal(shape={shape})", sampler)


def skew_mixture(weights=(0.5, 0.5), locs=(-4.0, 2.0), scales=(1.0, 1.0),
                 shapes=(5.0, 5.0), label: str | None = None) -> Target:
    """Mixture of 1-D skew-normals.  Stands in for the "skewed multimodal" target."""
    from scipy.stats import skewnorm

    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("mixture weights must be positive and sum to 1")
    spec = list(zip(np.log(weights), locs, scales, shapes))

    def _terms(x):
        return np.stack([lw + _skewnorm_logpdf(x, l, s, a) for lw, l, s, a in spec], axis=-1)

    def log_density(x):
        x = np.asarray(x, dtype=float)[..., 0]
        return _as_float(_logsumexp(_terms(x), axis=-1))

    def grad(x):
        x = np.asarray(x, dtype=float)[..., 0]
        terms = _terms(x)
        resp = np.exp(terms - _logsumexp(terms, axis=-1, keepdims=True))
        scores = np.stack([_skewnorm_score(x, l, s, a) for _, l, s, a in spec], axis=-1)
        return np.sum(resp * scores, axis=-1)[..., None]

    def sampler(n, rng):
        ks = rng.choice(len(weights), size=n, p=weights)
        out = np.empty(n)
        for k, (_, l, s, a) in enumerate(spec):
            sel = ks == k
            out[sel] = skewnorm.rvs(a, loc=l, scale=s, size=int(sel.sum()), random_state=rng)
        return out[:, None]

    return Target(1, log_density, grad, label or "skew_mixture", sampler)


# Named presets used by the illustrations and the CLI.  ``bimodal`` is the
# equal-weight N(±5, 1) mixture; the remaining presets are documented stand-ins.
PRESETS = {
    "bimodal": dict(family="gmm", weights=[0.5, 0.5], means=[[-5.0], [5.0]],
                    covs=[[[1.0]], [[1.0]]]),
    "unequal_mixture": dict(family="gmm", weights=[0.3, 0.7], means=[[-5.0], [5.0]],
                            covs=[[[1.0]], [[1.0]]]),
    "skewed": dict(family="skew_normal", loc=0.0, scale=1.0, shape=5.0),
    "skewed_multimodal": dict(family="skew_mixture"),
    "gmm2d": dict(family="gmm", weights=[0.5, 0.5], means=[[-3.0, -3.0], [3.0, 3.0]],
                  covs=[[[1.0, 0.5], [0.5, 1.0]], [[1.0, -0.3], [-0.3, 1.0]]]),
}


def make_builtin_target(family: str, **params) -> Target:
    """Build a target from a family name and keyword parameters.

    Families: ``gaussian(mean, cov)``, ``gmm(weights, means, covs)``,
    ``skew_normal(loc, scale, shape)``, ``skew_mixture(...)``, or any key of
    :data:`PRESETS`.
    """
    if family in PRESETS:
        spec = dict(PRESETS[family])
        spec.update(params)
        spec.setdefault("label", family)
        return make_builtin_target(spec.pop("family"), **spec)
    builders = {"gaussian": gaussian, "gmm": gmm, "skew_normal": skew_normal,
                "skew_mixture": skew_mixture}
    try:
        builder = builders[family]
    except KeyError:
        raise ValueError(f"unknown target family {family!r}") from None
    return builder(**params)


def grad_or_finite_difference(target: Target, x) -> np.ndarray:
    """Analytic score when available, else central differences.

    The step for coordinate ``i`` is ``1e-5 * (1 + |x_i|)``.
    """
    x = check_point(x, target.dim)
    if target.grad_log_density is not None:
        return np.asarray(target.grad_log_density(x), dtype=float).reshape(target.dim)
    if not np.isfinite(target.log_density(x)):
        raise ValueError("log-density is not finite at x")
    g = np.empty(target.dim)
    for i in range(target.dim):
        h = 1e-5 * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        lp, lm = target.log_density(xp), target.log_density(xm)
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise ValueError(f"non-finite log-density in the difference stencil of coordinate {i}")
        g[i] = (lp - lm) / (2.0 * h)
    return g


def load_reference_samples(path) -> ReferenceSample:
    """Read a reference CSV: one sample per row, optional single header row."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not c.strip() for c in record):
                continue
            try:
                values = [float(c) for c in record]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ReferenceParseError(f"non-numeric cell in {record!r}", lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ReferenceParseError(f"expected {width} columns, found {len(values)}", lineno)
            if not all(np.isfinite(values)):
                raise ReferenceParseError("non-finite entry", lineno)
            rows.append(values)
    if not rows:
        raise ReferenceParseError("no sample rows in file", 1)
    if len(rows) < 2:
        raise ReferenceParseError("at least 2 sample rows are required", lineno)
    return ReferenceSample(np.array(rows), source=str(path))
