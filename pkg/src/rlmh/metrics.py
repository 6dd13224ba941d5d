"""Sample-quality measures: ESJD, Gaussian-kernel MMD, acceptance rate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ._validation import check_samples
from .targets import ReferenceSample

_BLOCK = 2048


@dataclass(frozen=True)
class MetricReport:
    esjd: float
    mmd: float
    acceptance_rate: float
    n_samples: int
    lengthscale: float

    def as_dict(self) -> dict:
        return asdict(self)


def esjd(path) -> float:
    """Mean squared Euclidean jump between consecutive rows."""
    X = check_samples(path, name="path")
    if X.shape[0] < 2:
        raise ValueError("ESJD needs a path of at least 2 states")
    jumps = np.diff(X, axis=0)
    return float(np.mean(np.sum(jumps * jumps, axis=1)))


def median_heuristic(ref) -> float:
    """Half the lower median of distinct pairwise distances; 1 if that is 0."""
    Y = ref.points if isinstance(ref, ReferenceSample) else check_samples(ref, min_rows=2)
    if Y.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 points")
    dist = pdist(Y)
    k = (dist.size - 1) // 2
    med = float(np.partition(dist, k)[k])
    del dist
    return 0.5 * med if med > 0 else 1.0


def gaussian_kernel(x, y, lengthscale: float) -> float:
    if not lengthscale > 0:
        raise ValueError("lengthscale must be positive")
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-np.sum(diff * diff) / lengthscale ** 2))


def _kernel_sum(A, B, lengthscale) -> float:
    # blocked over rows of A so large sets never need the full Gram matrix
    total = 0.0
    for i in range(0, A.shape[0], _BLOCK):
        sq = cdist(A[i:i + _BLOCK], B, "sqeuclidean")
        total += float(np.sum(np.exp(-sq / lengthscale ** 2)))
    return total


def mmd_squared(P, Q, lengthscale: float) -> float:
    """Biased (V-statistic) squared MMD, before any clamping."""
    if not lengthscale > 0:
        raise ValueError("lengthscale must be positive")
    P = check_samples(P, name="P")
    Q = check_samples(Q, P.shape[1], name="Q")
    m, n = P.shape[0], Q.shape[0]
    kpp = _kernel_sum(P, P, lengthscale) / (m * m)
    kqq = _kernel_sum(Q, Q, lengthscale) / (n * n)
    kpq = _kernel_sum(P, Q, lengthscale) / (m * n)
    return kpp - 2.0 * kpq + kqq


def mmd(P, Q, lengthscale: float) -> float:
    return float(np.sqrt(max(mmd_squared(P, Q, lengthscale), 0.0)))


def acceptance_rate(flags) -> float:
    flags = np.asarray(flags, dtype=float).ravel()
    if flags.size == 0:
        raise ValueError("no acceptance flags")
    return float(np.mean(flags))


def move_rate(path) -> float:
    """Fraction of steps where the state changed (acceptance proxy from a path)."""
    X = check_samples(path, min_rows=2, name="path")
    return float(np.mean(np.any(np.diff(X, axis=0) != 0, axis=1)))


def evaluate(path, accepted, reference, lengthscale: float | None = None) -> MetricReport:
    """Score an evaluation path against a reference sample."""
    Y = reference.points if isinstance(reference, ReferenceSample) else check_samples(reference)
    ell = median_heuristic(Y) if lengthscale is None else float(lengthscale)
    X = check_samples(path, Y.shape[1], name="path")
    return MetricReport(esjd(X), mmd(X, Y, ell), acceptance_rate(accepted), X.shape[0], ell)
