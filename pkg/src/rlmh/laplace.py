"""Laplace proposal ``q(y|x) ∝ exp(-||y - mean(x)||_{1,Σ})``.

``Σ^{1/2}`` is always the lower Cholesky factor ``L``.  Both the norm and the
sampler use the same factor, so densities and draws are self-consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from ._validation import check_square

LOG2 = float(np.log(2.0))


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky factorisation breaks down.

    ``pivot`` is the zero-based index of the leading minor that failed.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Lower-triangular ``L`` with ``Σ = L Lᵀ``; ``log_det_half = Σ_i log L_ii``."""

    L: np.ndarray
    log_det_half: float

    def __post_init__(self):
        self.L.setflags(write=False)
        # triangular inverse by forward substitution, cached so that
        # whitening single points in the sampler loop is one small matmul
        L_inv = solve_triangular(self.L, np.eye(self.L.shape[0]), lower=True)
        L_inv.setflags(write=False)
        object.__setattr__(self, "L_inv", L_inv)

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.L @ self.L.T

    @classmethod
    def from_cholesky(cls, L) -> "CovarianceFactor":
        L = np.array(L, dtype=float, ndmin=2)
        if not np.allclose(L, np.tril(L), rtol=0, atol=0):
            raise ValueError("factor must be lower triangular")
        diag = np.diag(L)
        if np.any(diag <= 0):
            raise NotPositiveDefiniteError("factor needs a strictly positive diagonal",
                                           int(np.argmax(diag <= 0)))
        return cls(L, float(np.sum(np.log(diag))))

    def whiten(self, v) -> np.ndarray:
        """``L⁻¹ v``; ``v`` may be ``(d,)`` or ``(n, d)``."""
        return np.asarray(v, dtype=float) @ self.L_inv.T

    def colour(self, z) -> np.ndarray:
        """``L z`` (inverse of :meth:`whiten`)."""
        z = np.asarray(z, dtype=float)
        return z @ self.L.T


def factorize(sigma, sym_tol: float = 1e-10) -> CovarianceFactor:
    """Cholesky-factorise a symmetric positive-definite matrix."""
    sigma = check_square(sigma, "covariance")
    scale = max(1.0, float(np.max(np.abs(sigma))))
    if np.max(np.abs(sigma - sigma.T)) > sym_tol * scale:
        raise ValueError("covariance is not symmetric")
    L, info = lapack.dpotrf(sigma, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"covariance is not positive definite (leading minor {info - 1} failed)",
            info - 1,
        )
    if info < 0:  # pragma: no cover - LAPACK argument error
        raise RuntimeError(f"dpotrf argument {-info} invalid")
    return CovarianceFactor.from_cholesky(L)


def norm1_sigma(factor: CovarianceFactor, v) -> np.ndarray | float:
    """``||L⁻¹ v||_1``; vectorised over leading rows of ``v``."""
    w = factor.whiten(v)
    out = np.abs(w).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def proposal_log_density(factor: CovarianceFactor, mean, y) -> np.ndarray | float:
    """Normalised log-density of ``y`` under the Laplace proposal centred at ``mean``."""
    diff = np.asarray(y, dtype=float) - np.asarray(mean, dtype=float)
    return -norm1_sigma(factor, diff) - factor.dim * LOG2 - factor.log_det_half


def standard_laplace(rng: np.random.Generator, size) -> np.ndarray:
    """I.i.d. standard Laplace draws by inversion of uniform variates."""
    u = rng.random(size) - 0.5
    # u == -0.5 maps to an infinite draw; it has probability 2**-53
    u = np.where(u == -0.5, np.nextafter(-0.5, 0.0), u)
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


def proposal_sample(factor: CovarianceFactor, mean, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    z = standard_laplace(rng, mean.shape)
    return mean + factor.colour(z)
