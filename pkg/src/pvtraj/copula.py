"""Gaussian copula machinery: rank transforms, correlation tracking, sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    DegenerateStateError,
    DomainError,
    InsufficientDataError,
    NotPSDError,
    NumericalError,
)

RANK_EPS = 1e-6
PSD_FLOOR = 1e-10
DEFAULT_FORGETTING = 0.99


def to_uniform(cdf, p, eps: float = RANK_EPS):
    """Rank of ``p`` under its predictive CDF, kept inside ``[eps, 1 - eps]``."""
    return np.clip(cdf.evaluate(p), eps, 1 - eps)


def probit(u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("probit is defined on the open interval (0, 1)")
    return ndtri(u)


def probit_inverse(x):
    return ndtr(np.asarray(x, dtype=float))


def rescale_to_correlation(sigma) -> np.ndarray:
    """Divide element-wise by ``s s^T`` with ``s`` the root of the diagonal."""
    sigma = np.asarray(sigma, dtype=float)
    d = np.diag(sigma)
    if np.any(~(d > 0)):
        raise DegenerateStateError("covariance diagonal must be strictly positive")
    s = np.sqrt(d)
    R = sigma / np.outer(s, s)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R


def _psd_tolerance(evals):
    return len(evals) * np.finfo(float).eps * max(np.abs(evals).max(), 1.0)


def nearest_psd(R, floor: float = PSD_FLOOR) -> np.ndarray:
    """Clip negative eigenvalues to ``floor`` and restore a unit diagonal.

    Eigenvalues that are negative only at rounding level are left alone, so a
    PSD correlation matrix (including rank-deficient ones) passes through
    unchanged and the operation is idempotent.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("matrix is not square")
    sym = 0.5 * (R + R.T)
    evals, evecs = np.linalg.eigh(sym)
    if evals.min() < -_psd_tolerance(evals):
        sym = (evecs * np.maximum(evals, floor)) @ evecs.T
        sym = 0.5 * (sym + sym.T)
    return rescale_to_correlation(sym)


def is_psd(R, tol: float = 1e-8) -> bool:
    return bool(np.linalg.eigvalsh(0.5 * (R + R.T)).min() >= -tol)


@dataclass(frozen=True)
class CorrelationState:
    """Exponentially forgetting second-moment matrix of the probit ranks."""

    sigma: np.ndarray
    forgetting: float = DEFAULT_FORGETTING
    count: int = 0
    repaired: bool = False

    @classmethod
    def identity(cls, dim: int, forgetting: float = DEFAULT_FORGETTING):
        if not 0 <= forgetting <= 1:
            raise ValueError("forgetting factor must lie in [0, 1]")
        return cls(np.eye(dim), float(forgetting))

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def correlation(self) -> np.ndarray:
        """Rescaled and PSD-repaired correlation used at sampling time."""
        return nearest_psd(rescale_to_correlation(self.sigma))


def update_recursive(state: CorrelationState, x) -> CorrelationState:
    """One step of ``S_t = lam * S_{t-1} + (1 - lam) * x x^T``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (state.dim,):
        raise ValueError(f"expected a vector of length {state.dim}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite entries in Gaussian vector; update rejected")
    lam = state.forgetting
    sigma = lam * state.sigma + (1 - lam) * np.outer(x, x)
    sigma = 0.5 * (sigma + sigma.T)
    return replace(state, sigma=sigma, count=state.count + 1)


def repair_state(state: CorrelationState) -> CorrelationState:
    return replace(state, sigma=state.correlation(), repaired=True)


@dataclass(frozen=True)
class SamplerHandle:
    factor: np.ndarray
    seed: object = None

    @property
    def dim(self) -> int:
        return self.factor.shape[0]


def build_sampler(R, seed=None) -> SamplerHandle:
    """Eigen-decomposition square root of a repaired correlation matrix."""
    R = np.asarray(R, dtype=float)
    if not np.allclose(R, R.T, atol=1e-10):
        raise NotPSDError("correlation matrix is not symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (R + R.T))
    if evals.min() < -1e-8:
        raise NotPSDError(
            f"correlation matrix has eigenvalue {evals.min():.3g}; repair it first")
    return SamplerHandle(evecs * np.sqrt(np.clip(evals, 0, None)), seed)


def sample(handle: SamplerHandle, S: int) -> np.ndarray:
    """``S`` draws of MVN(0, R) as an ``(S, D)`` array; same seed, same batch."""
    if S < 1:
        raise ValueError("S must be >= 1")
    rng = np.random.default_rng(handle.seed)
    return rng.standard_normal((S, handle.dim)) @ handle.factor.T


def empirical_correlation(history) -> np.ndarray:
    """Correlation of zero-mean Gaussian vectors, PSD-repaired.

    The mean is known to be zero (probit ranks of calibrated marginals), so
    the raw second moment is used rather than a centred covariance.
    """
    X = np.atleast_2d(np.asarray(history, dtype=float))
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 vectors for a correlation")
    second = X.T @ X / X.shape[0]
    return nearest_psd(rescale_to_correlation(second))


def write_matrix(R, path) -> None:
    """Row-major delimited text; the header line announces the dimension."""
    R = np.asarray(R)
    with Path(path).open("w") as fh:
        fh.write(f"# D={R.shape[0]}\n")
        for row in R:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
