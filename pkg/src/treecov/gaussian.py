"""Zero-mean multivariate Gaussian primitives.

Validated covariance matrices, KL divergences between zero-mean Gaussians,
and pairwise correlation / mutual information read off a covariance matrix.
Every information quantity in this package is measured in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

SYMMETRY_TOL = 1e-10
KL_CLAMP = 1e-12
DEGENERATE_CORRELATION = 1.0 - 1e-12


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be positive definite failed its factorization."""


class DegenerateCorrelationError(ValueError):
    """A pairwise correlation is numerically indistinguishable from +-1."""


class NumericalError(RuntimeError):
    """A computed value violates a mathematical guarantee beyond roundoff."""


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric positive definite covariance matrix.

    Construction validates squareness, symmetry (max absolute asymmetry at
    most 1e-10) and positive definiteness (success of the Cholesky
    factorization). Instances are immutable; ``chol`` holds the lower
    triangular factor and is reused for log-determinants and solves.

    Parameters
    ----------
    entries : np.ndarray
        Square (p, p) array of covariances, p >= 1.
    """

    entries: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"covariance must be a square matrix, got shape {a.shape}")
        asym = float(np.max(np.abs(a - a.T)))
        if asym > SYMMETRY_TOL:
            raise ValueError(
                f"covariance asymmetry {asym:.3e} exceeds tolerance {SYMMETRY_TOL:.0e}"
            )
        try:
            factor = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("covariance is not positive definite") from exc
        a.setflags(write=False)
        factor.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "chol", factor)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def log_det(self) -> float:
        """ln det of the covariance, from the triangular factor."""
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Zero-mean multivariate Gaussian, identified entirely by its covariance."""

    cov: CovMatrix

    @property
    def dim(self) -> int:
        return self.cov.dim


def _clamp_kl(kl: float) -> float:
    # Roundoff may push a true zero slightly negative; anything worse is a fault.
    if kl >= 0.0:
        return kl
    if kl >= -KL_CLAMP:
        return 0.0
    raise NumericalError(f"KL divergence {kl:.6e} is negative beyond roundoff")


def kl_gaussian(p0: GaussianModel, p1: GaussianModel) -> float:
    """KL divergence D(p0 || p1) between zero-mean Gaussians, in nats.

    Evaluates the closed form

        0.5 * (tr(S1^-1 S0) - p + ln det S1 - ln det S0)

    through the triangular Cholesky factors: the trace term is the squared
    Frobenius norm of L1^-1 L0 and the log-determinants come from the factor
    diagonals. Bitwise-equal inputs return exactly 0.0; results in
    [-1e-12, 0) are clamped to 0.

    Parameters
    ----------
    p0, p1 : GaussianModel
        Distributions of equal dimension; p0 is the reference measure.

    Returns
    -------
    float
        Nonnegative divergence in nats.
    """
    if p0.dim != p1.dim:
        raise ValueError(f"dimension mismatch: {p0.dim} vs {p1.dim}")
    if np.array_equal(p0.cov.entries, p1.cov.entries):
        return 0.0
    a = solve_triangular(p1.cov.chol, p0.cov.chol, lower=True)
    kl = 0.5 * (float(np.sum(a * a)) - p0.dim + p1.cov.log_det - p0.cov.log_det)
    return _clamp_kl(kl)


def kl_tree_simplified(sigma: CovMatrix, sigma_tree: CovMatrix) -> float:
    """Divergence to a marginal-matching tree covariance: -0.5 * ln det(S St^-1).

    Precondition: ``sigma_tree`` matches ``sigma`` on every variance and on
    the covariances of some spanning tree, and its inverse carries that
    tree's sparsity. Under that precondition the value equals
    ``kl_gaussian`` of the two models; for arbitrary inputs it is just the
    log-determinant difference and may be negative.
    """
    if sigma.dim != sigma_tree.dim:
        raise ValueError(f"dimension mismatch: {sigma.dim} vs {sigma_tree.dim}")
    return 0.5 * (sigma_tree.log_det - sigma.log_det)


def _check_vertex_pair(dim: int, u: int, v: int) -> None:
    for name, w in (("u", u), ("v", v)):
        if not 0 <= w < dim:
            raise ValueError(f"vertex {name}={w} out of range for dimension {dim}")
    if u == v:
        raise ValueError(f"vertices must differ, got u = v = {u}")


def correlation(sigma: CovMatrix, u: int, v: int) -> float:
    """Pearson correlation sigma_uv / sqrt(sigma_uu * sigma_vv) for u != v.

    Reads the off-diagonal entry at the canonical (min, max) position so the
    result is exactly symmetric in (u, v).
    """
    _check_vertex_pair(sigma.dim, u, v)
    suu = float(sigma.entries[u, u])
    svv = float(sigma.entries[v, v])
    if suu <= 0.0 or svv <= 0.0:
        raise ValueError(f"nonpositive diagonal entry at ({u}, {v})")
    a, b = (u, v) if u < v else (v, u)
    return float(sigma.entries[a, b]) / math.sqrt(suu * svv)


def pairwise_mutual_information(sigma: CovMatrix, u: int, v: int) -> float:
    """Gaussian mutual information between components u and v, in nats.

    I(u; v) = -0.5 * ln(1 - rho^2) with rho the pairwise correlation.
    Exactly symmetric in (u, v) and invariant to diagonal rescaling of
    ``sigma``. Correlations with |rho| >= 1 - 1e-12 are rejected as
    degenerate.
    """
    rho = correlation(sigma, u, v)
    if abs(rho) >= DEGENERATE_CORRELATION:
        raise DegenerateCorrelationError(
            f"correlation {rho!r} between {u} and {v} is numerically degenerate"
        )
    return -0.5 * math.log1p(-rho * rho)
