"""Noisy linear observation model y = H x + w and its sufficient statistics.

H mixes a p-dimensional latent Gaussian into m <= p observed channels and w
is independent Gaussian noise. This module holds the model representation,
seeded sampling, empirical statistics of an observation set, and the flat
CSV matrix format used by the command-line tools.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from pathlib import Path

import numpy as np

from .gaussian import (
    CovMatrix,
    GaussianModel,
    NotPositiveDefiniteError,
    kl_gaussian,
)

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Observation map y = H x + w with w ~ N(0, D).

    H must be m x p with m <= p and full numerical row rank (smallest
    singular value above 1e-10 times the largest). Pass ``check_rank=False``
    to build intentionally degenerate models, e.g. H = 0 when exercising
    no-information limits in tests.

    Parameters
    ----------
    h : np.ndarray
        Mixing matrix, shape (m, p).
    d : CovMatrix
        Noise covariance, dimension m.
    """

    h: np.ndarray
    d: CovMatrix
    check_rank: InitVar[bool] = True

    def __post_init__(self, check_rank: bool) -> None:
        h = np.array(self.h, dtype=float)
        if h.ndim != 2:
            raise ValueError(f"H must be a matrix, got shape {h.shape}")
        m, p = h.shape
        if m < 1:
            raise ValueError("H needs at least one row")
        if m > p:
            raise ValueError(f"observation dimension m={m} exceeds latent dimension p={p}")
        if self.d.dim != m:
            raise ValueError(f"noise covariance dimension {self.d.dim} != m={m}")
        if check_rank:
            sv = np.linalg.svd(h, compute_uv=False)
            if sv[-1] <= RANK_RTOL * sv[0]:
                raise ValueError("H is numerically rank deficient")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def p(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """R stacked observation rows with cached sufficient statistics.

    ``second_moment`` is the uncentered (1/R) sum of y y^T used by the
    iterative update; ``centered_cov`` is second_moment - mean mean^T, the
    sample covariance S_Y. Both are kept because the model is zero-mean yet
    finite samples have a nonzero empirical mean.
    """

    samples: np.ndarray
    r: int = field(init=False)
    mean: np.ndarray = field(init=False)
    second_moment: np.ndarray = field(init=False)
    centered_cov: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        y = np.array(self.samples, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise ValueError(f"samples must be a nonempty R x m array, got shape {y.shape}")
        r = y.shape[0]
        second = y.T @ y / r
        second = (second + second.T) / 2.0
        mean = y.mean(axis=0)
        centered = second - np.outer(mean, mean)
        for arr in (y, mean, second, centered):
            arr.setflags(write=False)
        object.__setattr__(self, "samples", y)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second_moment", second)
        object.__setattr__(self, "centered_cov", centered)

    @property
    def m(self) -> int:
        return self.samples.shape[1]


def sample_observations(
    model: LinearModel, sigma_true: CovMatrix, r: int, seed: int
) -> ObservationSet:
    """Draw r independent samples of y = H x + w.

    x ~ N(0, sigma_true) and w ~ N(0, D) are realized by applying the
    Cholesky factors to standard normal blocks from numpy's PCG64 generator
    (``numpy.random.default_rng``); the latent block is drawn before the
    noise block, so a seed fixes the output bit for bit.
    """
    if sigma_true.dim != model.p:
        raise ValueError(
            f"latent covariance dimension {sigma_true.dim} != model p={model.p}"
        )
    if r < 1:
        raise ValueError(f"need at least one sample, got r={r}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((r, model.p)) @ sigma_true.chol.T
    w = rng.standard_normal((r, model.m)) @ model.d.chol.T
    return ObservationSet(x @ model.h.T + w)


def observation_cov(model: LinearModel, sigma: CovMatrix) -> CovMatrix:
    """Covariance of y under latent covariance ``sigma``: H sigma H^T + D."""
    if sigma.dim != model.p:
        raise ValueError(f"latent covariance dimension {sigma.dim} != model p={model.p}")
    hs = model.h @ sigma.entries @ model.h.T
    return CovMatrix((hs + hs.T) / 2.0 + model.d.entries)


def empirical_gaussian(obs: ObservationSet) -> GaussianModel:
    """Zero-mean Gaussian with the centered sample covariance S_Y.

    S_Y must be positive definite, which requires more samples than the
    observation dimension; otherwise the error reports the rank deficit.
    """
    try:
        return GaussianModel(CovMatrix(obs.centered_cov))
    except NotPositiveDefiniteError as exc:
        rank = int(np.linalg.matrix_rank(obs.centered_cov))
        raise NotPositiveDefiniteError(
            f"centered sample covariance is singular: rank {rank} of {obs.m} "
            f"(deficit {obs.m - rank}) from r={obs.r} samples"
        ) from exc


def observation_kl(obs: ObservationSet, model: LinearModel, sigma_tree: CovMatrix) -> float:
    """Observation-space divergence D(N(0, S_Y) || N(0, H sigma_tree H^T + D)).

    The quantity the iterative fit drives down: how far the model-implied
    observation covariance sits from the empirical one.
    """
    if obs.m != model.m:
        raise ValueError(f"observation dimension {obs.m} != model m={model.m}")
    return kl_gaussian(
        empirical_gaussian(obs), GaussianModel(observation_cov(model, sigma_tree))
    )


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Write a rectangular matrix as comma-separated rows, no header.

    Each value is formatted with 17 significant digits, enough for an exact
    float64 round trip (the format contract asks for at least 12).
    Observation sets are written with one sample per row.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"need a 2-d array, got shape {a.shape}")
    lines = [",".join(f"{x:.17g}" for x in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Read a rectangular comma-separated matrix written by write_matrix_csv."""
    rows: list[list[float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from exc
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    width = len(rows[0])
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != width:
            raise ValueError(f"{path}: ragged rows ({len(row)} cells vs {width})")
    return np.asarray(rows, dtype=float)
