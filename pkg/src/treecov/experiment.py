"""Synthetic comparative experiment.

Generates a tree-structured ground-truth covariance, corrupts it into a
prior, draws random mixing matrices at a target SNR, and sweeps observation
dimensions to compare the iteratively learned tree against the tree fitted
to the prior alone and against the oracle tree fitted to the truth itself.
Results are written as a structured text document plus a flat CSV table.
"""

from __future__ import annotations

import datetime
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import __version__
from .em import EmConfig, EmTrace, StopReason, run_em
from .gaussian import CovMatrix, GaussianModel, NumericalError, kl_gaussian
from .linear import (
    RANK_RTOL,
    LinearModel,
    read_matrix_csv,
    sample_observations,
)
from .tree import _path_product_corr, chow_liu, prufer_decode

MAX_MIXING_REDRAWS = 10
SNR_DEFINITION = "snr_db = 10*log10(trace(H Sigma H^T) / trace(D)) with white noise D = s^2 I"


class ConfigError(ValueError):
    """Invalid experiment configuration: unknown key, missing field, bad value."""


def derive_seed(master: int, *parts: object) -> int:
    """Stable 63-bit seed mixed from the master seed and a label tuple.

    SHA-256 over the repr of (master, *parts); fixed across runs and
    platforms, so every trial gets a reproducible, decorrelated stream.
    """
    digest = hashlib.sha256(repr((int(master),) + parts).encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def generate_ground_truth(p: int, seed: int, non_tree_mix: float = 0.0) -> CovMatrix:
    """Random covariance that is exactly tree-structured by default.

    A uniform random labelled tree (random length-(p-2) sequence, decoded),
    edge correlations drawn uniformly from [0.5, 0.95] with random signs,
    unit variances, completed by path products. ``non_tree_mix`` > 0 blends
    in a random SPD matrix with the same diagonal, for studying the
    irreducible error of tree approximations off the tree set.
    """
    if p < 2:
        raise ValueError(f"need at least two vertices, got p={p}")
    rng = np.random.default_rng(seed)
    sequence = [int(s) for s in rng.integers(0, p, size=p - 2)]
    edges = prufer_decode(sequence, p)
    magnitudes = rng.uniform(0.5, 0.95, size=p - 1)
    signs = np.where(rng.integers(0, 2, size=p - 1) == 0, -1.0, 1.0)
    rho = {edge: float(value) for edge, value in zip(edges, magnitudes * signs)}
    corr = _path_product_corr(p, edges, rho)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    for (u, v), value in rho.items():
        corr[u, v] = value
        corr[v, u] = value
    sigma = CovMatrix(corr)
    if non_tree_mix > 0.0:
        sigma = generate_prior(sigma, non_tree_mix, derive_seed(seed, "non-tree"))
    return sigma


def generate_prior(sigma: CovMatrix, alpha: float, seed: int) -> CovMatrix:
    """Corrupted prior (1 - alpha) * sigma + alpha * P.

    P is a seeded random SPD matrix (Wishart with 2p degrees of freedom)
    rescaled to sigma's diagonal, so alpha = 0 returns sigma unchanged and
    alpha = 1 keeps only the variances in common with the truth.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1], got {alpha}")
    p = sigma.dim
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((p, 2 * p))
    raw = g @ g.T / (2 * p)
    scale = np.sqrt(np.diag(sigma.entries) / np.diag(raw))
    perturbation = raw * np.outer(scale, scale)
    mixed = (1.0 - alpha) * sigma.entries + alpha * perturbation
    return CovMatrix((mixed + mixed.T) / 2.0)


def generate_mixing(
    p: int, m: int, snr_db: float, sigma: CovMatrix, seed: int
) -> LinearModel:
    """Random dense mixing at a target SNR.

    H has iid standard normal entries and is redrawn (at most 10 times) if
    numerically rank deficient. The noise is white, D = s^2 I with s^2 =
    trace(H sigma H^T) / (m * 10^(snr_db / 10)), which makes the ratio of
    signal to noise power equal 10^(snr_db / 10) exactly.
    """
    if not 1 <= m <= p:
        raise ValueError(f"need 1 <= m <= p, got m={m}, p={p}")
    if sigma.dim != p:
        raise ValueError(f"covariance dimension {sigma.dim} != p={p}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_MIXING_REDRAWS):
        h = rng.standard_normal((m, p))
        sv = np.linalg.svd(h, compute_uv=False)
        if sv[-1] > RANK_RTOL * sv[0]:
            break
    else:
        raise NumericalError(
            f"mixing matrix stayed rank deficient after {MAX_MIXING_REDRAWS} draws"
        )
    signal_power = float(np.trace(h @ sigma.entries @ h.T))
    noise_var = signal_power / (m * 10.0 ** (snr_db / 10.0))
    return LinearModel(h, CovMatrix(noise_var * np.eye(m)))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Sweep parameters; field names double as the config-file keys."""

    p: int
    m_values: tuple[int, ...]
    r: int = 100
    snr_db: float = 20.0
    trials: int = 100
    seed: int = 0
    epsilon: float = 0.01
    l_max: int = 20
    alpha: float = 0.5
    sigma_csv: str | None = None
    sigma0_csv: str | None = None
    output: str = "results.txt"

    def __post_init__(self) -> None:
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        if self.p < 2:
            raise ConfigError(f"p must be at least 2, got {self.p}")
        for m in self.m_values:
            if not 1 <= m <= self.p:
                raise ConfigError(f"every m must satisfy 1 <= m <= p={self.p}, got {m}")
        if self.r < 1:
            raise ConfigError(f"r must be at least 1, got {self.r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.l_max < 1:
            raise ConfigError(f"l_max must be at least 1, got {self.l_max}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_m_values(text: str) -> tuple[int, ...]:
    items = [tok.strip() for tok in text.split(",")]
    return tuple(int(tok, 10) for tok in items if tok)


def _parse_path(text: str) -> str | None:
    return text or None


_FIELD_PARSERS: dict[str, Callable[[str], object]] = {
    "p": _parse_int,
    "m_values": _parse_m_values,
    "r": _parse_int,
    "snr_db": float,
    "trials": _parse_int,
    "seed": _parse_int,
    "epsilon": float,
    "l_max": _parse_int,
    "alpha": float,
    "sigma_csv": _parse_path,
    "sigma0_csv": _parse_path,
    "output": str,
}

CONFIG_KEYS = tuple(_FIELD_PARSERS)
assert CONFIG_KEYS == tuple(f.name for f in fields(ExperimentConfig))


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` config file into a string mapping.

    Blank lines and lines starting with ``#`` are ignored. Keys must be
    ExperimentConfig field names, each at most once.
    """
    mapping: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in mapping:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping


def config_from_mapping(mapping: Mapping[str, str]) -> ExperimentConfig:
    """Build a validated ExperimentConfig from string key/value pairs."""
    unknown = sorted(set(mapping) - set(_FIELD_PARSERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [key for key in ("p", "m_values") if key not in mapping]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    kwargs = {}
    for key, value in mapping.items():
        try:
            kwargs[key] = _FIELD_PARSERS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one (m, trial) cell of the sweep."""

    m: int
    trial: int
    latent_kl_em: float
    latent_kl_prior_tree: float
    latent_kl_oracle_tree: float
    iterations_used: int
    stop_reason: StopReason


@dataclass(frozen=True)
class TrialFailure:
    m: int
    trial: int
    error: str


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    stderr: float


@dataclass(frozen=True)
class MAggregate:
    """Per-m means and standard errors over the successful trials."""

    m: int
    count: int
    latent_kl_em: ColumnStats
    latent_kl_prior_tree: ColumnStats
    latent_kl_oracle_tree: ColumnStats
    iterations_used: ColumnStats


@dataclass(frozen=True, eq=False)
class SweepResult:
    config: ExperimentConfig
    records: tuple[TrialRecord, ...]
    aggregates: tuple[MAggregate, ...]
    failures: tuple[TrialFailure, ...]


def _column_stats(values: list[float]) -> ColumnStats:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return ColumnStats(mean=mean, stderr=stderr)


def _load_cov_csv(path: str, expected_dim: int, label: str) -> CovMatrix:
    matrix = read_matrix_csv(path)
    if matrix.shape != (expected_dim, expected_dim):
        raise ConfigError(
            f"{label} from {path} has shape {matrix.shape}, expected "
            f"({expected_dim}, {expected_dim})"
        )
    return CovMatrix(matrix)


MixingFactory = Callable[[int, int, float, CovMatrix, int], LinearModel]
TraceHook = Callable[[int, int, EmTrace], None]


def run_sweep(
    config: ExperimentConfig,
    *,
    mixing_factory: MixingFactory | None = None,
    on_trace: TraceHook | None = None,
) -> SweepResult:
    """Run the full comparison sweep described by ``config``.

    For every m in ``m_values`` and every trial index, a fresh mixing matrix
    and a fresh observation set are drawn from seeds derived from
    ``config.seed``, the iteration runs from the corrupted prior, and the
    trial records the divergence of the learned tree from the truth next to
    the two baselines (tree fitted to the prior, oracle tree fitted to the
    truth). Per-trial numerical failures are recorded and excluded; the
    sweep only fails when every attempted trial failed.

    ``mixing_factory`` substitutes generate_mixing (a test hook, e.g. to
    force H = I); ``on_trace`` receives (m, trial, trace) for each
    successful trial in deterministic order. Results are deterministic
    functions of the config.
    """
    factory = mixing_factory if mixing_factory is not None else generate_mixing
    if config.sigma_csv is not None:
        sigma = _load_cov_csv(config.sigma_csv, config.p, "ground-truth covariance")
    else:
        sigma = generate_ground_truth(config.p, derive_seed(config.seed, "sigma"))
    if config.sigma0_csv is not None:
        sigma0 = _load_cov_csv(config.sigma0_csv, config.p, "prior covariance")
    else:
        sigma0 = generate_prior(sigma, config.alpha, derive_seed(config.seed, "prior"))

    truth = GaussianModel(sigma)
    prior_fit = chow_liu(sigma0)
    kl_prior_tree = kl_gaussian(truth, GaussianModel(prior_fit.cov))
    kl_oracle_tree = chow_liu(sigma).kl
    if kl_oracle_tree > kl_prior_tree + 1e-9:
        raise NumericalError(
            "oracle tree is worse than the prior tree; tree fit is broken"
        )

    em_config = EmConfig(sigma0=sigma0, epsilon=config.epsilon, l_max=config.l_max)
    records: list[TrialRecord] = []
    failures: list[TrialFailure] = []
    for m in config.m_values:
        for trial in range(config.trials):
            try:
                model = factory(
                    config.p, m, config.snr_db, sigma,
                    derive_seed(config.seed, "mixing", m, trial),
                )
                obs = sample_observations(
                    model, sigma, config.r,
                    derive_seed(config.seed, "observations", m, trial),
                )
                trace = run_em(em_config, model, obs, ground_truth=sigma)
            except (ValueError, NumericalError) as exc:
                failures.append(
                    TrialFailure(m=m, trial=trial, error=f"{type(exc).__name__}: {exc}")
                )
                continue
            if on_trace is not None:
                on_trace(m, trial, trace)
            records.append(
                TrialRecord(
                    m=m,
                    trial=trial,
                    latent_kl_em=trace.final.latent_kl,
                    latent_kl_prior_tree=kl_prior_tree,
                    latent_kl_oracle_tree=kl_oracle_tree,
                    iterations_used=len(trace.iterations),
                    stop_reason=trace.stop_reason,
                )
            )
    attempted = len(config.m_values) * config.trials
    if attempted > 0 and not records:
        raise NumericalError(
            f"all {attempted} trials failed; first failure: {failures[0].error}"
        )
    aggregates = []
    for m in config.m_values:
        group = [rec for rec in records if rec.m == m]
        if not group:
            continue
        aggregates.append(
            MAggregate(
                m=m,
                count=len(group),
                latent_kl_em=_column_stats([rec.latent_kl_em for rec in group]),
                latent_kl_prior_tree=_column_stats(
                    [rec.latent_kl_prior_tree for rec in group]
                ),
                latent_kl_oracle_tree=_column_stats(
                    [rec.latent_kl_oracle_tree for rec in group]
                ),
                iterations_used=_column_stats(
                    [float(rec.iterations_used) for rec in group]
                ),
            )
        )
    return SweepResult(
        config=config,
        records=tuple(records),
        aggregates=tuple(aggregates),
        failures=tuple(failures),
    )


def _fmt(value: float) -> str:
    return f"{value:.17g}"


CSV_HEADER = "m,trial,kl_em,kl_prior,kl_oracle,iterations,stop_reason"


def emit_results(result: SweepResult, path: str | Path) -> tuple[Path, Path]:
    """Write the result document at ``path`` and the per-trial CSV next to it.

    The CSV (same name, ``.csv`` suffix) has the header
    ``m,trial,kl_em,kl_prior,kl_oracle,iterations,stop_reason`` and one row
    per successful trial; numeric cells carry 17 significant digits so a
    re-parse reproduces them exactly. The document has a ``[meta]`` section
    (config echo, tool version, SNR definition, generation timestamp), the
    per-m aggregate table, and a ``[data]`` section referencing the CSV.
    Everything except the ``generated_at`` line is a deterministic function
    of the sweep result.
    """
    doc_path = Path(path)
    if doc_path.suffix == ".csv":
        raise ValueError("result document path must not end in .csv")
    csv_path = doc_path.with_suffix(".csv")

    csv_lines = [CSV_HEADER]
    for rec in result.records:
        csv_lines.append(
            f"{rec.m},{rec.trial},{_fmt(rec.latent_kl_em)},"
            f"{_fmt(rec.latent_kl_prior_tree)},{_fmt(rec.latent_kl_oracle_tree)},"
            f"{rec.iterations_used},{rec.stop_reason.value}"
        )

    config = result.config
    meta_pairs = [
        ("tool", f"treecov {__version__}"),
        ("generated_at", datetime.datetime.now(datetime.timezone.utc).isoformat()),
        ("snr_definition", SNR_DEFINITION),
        ("rng", "numpy PCG64 (numpy.random.default_rng)"),
    ]
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if f.name == "m_values":
            text = ",".join(str(m) for m in value)
        elif value is None:
            text = ""
        elif isinstance(value, float):
            text = _fmt(value)
        else:
            text = str(value)
        meta_pairs.append((f.name, text))
    meta_pairs.append(("trials_ok", str(len(result.records))))
    meta_pairs.append(("trials_failed", str(len(result.failures))))

    doc_lines = ["[meta]"]
    doc_lines.extend(f"{key} = {text}" for key, text in meta_pairs)
    doc_lines.append("")
    doc_lines.append("[aggregates]")
    doc_lines.append(
        "m,count,mean_kl_em,se_kl_em,mean_kl_prior,se_kl_prior,"
        "mean_kl_oracle,se_kl_oracle,mean_iterations,se_iterations"
    )
    for agg in result.aggregates:
        doc_lines.append(
            f"{agg.m},{agg.count},"
            f"{_fmt(agg.latent_kl_em.mean)},{_fmt(agg.latent_kl_em.stderr)},"
            f"{_fmt(agg.latent_kl_prior_tree.mean)},{_fmt(agg.latent_kl_prior_tree.stderr)},"
            f"{_fmt(agg.latent_kl_oracle_tree.mean)},{_fmt(agg.latent_kl_oracle_tree.stderr)},"
            f"{_fmt(agg.iterations_used.mean)},{_fmt(agg.iterations_used.stderr)}"
        )
    if result.failures:
        doc_lines.append("")
        doc_lines.append("[failures]")
        doc_lines.append("m,trial,error")
        for failure in result.failures:
            doc_lines.append(f"{failure.m},{failure.trial},{failure.error}")
    doc_lines.append("")
    doc_lines.append("[data]")
    doc_lines.append(f"csv = {csv_path.name}")

    try:
        csv_path.write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
        doc_path.write_text("\n".join(doc_lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write results near {doc_path}: {exc}") from exc
    return doc_path, csv_path
