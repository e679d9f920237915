"""Command-line interface.

Subcommands: ``sweep`` runs the full synthetic comparison experiment from a
config file (every config key has an override flag of the same name),
``chowliu`` fits a single tree approximation to a covariance CSV, and ``em``
runs the iterative fit on prepared CSV inputs.

Exit codes: 0 success, 1 configuration error, 2 numerical failure (every
trial failed), 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .em import EmConfig, run_em
from .experiment import (
    CONFIG_KEYS,
    ConfigError,
    config_from_mapping,
    emit_results,
    parse_config_file,
    run_sweep,
)
from .gaussian import CovMatrix, NumericalError
from .linear import LinearModel, ObservationSet, read_matrix_csv, write_matrix_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors, which collides with the
    # numerical-failure code; route them through ConfigError instead.
    def error(self, message: str):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treecov", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run the comparison experiment")
    sweep.add_argument("--config", help="flat key = value config file")
    for key in CONFIG_KEYS:
        sweep.add_argument(f"--{key}", help=f"override config key {key}")
    sweep.set_defaults(func=_cmd_sweep)

    chowliu = sub.add_parser("chowliu", help="fit one tree approximation")
    chowliu.add_argument("input", help="covariance matrix CSV")
    chowliu.add_argument("--cov_out", help="write the tree covariance CSV here")
    chowliu.add_argument("--edges_out", help="write the tree edges (u,v lines) here")
    chowliu.set_defaults(func=_cmd_chowliu)

    em = sub.add_parser("em", help="run the iterative fit on CSV inputs")
    em.add_argument("--sigma0", required=True, help="prior covariance CSV")
    em.add_argument("--h", required=True, help="mixing matrix CSV")
    em.add_argument("--d", required=True, help="noise covariance CSV")
    em.add_argument("--obs", required=True, help="observations CSV, one sample per row")
    em.add_argument("--epsilon", type=float, default=0.01, help="stopping threshold")
    em.add_argument("--l_max", type=int, default=20, help="iteration cap")
    em.add_argument("--sigma_out", help="write the final tree covariance CSV here")
    em.add_argument("--trace_out", help="write the per-iteration trace CSV here")
    em.set_defaults(func=_cmd_em)
    return parser


def _cmd_sweep(args: argparse.Namespace) -> int:
    mapping = parse_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        value = getattr(args, key)
        if value is not None:
            mapping[key] = value
    config = config_from_mapping(mapping)
    result = run_sweep(config)
    doc_path, csv_path = emit_results(result, Path(config.output))
    for agg in result.aggregates:
        print(
            f"m={agg.m}: mean kl_em={agg.latent_kl_em.mean:.6g} "
            f"vs kl_prior={agg.latent_kl_prior_tree.mean:.6g} "
            f"(oracle {agg.latent_kl_oracle_tree.mean:.6g}, "
            f"{agg.iterations_used.mean:.3g} iterations, n={agg.count})"
        )
    if result.failures:
        print(f"{len(result.failures)} trial(s) failed and were excluded")
    print(f"wrote {doc_path} and {csv_path}")
    return EXIT_OK


def _cmd_chowliu(args: argparse.Namespace) -> int:
    from .tree import chow_liu

    sigma = CovMatrix(read_matrix_csv(args.input))
    result = chow_liu(sigma)
    print(f"kl = {result.kl:.12g}")
    print("edges = " + " ".join(f"{u}-{v}" for u, v in result.tree.edges))
    if args.cov_out:
        write_matrix_csv(result.cov.entries, args.cov_out)
        print(f"wrote {args.cov_out}")
    if args.edges_out:
        lines = [f"{u},{v}" for u, v in result.tree.edges]
        Path(args.edges_out).write_text("\n".join(lines) + "\n", encoding="ascii")
        print(f"wrote {args.edges_out}")
    return EXIT_OK


def _cmd_em(args: argparse.Namespace) -> int:
    sigma0 = CovMatrix(read_matrix_csv(args.sigma0))
    model = LinearModel(read_matrix_csv(args.h), CovMatrix(read_matrix_csv(args.d)))
    obs = ObservationSet(read_matrix_csv(args.obs))
    config = EmConfig(sigma0=sigma0, epsilon=args.epsilon, l_max=args.l_max)
    trace = run_em(config, model, obs)
    final = trace.final
    print(
        f"stopped after {len(trace.iterations)} iteration(s): "
        f"{trace.stop_reason.value}, final obs_kl = {final.obs_kl:.12g}"
    )
    if args.sigma_out:
        write_matrix_csv(final.sigma_tree.entries, args.sigma_out)
        print(f"wrote {args.sigma_out}")
    if args.trace_out:
        lines = ["iteration,obs_kl,step_kl"]
        lines.extend(
            f"{rec.index},{rec.obs_kl:.17g},{rec.step_kl:.17g}"
            for rec in trace.iterations
        )
        Path(args.trace_out).write_text("\n".join(lines) + "\n", encoding="ascii")
        print(f"wrote {args.trace_out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
