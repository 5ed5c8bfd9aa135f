"""Command line interface.

Three verbs:

  run       simulate the configured policies and write per-policy regret and
            play-count CSVs plus diagnostics.json and manifest.json.
  analyze   partition and bound diagnostics for an instance file, no
            simulation.
  plotdata  merge run outputs into plot-ready long-format CSVs and render
            the figures next to them.

Exit codes: 0 success, 2 invalid configuration or inputs (messages reference
the offending file line where possible), 3 a simulation invariant was
breached (a diagnostic dump is printed).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import OPTIMAL, bound_report, partition_arms
from .config import (
    ConfigError,
    ExperimentConfig,
    instance_to_dict,
    load_config,
    load_instance_file,
)
from .model import (
    Bernoulli,
    ProblemInstance,
    check_decay_assumption,
    default_concentration,
)
from .simulator import POLICIES, BatchResult, GeneratorSpec, InvariantViolation, run_batch

__all__ = ["main"]

REGRET_COLUMNS = ["capital", "mean_regret", "std_regret", "mean_rtilde", "mean_Rtilde", "replications"]
PLAYS_COLUMNS = ["arm", "fidelity", "mean_count", "partition_label"]
LONG_REGRET_COLUMNS = ["capital", "policy", "mean", "std"]
HISTOGRAM_COLUMNS = ["arm_rank_by_muM", "fidelity", "mean_count", "policy"]


def _fmt(x) -> str:
    """Full round-trip float formatting for CSV cells."""
    return repr(float(x))


def _jsonable(obj):
    """Recursively convert report values into strict-JSON-safe types."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _label_str(label) -> str:
    return "optimal" if label == OPTIMAL else f"K({label})"


def _diagnostics_payload(instance: ProblemInstance, rho: float, source: str) -> dict:
    model = default_concentration(instance.family)
    part = partition_arms(instance, model)
    bounds = bound_report(instance, model, rho)
    decay = check_decay_assumption(instance.ladder, model)
    family = (
        {"family": "bernoulli"}
        if isinstance(instance.family, Bernoulli)
        else {"family": "gaussian", "sigma": instance.family.sigma}
    )
    payload = {
        "instance": {
            "source": source,
            "K": instance.K,
            "M": instance.M,
            "zetas": list(instance.ladder.zetas),
            "costs": list(instance.ladder.costs),
            **family,
            "mu_star": instance.mu_star,
            "optimal_arms": list(instance.optimal_arms),
            "mu_top": instance.mu_top.tolist(),
        },
        "gammas": list(part.gammas),
        "partition": {
            "labels": [_label_str(l) for l in part.labels],
            "sets": {k: list(v) for k, v in part.sets.items()},
            "subsplit_one": {str(m): list(v) for m, v in part.subsplit_one.items()},
            "subsplit_two": {str(m): list(v) for m, v in part.subsplit_two.items()},
            "candidate_sets": {
                f"m={m},k={k}": list(v) for (m, k), v in part.candidate_sets.items()
            },
        },
        "upper_bound": {
            "coefficient": bounds.upper.coefficient,
            "rho": bounds.upper.rho,
            "kappa_rho": bounds.upper.kappa_rho,
            "per_arm": [
                {"arm": c.arm, "label": c.label, "contribution": c.contribution}
                for c in bounds.upper.per_arm
            ],
        },
        "lower_bound": {
            "raw_sum": bounds.lower.raw_sum,
            "scaled_sum": bounds.lower.scaled_sum,
            "c_prime": list(bounds.lower.c_prime),
            "c": list(bounds.lower.c),
            "c_min": bounds.lower.c_min,
            "per_fidelity": list(bounds.lower.per_fidelity),
            "hypothesis_flags": list(bounds.lower.hypothesis_flags),
        },
        "upper_to_lower_raw_ratio": bounds.upper_to_lower_raw_ratio,
        "decay_assumption": {
            "ok": decay.ok,
            "checks": [
                {"m": c.m, "partial_sum": c.partial_sum, "bound": c.bound, "ok": c.ok}
                for c in decay.checks
            ],
        },
    }
    return _jsonable(payload)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_regret_csv(path: Path, agg) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REGRET_COLUMNS)
        for j in range(agg.checkpoints.shape[0]):
            w.writerow(
                [
                    _fmt(agg.checkpoints[j]),
                    _fmt(agg.mean_regret[j]),
                    _fmt(agg.std_regret[j]),
                    _fmt(agg.mean_rtilde[j]),
                    _fmt(agg.mean_Rtilde[j]),
                    agg.replications,
                ]
            )


def _write_plays_csv(path: Path, agg, partition) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(PLAYS_COLUMNS)
        K, M = agg.mean_counts.shape
        for k in range(1, K + 1):
            label = _label_str(partition.labels[k - 1])
            for m in range(1, M + 1):
                w.writerow([k, m, _fmt(agg.mean_counts[k - 1, m - 1]), label])


def _cmd_run(args) -> int:
    parallelism = args.parallelism
    if parallelism is not None and parallelism != "auto":
        try:
            parallelism = int(parallelism)
        except ValueError:
            raise ConfigError(
                [f'argument --parallelism: must be "auto" or an integer, got {parallelism!r}']
            ) from None
    cfg = load_config(
        args.config,
        {
            "preset": args.preset,
            "capital": args.capital,
            "replications": args.replications,
            "seed": args.seed,
            "rho": args.rho,
            "parallelism": parallelism,
            "out": args.out,
        },
    )
    model = default_concentration(cfg.problem.family)
    decay = check_decay_assumption(cfg.problem.ladder, model)
    if not decay.ok:
        print(
            "warning: the bias-decay condition fails on this ladder; the "
            "policy is unaffected but the usual play-cap reasoning weakens",
            file=sys.stderr,
        )
    batch = run_batch(
        cfg.problem,
        cfg.capital,
        policies=cfg.policies,
        rho=cfg.rho,
        checkpoints=cfg.checkpoints,
        replications=cfg.replications,
        base_seed=cfg.base_seed,
        parallelism=cfg.parallelism,
    )
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_outputs(out, cfg, batch)
    for pol in cfg.policies:
        agg = batch.per_policy[pol]
        print(
            f"{pol}: mean regret at capital {cfg.capital:g} = "
            f"{agg.mean_regret[-1]:.6g} (std {agg.std_regret[-1]:.6g}, "
            f"{cfg.replications} replications)"
        )
    print(f"outputs written to {out}")
    return 0


def _write_outputs(out: Path, cfg: ExperimentConfig, batch: BatchResult) -> None:
    instance = batch.instance_ref
    source = (
        "replication 0 of the generator (instances are redrawn per replication)"
        if isinstance(cfg.problem, GeneratorSpec)
        else "fixed instance (shared by all replications)"
    )
    partition = partition_arms(instance, default_concentration(instance.family))
    for pol in cfg.policies:
        agg = batch.per_policy[pol]
        _write_regret_csv(out / f"regret_{pol}.csv", agg)
        _write_plays_csv(out / f"plays_{pol}.csv", agg, partition)
    _write_json(out / "diagnostics.json", _diagnostics_payload(instance, cfg.rho, source))
    manifest = {
        "config": cfg.echo(),
        "parallelism_resolved": cfg.parallelism,
        "seed_scheme": (
            "SeedSequence([base_seed, replication, stream]); stream 0 draws "
            "the replication's instance, stream 1 + p drives policy p's "
            "rewards in the order mfucb, ucb"
        ),
        "environment": {
            "mfbandit": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": __import__("numba").__version__,
        },
    }
    _write_json(out / "manifest.json", _jsonable(manifest))


def _cmd_analyze(args) -> int:
    instance = load_instance_file(args.instance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = _diagnostics_payload(instance, args.rho, f"analyze input {args.instance}")
    _write_json(out / "diagnostics.json", payload)
    sets = payload["partition"]["sets"]
    sizes = ", ".join(f"{k}: {len(v)}" for k, v in sets.items())
    print(f"K = {payload['instance']['K']}, M = {payload['instance']['M']}; {sizes}")
    print(f"upper-bound coefficient = {payload['upper_bound']['coefficient']}")
    print(f"lower-bound raw sum = {payload['lower_bound']['raw_sum']}")
    print(f"diagnostics written to {out / 'diagnostics.json'}")
    return 0


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _cmd_plotdata(args) -> int:
    out = Path(args.out)
    present = [pol for pol in POLICIES if (out / f"regret_{pol}.csv").exists()]
    if not present:
        raise ConfigError(
            [f"{out}: no regret_<policy>.csv files found; run `mfbandit run --out {out}` first"]
        )
    diag_path = out / "diagnostics.json"
    if not diag_path.exists():
        raise ConfigError([f"{diag_path}: missing (needed for the arm ordering)"])
    diagnostics = json.loads(diag_path.read_text())
    mu_top = np.asarray(diagnostics["instance"]["mu_top"], dtype=np.float64)

    long_rows = []
    with open(out / "regret_long.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LONG_REGRET_COLUMNS)
        for pol in present:
            for row in _read_csv(out / f"regret_{pol}.csv"):
                w.writerow([row["capital"], pol, row["mean_regret"], row["std_regret"]])
                long_rows.append(
                    {
                        "capital": float(row["capital"]),
                        "policy": pol,
                        "mean": float(row["mean_regret"]),
                        "std": float(row["std_regret"]),
                    }
                )

    order = np.argsort(mu_top, kind="stable")
    hist_rows = []
    M = 0
    with open(out / "plays_histogram.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HISTOGRAM_COLUMNS)
        for pol in present:
            plays_path = out / f"plays_{pol}.csv"
            if not plays_path.exists():
                raise ConfigError([f"{plays_path}: missing play counts for {pol}"])
            by_cell = {}
            for row in _read_csv(plays_path):
                by_cell[(int(row["arm"]), int(row["fidelity"]))] = row["mean_count"]
                M = max(M, int(row["fidelity"]))
            if len(by_cell) != mu_top.shape[0] * M:
                raise ConfigError(
                    [f"{plays_path}: expected {mu_top.shape[0] * M} rows, got {len(by_cell)}"]
                )
            for rank, pos in enumerate(order, 1):
                for m in range(1, M + 1):
                    cell = by_cell[(int(pos) + 1, m)]
                    w.writerow([rank, m, cell, pol])
                    hist_rows.append(
                        {
                            "arm_rank_by_muM": rank,
                            "fidelity": m,
                            "mean_count": float(cell),
                            "policy": pol,
                        }
                    )
    written = [out / "regret_long.csv", out / "plays_histogram.csv"]
    if not args.no_figures:
        from .plotting import render_play_histograms, render_regret_curves

        render_regret_curves(long_rows, out / "regret_curves.png")
        render_play_histograms(hist_rows, M, out / "play_histograms.png")
        written += [out / "regret_curves.png", out / "play_histograms.png"]
    for path in written:
        print(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfbandit",
        description="Simulate cost-aware bandit policies over multi-fidelity arms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate and write regret/plays CSVs")
    run_p.add_argument("--config", help="JSON config file (or a manifest.json)")
    run_p.add_argument("--preset", help="named problem (paper-1 .. paper-4)")
    run_p.add_argument("--capital", type=float, help="episode budget")
    run_p.add_argument("--replications", type=int, help="independent episodes per policy")
    run_p.add_argument("--seed", type=int, help="base seed (64-bit)")
    run_p.add_argument("--rho", type=float, help="exploration parameter (default 2)")
    run_p.add_argument("--parallelism", help='worker threads, an integer or "auto"')
    run_p.add_argument("--out", help="output directory (default out)")

    analyze_p = sub.add_parser("analyze", help="instance diagnostics, no simulation")
    analyze_p.add_argument("instance", help="instance JSON file")
    analyze_p.add_argument("--rho", type=float, default=2.0)
    analyze_p.add_argument("--out", default=".", help="directory for diagnostics.json")

    plot_p = sub.add_parser("plotdata", help="merge run outputs into plot-ready CSVs")
    plot_p.add_argument("--out", default="out", help="directory holding run outputs")
    plot_p.add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering"
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_plotdata(args)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"error: {msg}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        print(json.dumps(_jsonable(exc.details), indent=2, sort_keys=True), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
