"""Command-line front-end.

Four subcommands: ``analyze`` (traffic solution, topology, exact moments),
``cdf`` (certified CDF bounds), ``simulate`` (tagged-customer sample dump),
and ``compare`` (joined analytic / bounds / simulation table).  Data goes to
files in ``--out-dir`` (or stdout for ``analyze``); diagnostics go to
stderr.  Every run writes a ``manifest.json`` capturing the inputs needed to
reproduce it.  Node numbers on the command line and in network files are
1-based; the Python API is 0-based.

Exit codes: 0 success, 1 unexpected error, 2 usage, 3 invalid network,
4 unstable network, 5 operation not applicable to this topology,
6 numerical/resource failure, 7 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import sojourn_analysis
from .backends import backend_name
from .errors import (
    InvalidNetwork,
    JacknetError,
    NotApplicable,
    NotOvertakeFree,
    NumericalFailure,
    UnstableNetwork,
)
from .moments import (
    feedback_covariance,
    feedback_variance,
    first_moments,
    second_moments_overtake_free,
    tandem_variance,
    three_node_positive_correlation,
)
from .network import (
    classify_topology,
    is_feedback_queue,
    is_tandem,
    is_three_node_acyclic,
    load_network,
    path_sojourn_cdf_independent,
    solve_traffic_equations,
)
from .simulate import SimConfig, simulate
from .stats import empirical_cdf, empirical_moments

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INVALID_NETWORK = 3
EXIT_UNSTABLE = 4
EXIT_NOT_APPLICABLE = 5
EXIT_NUMERICAL = 6
EXIT_IO = 7


def _parse_path(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        nodes = tuple(int(x) - 1 for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"path must be comma-separated node numbers, got {text!r}")
    return nodes


def _parse_grid(text: str, default_stop: float) -> np.ndarray:
    """Grid spec 'start:stop:count', linear and inclusive."""
    if text == "auto":
        return np.linspace(0.0, default_stop, 101)
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be start:stop:count, got {text!r}")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 2 or stop <= start:
        raise ValueError(f"bad grid {text!r}")
    return np.linspace(start, stop, count)


def _write_manifest(out_dir: Path, command: str, network_file, parameters: dict, outputs: list[str]):
    manifest = {
        "command": command,
        "network_file": str(network_file),
        "parameters": parameters,
        "tool_version": __version__,
        "backend": backend_name(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": outputs,
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def _write_json(path: Path, obj: dict):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def _load(args):
    return load_network(args.network)


def _check_nodes(spec, entry: int | None, path) -> None:
    if entry is not None and not 0 <= entry < spec.J:
        raise ValueError(f"entry node {entry + 1} out of range 1..{spec.J}")
    if path is not None:
        for p in path:
            if not 0 <= p < spec.J:
                raise ValueError(f"path node {p + 1} out of range 1..{spec.J}")


def cmd_analyze(args) -> int:
    spec = _load(args)
    traffic = solve_traffic_equations(spec)
    topo = classify_topology(spec)
    out = []
    out.append(f"nodes: {spec.J}")
    out.append(f"stable: {traffic.stable}")
    out.append("node  arrival  service  theta     rho")
    for j in range(spec.J):
        out.append(
            f"{j + 1:>4}  {spec.v[j]:<8.6g} {spec.mu[j]:<8.6g} {traffic.theta[j]:<9.6g} {traffic.rho[j]:.6g}"
        )
    kind = "acyclic" if topo.acyclic else "feedback"
    if topo.overtake_free_moment_condition:
        kind += ", overtake-free"
    out.append(f"topology: {kind}")
    report: dict = {
        "nodes": spec.J,
        "theta": traffic.theta.tolist(),
        "rho": traffic.rho.tolist(),
        "stable": traffic.stable,
        "topology": {
            "acyclic": topo.acyclic,
            "has_feedback": topo.has_feedback,
            "overtake_free": topo.overtake_free_moment_condition,
        },
    }
    if not traffic.stable:
        out.append("moments: suppressed (unstable network)")
    else:
        em1 = first_moments(spec, traffic)
        out.append("E[T] by entry node: " + "  ".join(f"{x:.10g}" for x in em1.values))
        report["mean_sojourn"] = em1.values.tolist()
        try:
            em2 = second_moments_overtake_free(spec, traffic, em1)
            var = em2.values - em1.values**2
            out.append("VAR[T] by entry node: " + "  ".join(f"{x:.10g}" for x in var))
            report["second_moment"] = em2.values.tolist()
            report["variance"] = var.tolist()
        except NotOvertakeFree as exc:
            out.append(f"VAR[T]: refused ({exc})")
            report["variance_refused"] = str(exc)
        if is_tandem(spec):
            var0 = tandem_variance(spec, traffic, 0)
            out.append(f"series closed-form VAR[T_1]: {var0:.10g}")
            report["tandem_variance_entry"] = var0
        if is_feedback_queue(spec):
            v, mu, p = float(spec.v[0]), float(spec.mu[0]), float(spec.P[0, 0])
            fv = feedback_variance(v, mu, p)
            fc = feedback_covariance(v, mu, p)
            out.append(f"feedback closed-form VAR[T]: {fv:.10g}  COV[N,T]: {fc:.10g}")
            report["feedback_variance"] = fv
            report["feedback_covariance"] = fc
        if is_three_node_acyclic(spec):
            res = three_node_positive_correlation(
                float(spec.v[0]), *[float(m) for m in spec.mu], float(spec.P[0, 1])
            )
            out.append(
                f"entry/exit correlation verdict: {res.verdict.value} "
                f"(admissible p interval ({res.p_lower:.6g}, {res.p_upper:.6g}))"
            )
            report["correlation_verdict"] = res.verdict.value
            report["correlation_p_interval"] = [res.p_lower, res.p_upper]
    print("\n".join(out))
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report["command"] = "analyze"
        _write_json(out_dir / "analyze.json", report)
        _write_manifest(out_dir, "analyze", args.network, {}, ["analyze.json"])
    return EXIT_OK


def _summary_common(report, args) -> dict:
    return {
        "alpha": report.alpha,
        "k": report.k,
        "epsilon": report.epsilon,
        "cap": report.cap,
        "entry": report.entry + 1,
        "path": [p + 1 for p in report.path] if report.path is not None else None,
        "n_states": report.n_states,
        "deficits": report.deficits,
        "captured_mass": report.mixture.captured,
        "moment_lower_bounds": {str(m): val for m, val in report.moment_bounds.items()},
    }


def cmd_cdf(args) -> int:
    spec = _load(args)
    traffic = solve_traffic_equations(spec)
    entry = args.entry - 1
    path = _parse_path(args.path)
    _check_nodes(spec, entry, path)
    mean = first_moments(spec, traffic).values[entry] if traffic.stable else 1.0
    grid = _parse_grid(args.grid, 5.0 * mean)
    report = sojourn_analysis(
        spec, entry, args.epsilon, cap=args.cap, grid=grid, path=path
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    f_ind = None
    if args.compare_independent and path is not None and classify_topology(spec).acyclic:
        f_ind = path_sojourn_cdf_independent(spec, traffic, list(path), grid)
    with open(out_dir / "bounds.csv", "w", newline="") as f:
        w = csv.writer(f)
        header = ["t", "lower", "upper"] + (["f_independent"] if f_ind is not None else [])
        w.writerow(header)
        for i, t in enumerate(report.bounds.grid):
            row = [f"{t:.12g}", f"{report.bounds.lower[i]:.12g}", f"{report.bounds.upper[i]:.12g}"]
            if f_ind is not None:
                row.append(f"{f_ind[i]:.12g}")
            w.writerow(row)
    summary = {"command": "cdf", **_summary_common(report, args)}
    _write_json(out_dir / "summary.json", summary)
    params = {
        "entry": args.entry,
        "path": args.path,
        "epsilon": args.epsilon,
        "cap": report.cap,
        "grid": args.grid,
        "compare_independent": bool(args.compare_independent),
    }
    _write_manifest(out_dir, "cdf", args.network, params, ["bounds.csv", "summary.json"])
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load(args)
    path = _parse_path(args.path)
    _check_nodes(spec, None, path)
    config = SimConfig(
        seed=args.seed,
        tagged_customers=args.tags,
        warmup_customers=args.warmup,
        path_filter=path,
        max_events=args.max_events,
    )
    result = simulate(spec, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "samples.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["path", "sojourns", "total"])
        for i in range(result.n_samples):
            lo, hi = result.offsets[i], result.offsets[i + 1]
            nodes = ";".join(str(int(n) + 1) for n in result.path_nodes[lo:hi])
            sojourns = ";".join(f"{x:.12g}" for x in result.sojourns[lo:hi])
            w.writerow([nodes, sojourns, f"{result.totals[i]:.12g}"])
    summary = {
        "command": "simulate",
        "n_samples": result.n_samples,
        "n_tagged": result.n_tagged,
        "n_events": result.n_events,
        "elapsed_model_time": result.elapsed,
        "mean_population": result.mean_population,
        "throughput": result.throughput.tolist(),
    }
    if result.n_samples >= 2:
        est = empirical_moments(result)
        summary["mean"] = est.mean
        summary["mean_se"] = est.mean_se
        summary["variance"] = est.variance
        summary["variance_se"] = est.variance_se
    _write_json(out_dir / "summary.json", summary)
    params = {
        "tags": args.tags,
        "seed": args.seed,
        "warmup": args.warmup,
        "path": args.path,
        "max_events": args.max_events,
    }
    _write_manifest(out_dir, "simulate", args.network, params, ["samples.csv", "summary.json"])
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = _load(args)
    traffic = solve_traffic_equations(spec)
    if not traffic.stable:
        raise UnstableNetwork("compare requires a stable network")
    entry = args.entry - 1
    path = _parse_path(args.path)
    _check_nodes(spec, entry, path)
    em1 = first_moments(spec, traffic)
    mean = em1.values[entry]
    grid = _parse_grid(args.grid, 5.0 * mean)
    report = sojourn_analysis(spec, entry, args.epsilon, cap=args.cap, grid=grid, path=path)

    config = SimConfig(
        seed=args.seed,
        tagged_customers=args.tags,
        warmup_customers=args.warmup,
        path_filter=path,
        max_events=args.max_events,
    )
    result = simulate(spec, config)
    if path is None:
        # keep only walks entering at the marked entry node
        keep = [
            i
            for i in range(result.n_samples)
            if result.path_nodes[result.offsets[i]] == entry
        ]
        totals = result.totals[keep]
    else:
        totals = result.totals
    emp, dkw = empirical_cdf(totals, grid)

    acyclic = classify_topology(spec).acyclic
    f_ind = None
    if path is not None and acyclic:
        f_ind = path_sojourn_cdf_independent(spec, traffic, list(path), grid)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lower, upper = report.bounds.lower, report.bounds.upper
    flags = []
    with open(out_dir / "compare.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "lower", "upper", "f_independent", "empirical", "dkw_halfwidth", "f_outside_bounds"])
        for i, t in enumerate(grid):
            fi = f_ind[i] if f_ind is not None else None
            flag = int(fi is not None and not (lower[i] - 1e-12 <= fi <= upper[i] + 1e-12))
            flags.append(flag)
            w.writerow(
                [
                    f"{t:.12g}",
                    f"{lower[i]:.12g}",
                    f"{upper[i]:.12g}",
                    "" if fi is None else f"{fi:.12g}",
                    f"{emp[i]:.12g}",
                    f"{dkw:.12g}",
                    flag,
                ]
            )

    # moments table: exact where the topology permits, certified lower
    # bounds always, simulation always.  With a fixed path every column is
    # path-conditional: the mean is the sum of the per-node exponential
    # means, and the second moment is exact only when the per-node sojourns
    # are independent (overtake-free network).
    est1 = empirical_moments(totals, 1)
    est2 = empirical_moments(totals, 2)
    exact2: float | None = None
    if path is not None:
        rates = spec.mu[list(path)] - traffic.theta[list(path)]
        exact1: float | None = float(np.sum(1.0 / rates))
        if classify_topology(spec).overtake_free_moment_condition:
            exact2 = float(np.sum(1.0 / rates**2) + exact1**2)
    else:
        exact1 = float(em1.values[entry])
        if classify_topology(spec).overtake_free_moment_condition:
            exact2 = float(second_moments_overtake_free(spec, traffic, em1).values[entry])
        elif is_feedback_queue(spec):
            v, mu, p = float(spec.v[0]), float(spec.mu[0]), float(spec.P[0, 0])
            exact2 = feedback_variance(v, mu, p) + exact1**2
    rows = [
        (1, exact1, report.moment_bounds.get(1), est1.mean, est1.mean_se),
        (2, exact2, report.moment_bounds.get(2), est2.mean, est2.mean_se),
    ]
    with open(out_dir / "moments.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["order", "exact", "lower_bound", "simulated", "simulated_se"])
        for order, exact, lb, sim_val, sim_se in rows:
            w.writerow(
                [
                    order,
                    "" if exact is None else f"{exact:.12g}",
                    "" if lb is None else f"{lb:.12g}",
                    f"{sim_val:.12g}",
                    f"{sim_se:.12g}",
                ]
            )

    summary = {
        "command": "compare",
        **_summary_common(report, args),
        "n_samples": len(totals),
        "dkw_halfwidth": dkw,
        "independence_approx_included": f_ind is not None,
        "f_outside_bounds_count": int(sum(flags)),
        "empirical_within_bounds_band": bool(
            np.all(emp >= lower - dkw) and np.all(emp <= upper + dkw)
        ),
    }
    _write_json(out_dir / "summary.json", summary)
    params = {
        "entry": args.entry,
        "path": args.path,
        "epsilon": args.epsilon,
        "cap": report.cap,
        "grid": args.grid,
        "tags": args.tags,
        "seed": args.seed,
        "warmup": args.warmup,
    }
    _write_manifest(
        out_dir, "compare", args.network, params, ["compare.csv", "moments.csv", "summary.json"]
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jacknet",
        description="Sojourn-time analysis for open Jackson queueing networks",
    )
    parser.add_argument("--version", action="version", version=f"jacknet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--network", required=True, help="network JSON file")
        p.add_argument("--out-dir", default=None, help="directory for output files")

    p = sub.add_parser("analyze", help="traffic solution, topology, exact moments")
    add_common(p)
    p.set_defaults(func=cmd_analyze)

    def add_cdf_opts(p):
        p.add_argument("--entry", type=int, required=True, help="entry node (1-based)")
        p.add_argument("--path", default=None, help="fixed path, e.g. 1,2,3 (1-based)")
        p.add_argument("--epsilon", type=float, default=1e-4, help="stopping tolerance")
        p.add_argument("--cap", type=int, default=None, help="queue-length truncation cap")
        p.add_argument("--grid", default="auto", help="time grid start:stop:count")

    p = sub.add_parser("cdf", help="certified sojourn-time CDF bounds")
    add_common(p)
    add_cdf_opts(p)
    p.add_argument(
        "--compare-independent",
        action="store_true",
        help="add the per-node independence approximation column",
    )
    p.set_defaults(func=cmd_cdf, out_dir_required=True)

    def add_sim_opts(p):
        p.add_argument("--tags", type=int, default=10000, help="tagged customers")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--warmup", type=int, default=None, help="warm-up arrivals to skip")
        p.add_argument("--max-events", type=int, default=500_000_000, help="event safety cap")

    p = sub.add_parser("simulate", help="tagged-customer discrete-event simulation")
    add_common(p)
    p.add_argument("--path", default=None, help="keep only samples matching this path")
    add_sim_opts(p)
    p.set_defaults(func=cmd_simulate, out_dir_required=True)

    p = sub.add_parser("compare", help="joined analytic / bounds / simulation table")
    add_common(p)
    add_cdf_opts(p)
    add_sim_opts(p)
    p.add_argument("--compare-independent", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_compare, out_dir_required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out_dir_required", False) and not args.out_dir:
        args.out_dir = "."
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON in network file: {exc}", file=sys.stderr)
        return EXIT_IO
    except UnstableNetwork as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except NotApplicable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_APPLICABLE
    except InvalidNetwork as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_NETWORK
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except JacknetError as exc:  # pragma: no cover - catch-all for new subclasses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
