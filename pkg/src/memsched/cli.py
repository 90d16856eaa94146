"""Command-line entry point: simulate | region | convert-weights | verify | config."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfgmod
from .capacity import (
    RegionModel,
    MixtureWeights,
    WeightKind,
    alpha_to_beta,
    beta_to_alpha,
    blind_point,
    boundary_sweep,
    c_of_M,
    memory_gain,
    planar_directions,
)
from .policies import ActivationVector, BeliefFloorViolation, all_activation_vectors
from .simulator import run
from .verify import SuiteOptions, run_suite

CSV_HEADER = "# memsched-csv v1"
EXIT_VALIDATION = 2
EXIT_ASSERTION = 3


def replication_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _overrides(args) -> dict:
    run_over = {}
    for key in ("seed", "horizon", "replications"):
        val = getattr(args, key, None)
        if val is not None:
            run_over[key] = val
    return {"run": run_over} if run_over else {}


def _one_replication(job):
    exp, index, seed, horizon, trace = job
    metrics = run(exp.sim_config(seed=seed, horizon=horizon, trace=trace))
    return index, seed, metrics


def cmd_simulate(args) -> int:
    exp = cfgmod.load(args.config, _overrides(args))
    r = exp.run
    seed, reps = int(r["seed"]), int(r["replications"])
    jobs = [(exp, i, replication_seed(seed, i), int(r["horizon"]), args.trace) for i in range(reps)]
    if args.workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_one_replication, jobs))
    else:
        results = [_one_replication(j) for j in jobs]
    results.sort(key=lambda item: item[0])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = exp.n
    summaries = []
    series_rows = []
    trace_rows = []
    for index, rep_seed, m in results:
        s = m.summary()
        s["replication"] = index
        s["seed"] = rep_seed
        summaries.append(s)
        for row in m.series:
            series_rows.append((index, *row))
        for rec in m.trace:
            trace_rows.append((index, rec["slot"], rec["served"], rec["packet_kind"], rec["state"], rec["feedback"], *rec["omega"]))
    thr = np.array([s["throughput"] for s in summaries])
    summary = {
        "config": exp.raw,
        "replications": summaries,
        "mean_throughput": thr.mean(axis=0).tolist(),
        "mean_sum_throughput": float(thr.sum(axis=1).mean()),
        "belief_floor_violations": int(sum(s["belief_floor_violations"] for s in summaries)),
        "any_overflow": any(s["overflowed"] for s in summaries),
    }
    _dump_json(out / "summary.json", summary)
    _write_csv(
        out / "series.csv",
        ["replication", "slot", "total_backlog", "running_mean_backlog", *[f"delivered_{i}" for i in range(n)]],
        series_rows,
    )
    if args.trace:
        _write_csv(
            out / "trace.csv",
            ["replication", "slot", "served", "packet_kind", "state", "feedback", *[f"omega_{i}" for i in range(n)]],
            trace_rows,
        )
    print(f"throughput per channel: {', '.join(f'{v:.5f}' for v in summary['mean_throughput'])}")
    print(f"wrote {out / 'summary.json'}")
    return 0


def _load_directions(path: Path, n: int) -> list[list[float]]:
    dirs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.replace(",", " ").split()]
            if len(vals) != n:
                raise cfgmod.ConfigError(f"direction {vals} has {len(vals)} entries for n = {n}")
            dirs.append(vals)
    if not dirs:
        raise cfgmod.ConfigError(f"no directions in {path}")
    return dirs


def cmd_region(args) -> int:
    exp = cfgmod.load(args.config)
    reg = exp.raw["region"]
    n = exp.n
    path = args.directions or (exp.base_dir / reg["directions_file"] if reg["directions_file"] else None)
    if path:
        directions = _load_directions(Path(path), n)
    elif n == 1:
        directions = [[1.0]]
    elif n == 2:
        directions = [list(d) for d in planar_directions(int(reg["directions"]))]
    else:
        directions = [list(map(float, phi.bits)) for phi in all_activation_vectors(n)]
    region = RegionModel.build(exp.params)
    rows = boundary_sweep(region, directions)

    symmetric = all(p == exp.params[0] for p in exp.params)
    blind = bool(reg["blind_line"])
    if blind and not symmetric:
        print("warning: blind reference line needs symmetric channels; omitted", file=sys.stderr)
        blind = False

    header = [f"dir_{i}" for i in range(n)] + [f"inner_{i}" for i in range(n)] + [f"outer_{i}" for i in range(n)] + ["gap"]
    if blind:
        header += [f"blind_{i}" for i in range(n)]
    table = []
    for row in rows:
        line = [*row.direction, *row.inner, *row.outer, row.gap]
        if blind:
            line += blind_point(exp.params, row.direction).tolist()
        table.append(line)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", header, table)

    report = {"n_channels": n, "directions": len(rows), "outer_sum_cap": max(p.c_inf for p in exp.params)}
    if symmetric:
        p = exp.params[0]
        report["c_M"] = {str(m): c_of_M(p, m) for m in range(1, n + 1)}
        report["c_inf"] = p.c_inf
        if n >= 2:
            report["memory_gain"] = memory_gain(p, 2)
            print(f"memory gain (c_2 - c_1) / c_1 = {report['memory_gain']:.1%}")
    _dump_json(out / "summary.json", report)
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} directions)")
    return 0


def cmd_convert_weights(args) -> int:
    exp = cfgmod.load(args.config)
    with open(args.input) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or not raw:
        raise cfgmod.ConfigError("weights file must be a JSON object {bitstring: weight}")
    weights = {ActivationVector.parse(k): float(v) for k, v in raw.items()}
    if any(phi.n != exp.n for phi in weights):
        raise cfgmod.ConfigError(f"weights use activation vectors of length != n = {exp.n}")
    if args.source == "beta":
        given = MixtureWeights(weights, WeightKind.TIME_FRACTION)
        converted = beta_to_alpha(given, exp.params)
        back = alpha_to_beta(converted, exp.params)
    else:
        given = MixtureWeights(weights, WeightKind.SELECTION)
        converted = alpha_to_beta(given, exp.params)
        back = beta_to_alpha(converted, exp.params)
    err = max(abs(back.weights[phi] - given.weights[phi]) for phi in weights)
    result = {str(phi): w for phi, w in converted.weights.items()}
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if err > 1e-12:
        print(f"round-trip check failed: max deviation {err:.3e}", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    exp = cfgmod.load(args.config, _overrides(args))
    p = exp.params[0]
    opt = SuiteOptions(p01=p.p01, p10=p.p10, seed=int(exp.run["seed"]), quick=args.quick)
    verdicts = run_suite(opt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "verdicts.json", [v.as_dict() for v in verdicts])
    failed = [v for v in verdicts if not v.passed]
    for v in verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.experiment}: {v.statistic:.6g} (bound {v.bound:.6g})")
    if failed:
        print("failed checks: " + ", ".join(v.experiment for v in failed), file=sys.stderr)
        return 1
    return 0


def cmd_config(args) -> int:
    if args.action == "show-defaults":
        sys.stdout.write(cfgmod.DEFAULTS_TOML)
        return 0
    cfgmod.load(args.file)
    print(f"{args.file}: ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memsched", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the configured policy")
    sim.add_argument("--config", help="TOML experiment file")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--replications", type=int)
    sim.add_argument("--trace", action="store_true", help="also write per-slot trace.csv")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", default="out")
    sim.set_defaults(func=cmd_simulate)

    reg = sub.add_parser("region", help="sweep inner and outer region boundaries")
    reg.add_argument("--config")
    reg.add_argument("--directions", help="file of direction vectors")
    reg.add_argument("--out", default="out")
    reg.set_defaults(func=cmd_region)

    conv = sub.add_parser("convert-weights", help="selection <-> time-fraction weights")
    conv.add_argument("input", help="JSON map {bitstring: weight}")
    conv.add_argument("--from", dest="source", choices=("alpha", "beta"), default="beta")
    conv.add_argument("--config")
    conv.add_argument("--out")
    conv.set_defaults(func=cmd_convert_weights)

    ver = sub.add_parser("verify", help="run the oracle suite")
    ver.add_argument("--config")
    ver.add_argument("--seed", type=int)
    ver.add_argument("--quick", action="store_true", help="1e5-slot horizons, looser slack")
    ver.add_argument("--out", default="out")
    ver.set_defaults(func=cmd_verify)

    conf = sub.add_parser("config", help="inspect configuration")
    conf_sub = conf.add_subparsers(dest="action", required=True)
    conf_sub.add_parser("show-defaults")
    check = conf_sub.add_parser("validate")
    check.add_argument("file")
    conf.set_defaults(func=cmd_config)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BeliefFloorViolation as exc:
        print(f"assertion violated: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AssertionError as exc:
        print(f"assertion violated: {exc}", file=sys.stderr)
        return EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
