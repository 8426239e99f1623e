"""Command-line entry point: ``run``, ``sweep`` and ``validate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import metrics, scenario

PARAM_ALIASES = {
    "distance_factor": "fibers.distance_factor",
    "algorithm": "simulation.algorithm",
    "repeaters": "simulation.repeaters",
    "threshold": "simulation.threshold",
    "lens_capacity": "constellation.lens_capacity",
    "commodity_count": "commodities.count",
}


def _load(path) -> scenario.ScenarioConfig:
    return scenario.ScenarioConfig.load(path) if path else scenario.ScenarioConfig()


def _write_run(out, results, cfg) -> dict:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "throughput.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "seed", "window", "average_throughput"])
        for r in results:
            for i, v in enumerate(r.window_throughput):
                w.writerow([r.algorithm, r.seed, i, v])
    with open(os.path.join(out, "satisfaction.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "seed", "window", "satisfaction_ratio"])
        for r in results:
            for i, v in enumerate(r.window_satisfaction):
                w.writerow([r.algorithm, r.seed, i, v])
    paths = [(r.seed, p) for r in results for p in r.lightpaths]
    with open(os.path.join(out, "lightpaths.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "commodity", "epoch", "start_s", "end_s", "sat_sequence", "q_path", "alpha"])
        for seed, p in paths:
            w.writerow([seed, p.commodity, p.epoch, p.start_s, p.end_s,
                        "-".join(str(v) for v in p.satellite_ids), p.success, p.capacity])
    for r in results:
        if r.horizon is not None:
            with open(os.path.join(out, f"trace_seed{r.seed}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["slot", "commodity", "delivered"])
                for t in r.horizon.traces:
                    for cid, n in t.delivered.items():
                        w.writerow([t.slot, cid, n])
    agg = metrics
    summary = {
        "config": cfg.to_dict(),
        "assumptions": {
            "lens_capacity": cfg.constellation["lens_capacity"],
            "stations": "builtin stand-in city list" if cfg.stations["list"] is None else "user supplied",
        },
        "average_throughput": agg.aggregate([r.average_throughput for r in results]).as_dict(),
        "satisfaction_ratio": agg.aggregate([r.satisfaction_ratio for r in results]).as_dict(),
        "runs": [r.summary() for r in results],
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    return summary


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.algorithm:
        cfg = cfg.with_overrides(**{"simulation.algorithm": args.algorithm})
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    results = [scenario.run_once(cfg, s, keep_horizon=args.traces) for s in seeds]
    summary = _write_run(args.out, results, cfg)
    print(json.dumps({k: summary[k] for k in ("average_throughput", "satisfaction_ratio")}, indent=2))
    return 0


def _parse_value(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    key = PARAM_ALIASES.get(args.param, args.param)
    if "." not in key:
        print(f"unknown sweep parameter {args.param!r}", file=sys.stderr)
        return 2
    algorithms = args.algorithms or [cfg.simulation["algorithm"]]
    seeds = list(range(args.first_seed, args.first_seed + args.seeds))
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for raw in args.values:
        value = _parse_value(raw)
        for alg in algorithms:
            point = cfg.with_overrides(**{key: value, "simulation.algorithm": alg})
            rep = scenario.run_experiment(point, seeds)
            rows.append([args.param, value, alg, rep["average_throughput"]["mean"],
                         rep["average_throughput"]["ci_halfwidth"], rep["satisfaction_ratio"]["mean"],
                         rep["satisfaction_ratio"]["ci_halfwidth"]])
            print(f"{args.param}={value} {alg}: throughput {rows[-1][3]:.4g}, satisfaction {rows[-1][5]:.3f}")
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "value", "algorithm", "throughput_mean", "throughput_ci99",
                    "satisfaction_mean", "satisfaction_ci99"])
        w.writerows(rows)
    return 0


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config)
        inst = scenario.build_instance(cfg, 0)
    except (scenario.ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {len(inst.stations)} stations, {len(inst.fibers)} usable fibers, "
          f"{len(inst.satellites)} satellites, {len(inst.commodities)} commodities")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satqnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration over several seeds")
    r.add_argument("--config")
    r.add_argument("--seeds", type=int, default=3)
    r.add_argument("--first-seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--algorithm", choices=scenario.ALGORITHMS)
    r.add_argument("--traces", action="store_true", help="also write per-slot delivery traces")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one parameter")
    s.add_argument("--config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", nargs="+", required=True)
    s.add_argument("--algorithms", nargs="+", choices=scenario.ALGORITHMS)
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--first-seed", type=int, default=0)
    s.add_argument("--out", default="sweep-out")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
