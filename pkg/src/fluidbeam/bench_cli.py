"""Command-line benchmark driver.

Three subcommands: `gen` writes a scenario file from config overrides, `solve`
runs one scheme on one scenario and emits a run record, `sweep` runs a grid of
(axis value, seed, scheme) jobs and tabulates results.  All output is JSON or
CSV; schemas are versioned by the scenario file and the fixed CSV header.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from fluidbeam import baselines, channel, perfect_csi, robust_csi

log = logging.getLogger(__name__)

SCHEMES = ("proposed_perfect", "proposed_robust", "fafp", "farp", "aps")

# sweep axis name -> ScenarioConfig field
AXES = {
    "region_size_over_lambda": "region_over_lambda",
    "sinr_threshold_db": "sinr_threshold_db",
    "n_antennas": "n_antennas",
    "n_users": "n_users",
    "csi_error": "csi_error_frac",
}

CSV_HEADER = ["axis_value", "scheme", "seed", "snr_db", "iterations", "feasible", "wall_ms"]


@dataclass
class SweepSpec:
    axis: str
    values: list
    seeds: int
    schemes: list

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; choose from {sorted(AXES)}")
        if not self.values:
            raise ValueError("sweep needs at least one axis value")
        if self.seeds < 1:
            raise ValueError("sweep needs at least one seed")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValueError(f"schemes must be a nonempty subset of {SCHEMES}, got {self.schemes}")


@dataclass
class RunRecord:
    scheme: str
    seed: int
    digest: str
    axis_value: float | None
    snr: float
    iterations: int
    trace: list
    feasible: bool
    wall_ms: float
    status: str

    @property
    def snr_db(self):
        if self.feasible and self.snr > 0 and math.isfinite(self.snr):
            return 10.0 * math.log10(self.snr)
        return None

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "digest": self.digest,
            "axis_value": self.axis_value,
            "snr_db": self.snr_db,
            "snr": self.snr if math.isfinite(self.snr) else None,
            "iterations": self.iterations,
            "trace": self.trace,
            "feasible": self.feasible,
            "wall_ms": self.wall_ms,
            "status": self.status,
        }


def _clean_trace(values):
    return [float(v) for v in np.asarray(values, dtype=float) if math.isfinite(v)]


def run_one(scenario, scheme, seed=0, xi=1e-3, max_outer=50, grid_n=None, robust_baselines=False, axis_value=None):
    """Run one scheme on one scenario and wrap the outcome in a RunRecord.

    Infeasibility is data, not an error: the record carries feasible=False
    and a nan SNR.  Baselines count as one iteration except APS, which
    reports its sweep count.
    """
    digest = channel.scenario_digest(scenario)
    grid = None
    if grid_n is not None:
        grid = robust_csi.angle_grid(scenario.target, n_elevation=grid_n, n_azimuth=grid_n)
    t0 = time.perf_counter()
    if scheme == "proposed_perfect":
        rep = perfect_csi.algorithm1(scenario, xi=xi, max_outer=max_outer, seed=seed)
        feasible = rep.iterations > 0 and rep.status != "infeasible"
        snr = float(rep.objective_trace[-1]) if feasible else math.nan
        record = (snr, rep.iterations, _clean_trace(rep.objective_trace), feasible, rep.status)
    elif scheme == "proposed_robust":
        rep = robust_csi.algorithm2(scenario, xi=xi, max_outer=max_outer, grid=grid, seed=seed)
        feasible = rep.iterations > 0 and rep.status != "infeasible"
        snr = float(rep.objective_trace[-1]) if feasible else math.nan
        record = (snr, rep.iterations, _clean_trace(rep.objective_trace), feasible, rep.status)
    elif scheme in ("fafp", "farp", "aps"):
        if scheme == "fafp":
            res = baselines.fafp(scenario, robust=robust_baselines, seed=seed)
            iterations = 1
        elif scheme == "farp":
            res = baselines.farp(scenario, seed=seed, robust=robust_baselines)
            iterations = 1
        else:
            res = baselines.aps(scenario, robust=robust_baselines, seed=seed)
            iterations = int(res.diagnostics.get("sweeps", 1))
        trace = [float(res.snr)] if math.isfinite(res.snr) else []
        record = (float(res.snr), iterations, trace, bool(res.feasible), str(res.diagnostics.get("status", "")))
    else:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    wall_ms = (time.perf_counter() - t0) * 1e3
    snr, iterations, trace, feasible, status = record
    return RunRecord(
        scheme=scheme,
        seed=seed,
        digest=digest,
        axis_value=axis_value,
        snr=snr,
        iterations=iterations,
        trace=trace,
        feasible=feasible,
        wall_ms=wall_ms,
        status=status,
    )


# ---------------------------------------------------------------------------
# scenario construction


def _config_from_overrides(overrides):
    fields = channel.ScenarioConfig.__dataclass_fields__
    unknown = sorted(set(overrides) - set(fields))
    if unknown:
        raise ValueError(f"unknown config fields: {', '.join(unknown)}")
    if "target_reflection" in overrides and isinstance(overrides["target_reflection"], list):
        re_, im = overrides["target_reflection"]
        overrides = dict(overrides, target_reflection=complex(re_, im))
    return channel.ScenarioConfig(**overrides)


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    overrides = _load_json(args.config) if args.config else {}
    if args.eps is not None:
        overrides["csi_error_frac"] = args.eps
    cfg = _config_from_overrides(overrides)
    scenario = channel.sample_scenario(cfg, seed=args.seed)
    text = channel.scenario_to_json(scenario) + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(channel.scenario_digest(scenario))
    return 0


def _load_scenario(path, eps=None):
    scenario = channel.scenario_from_json(open(path, "r", encoding="utf-8").read())
    if eps is not None:
        scenario = replace(scenario, csi_error_frac=tuple(eps for _ in scenario.csi_error_frac))
    return scenario


def cmd_solve(args):
    scenario = _load_scenario(args.scenario, eps=args.eps)
    record = run_one(
        scenario,
        args.scheme,
        seed=args.seed,
        xi=args.xi,
        max_outer=args.max_outer,
        grid_n=args.grid_n,
        robust_baselines=args.robust_baselines,
    )
    text = json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _sweep_job(payload):
    """One (axis value, seed, scheme) cell; top level so the pool can pickle it."""
    base, axis, value, seed, scheme, xi, max_outer, grid_n = payload
    overrides = dict(base)
    overrides[AXES[axis]] = value
    try:
        cfg = _config_from_overrides(overrides)
        scenario = channel.sample_scenario(cfg, seed=seed)
        record = run_one(
            scenario,
            scheme,
            seed=seed,
            xi=xi,
            max_outer=max_outer,
            grid_n=grid_n,
            robust_baselines=axis == "csi_error",
            axis_value=value,
        )
    except Exception as exc:  # partial failures become rows, the sweep survives
        log.warning("sweep cell failed: %s=%s %s seed %d: %s", axis, value, scheme, seed, exc)
        record = RunRecord(
            scheme=scheme,
            seed=seed,
            digest="",
            axis_value=value,
            snr=math.nan,
            iterations=0,
            trace=[],
            feasible=False,
            wall_ms=0.0,
            status=f"error:{type(exc).__name__}: {exc}",
        )
    return record


def _quantiles(values):
    arr = np.sort(np.asarray(values, dtype=float))
    return (
        float(np.quantile(arr, 0.5)),
        float(np.quantile(arr, 0.25)),
        float(np.quantile(arr, 0.75)),
    )


def cmd_sweep(args):
    raw = _load_json(args.spec)
    spec = SweepSpec(
        axis=raw["axis"],
        values=list(raw["values"]),
        seeds=int(raw.get("seeds", 1)),
        schemes=list(raw.get("schemes", ["proposed_perfect"])),
    )
    base = dict(raw.get("config", {}))
    xi = float(raw.get("xi", args.xi))
    max_outer = int(raw.get("max_outer", args.max_outer))
    grid_n = raw.get("grid_n", args.grid_n)
    os.makedirs(args.out, exist_ok=True)

    jobs = [
        (base, spec.axis, value, seed, scheme, xi, max_outer, grid_n)
        for value in spec.values
        for seed in range(spec.seeds)
        for scheme in spec.schemes
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_sweep_job, jobs))
    else:
        records = [_sweep_job(j) for j in jobs]

    for rec in records:
        name = f"{spec.axis}-{rec.axis_value}-{rec.scheme}-s{rec.seed}.json"
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            json.dump(rec.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    results_path = os.path.join(args.out, "results.csv")
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            db = rec.snr_db
            writer.writerow(
                [
                    rec.axis_value,
                    rec.scheme,
                    rec.seed,
                    "" if db is None else f"{db:.6f}",
                    rec.iterations,
                    rec.feasible,
                    f"{rec.wall_ms:.3f}",
                ]
            )

    summary_path = os.path.join(args.out, "summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis_value", "scheme", "n_feasible", "snr_db_median", "snr_db_q1", "snr_db_q3"])
        for value in spec.values:
            for scheme in spec.schemes:
                dbs = [
                    r.snr_db
                    for r in records
                    if r.axis_value == value and r.scheme == scheme and r.snr_db is not None
                ]
                if dbs:
                    med, q1, q3 = _quantiles(dbs)
                    writer.writerow([value, scheme, len(dbs), f"{med:.6f}", f"{q1:.6f}", f"{q3:.6f}"])
                else:
                    writer.writerow([value, scheme, 0, "", "", ""])
    print(results_path)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fluidbeam",
        description="Benchmark driver for joint antenna placement and beamforming.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a scenario JSON file")
    gen.add_argument("config", nargs="?", help="JSON file of config field overrides")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--eps", type=float, default=None, help="override the CSI error fraction")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="run one scheme on a scenario file")
    solve.add_argument("scenario")
    solve.add_argument("--scheme", choices=SCHEMES, default="proposed_perfect")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--xi", type=float, default=1e-3)
    solve.add_argument("--max-outer", type=int, default=50)
    solve.add_argument("--grid-n", type=int, default=None, help="angle grid density for robust runs")
    solve.add_argument("--eps", type=float, default=None, help="override the CSI error fraction")
    solve.add_argument("--robust-baselines", action="store_true", help="run baselines in robust mode")
    solve.add_argument("--out", default=None)
    solve.set_defaults(func=cmd_solve)

    sweep = sub.add_parser("sweep", help="run a sweep spec and tabulate results")
    sweep.add_argument("spec")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--xi", type=float, default=1e-3)
    sweep.add_argument("--max-outer", type=int, default=50)
    sweep.add_argument("--grid-n", type=int, default=None)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    level = os.environ.get("FLUIDBEAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
