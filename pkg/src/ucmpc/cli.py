"""Batch front-end: design, simulate, compare and verify over scenario configs.

Exit codes: 0 success, 1 usage or verification failure, 2 design infeasible,
3 stale report (scenario hash mismatch).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .design import TighteningReport, design_l1
from .linalg import DesignError
from .ppg import PpgResult, certify_gain, synthesize_kx
from .scenarios import BUILTINS, load_scenario
from .sim import (SimLog, max_tube, max_violation, simulate, steady_state_error, verify_bounds,
                  write_csv)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_DESIGN, EXIT_STALE = 0, 1, 2, 3

log = logging.getLogger("ucmpc")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

def _phase_key(scenario: str, key: str) -> str:
    if scenario == "asteroid":
        return key + "_1"
    if scenario == "asteroid-phase2":
        return key + "_2"
    return key


def scenario_overrides(args) -> dict:
    """Design-affecting flags as scenario parameter overrides, type-checked up front."""
    base = args.scenario
    if base not in BUILTINS:
        p = Path(base)
        if not p.exists():
            raise ConfigError(f"unknown scenario {base!r}; built-ins are {sorted(BUILTINS)}")
        base = json.loads(p.read_text()).get("scenario")
        if base not in BUILTINS:
            raise ConfigError(f"config {args.scenario} names unknown scenario {base!r}")
    ov = {}
    if getattr(args, "kf", None) is not None:
        if args.kf <= 0:
            raise ConfigError("--kf must be positive")
        ov[_phase_key(base, "kf")] = float(args.kf)
    if getattr(args, "T_runtime", None) is not None:
        if args.T_runtime <= 0:
            raise ConfigError("--T-runtime must be positive")
        ov[_phase_key(base, "T_runtime")] = float(args.T_runtime)
    if getattr(args, "scale_w", None) is not None:
        if base.startswith("asteroid") or base == "scalar":
            raise ConfigError(f"--scale-w does not apply to {base}")
        ov["scale_w"] = bool(args.scale_w)
    return ov


def _positive(name):
    def parse(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return v
    return parse


# ---------------------------------------------------------------- design

def run_design(scenario):
    """PPG (synthesis unless Kx is supplied, certification otherwise) then L1 design."""
    ppg = None
    Kx = scenario.Kx
    if scenario.ppg is not None and scenario.plant.Bu.shape[1] > 0:
        ppg = synthesize_kx(scenario.ppg) if Kx is None else certify_gain(scenario.ppg, Kx)
        Kx = ppg.Kx
    elif Kx is None:
        raise DesignError("scenario supplies neither Kx nor a PPG problem")
    report = design_l1(scenario.plant, Kx, scenario.bounds, scenario.X, scenario.U, scenario.X0,
                       scenario.l1)
    return report, ppg


def report_document(scenario, report: TighteningReport, ppg: PpgResult | None, overrides: dict,
                    elapsed: float) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "design", "scenario": scenario.name,
            "scenario_hash": scenario.hash, "overrides": overrides,
            "tightening": report.to_dict(), "ppg": None if ppg is None else ppg.to_dict(),
            "norms": report.norms.to_dict(), "elapsed_s": elapsed}


def load_report(path) -> tuple[dict, TighteningReport]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION or doc.get("kind") != "design":
        raise ConfigError(f"{path} is not a version-{SCHEMA_VERSION} design report")
    return doc, TighteningReport.from_dict(doc["tightening"])


def cmd_design(args) -> int:
    ov = scenario_overrides(args)
    sc = load_scenario(args.scenario, ov)
    t0 = time.perf_counter()
    try:
        report, ppg = run_design(sc)
    except DesignError as e:
        print(f"design infeasible: {e}", file=sys.stderr)
        return EXIT_DESIGN
    doc = report_document(sc, report, ppg, ov, time.perf_counter() - t0)
    out = Path(args.out or f"{sc.name}.design.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2))
    print(f"tilde_rho = {np.array2string(report.tilde_rho, precision=4)}")
    print(f"rho_ua    = {np.array2string(report.rho_ua, precision=4)}")
    if ppg is not None:
        print(f"beta      = {ppg.beta:.4g}")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def summarize(log_: SimLog, scenario, report) -> dict:
    """Verification claims plus the comparison metrics of one run."""
    ver = verify_bounds(log_, report if log_.controller != "vanilla" else None, scenario)
    metrics = {"max_violation": max_violation(log_, scenario)}
    if log_.controller != "vanilla":
        metrics["max_tube"] = max_tube(log_).tolist()
    else:
        metrics["max_tube"] = None
    if scenario.reference is not None and scenario.steady_windows:
        try:
            metrics["steady_state_error"] = steady_state_error(log_, scenario)
        except ValueError:
            metrics["steady_state_error"] = None
    if scenario.target is not None:
        metrics["final_distance"] = float(np.linalg.norm(log_.x[-1, : len(scenario.target)]
                                                         - scenario.target))
    return {"schema_version": SCHEMA_VERSION, "kind": "run", "scenario": scenario.name,
            "scenario_hash": scenario.hash, "controller": log_.controller, "status": log_.status,
            "message": log_.message, "verification": ver, "metrics": metrics, "meta": log_.meta}


def cmd_simulate(args) -> int:
    ov = scenario_overrides(args)
    sc = load_scenario(args.scenario, ov)
    report = None
    if args.controller != "vanilla":
        if args.report:
            doc, report = load_report(args.report)
            if doc["scenario_hash"] != sc.hash:
                print(f"refusing stale report {args.report}: hash {doc['scenario_hash']} does not "
                      f"match scenario hash {sc.hash}", file=sys.stderr)
                return EXIT_STALE
        else:
            try:
                report, _ = run_design(sc)
            except DesignError as e:
                print(f"design infeasible: {e}", file=sys.stderr)
                return EXIT_DESIGN
    run = simulate(sc, report, args.controller, args.duration, args.dt_sim, seed=args.seed)
    out = Path(args.out or f"runs/{sc.name}-{args.controller}")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(run, out / "log.csv", sc, report)
    summary = summarize(run, sc, report)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default))
    for k, v in summary["verification"].items():
        if k != "all_pass":
            print(f"{k:12s} {'pass' if v['pass'] else 'FAIL'}  worst={v.get('worst_margin')}")
    print(f"wrote {out}")
    if args.controller == "ucmpc" and not summary["verification"]["all_pass"]:
        return EXIT_FAIL
    return EXIT_OK


def _json_default(o):
    if isinstance(o, (np.generic,)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# ---------------------------------------------------------------- compare

def _load_summary(p: Path) -> dict:
    return json.loads((p / "summary.json" if p.is_dir() else p).read_text())


def compare_rows(summaries: list[dict]) -> list[dict]:
    rows = []
    for s in summaries:
        m = s["metrics"]
        rows.append({"scenario": s["scenario"], "controller": s["controller"], "status": s["status"],
                     "steady_state_error": m.get("steady_state_error"),
                     "max_violation": m["max_violation"], "max_tube": m.get("max_tube"),
                     "final_distance": m.get("final_distance")})
    base = rows[0]
    for r in rows:
        r["delta"] = {k: (None if r[k] is None or base[k] is None
                          else (np.subtract(r[k], base[k]).tolist()))
                      for k in ("steady_state_error", "max_violation", "max_tube", "final_distance")}
    return rows


def cmd_compare(args) -> int:
    paths = [Path(p) for p in args.runs]
    if len(paths) < 2:
        raise ConfigError("compare needs at least two runs")
    missing = [str(p) for p in paths if not (p / "summary.json" if p.is_dir() else p).exists()]
    if missing:
        print("missing run logs: " + ", ".join(missing), file=sys.stderr)
        return EXIT_FAIL
    rows = compare_rows([_load_summary(p) for p in paths])
    out = Path(args.out or "comparison.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "kind": "comparison",
                               "runs": [str(p) for p in paths], "rows": rows}, indent=2))
    for p, r in zip(paths, rows):
        print(f"{str(p):40s} {r['controller']:14s} sse={r['steady_state_error']} "
              f"viol={r['max_violation']:.4g} final={r['final_distance']}")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def log_from_csv(path) -> SimLog:
    """Rebuilds a SimLog from a CSV written by simulate (values at the logged rows)."""
    path = Path(path)
    man = json.loads(path.with_suffix(".manifest.json").read_text())
    with path.open() as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array(rows[1:], dtype=float)

    def block(prefix):
        idx = [i for i, c in enumerate(cols) if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return data[:, idx]

    return SimLog(scenario=man["scenario"], controller=man["controller"], t=data[:, 0],
                  x=block("x"), x_n=block("xn"), x_hat=block("xhat"), sigma_hat=block("sighat"),
                  u=block("u"), u_bar=block("ubar"), u_a=block("ua"), u_n=block("ubar"),
                  mpc_t=np.zeros(0), status=man["status"], meta=man["meta"])


def cmd_verify(args) -> int:
    ov = scenario_overrides(args)
    sc = load_scenario(args.scenario, ov)
    report = None
    if args.report:
        doc, report = load_report(args.report)
        if doc["scenario_hash"] != sc.hash:
            print(f"refusing stale report {args.report}", file=sys.stderr)
            return EXIT_STALE
    run = log_from_csv(args.log)
    if run.meta.get("scenario_hash") != sc.hash:
        print(f"log {args.log} was produced for a different scenario configuration", file=sys.stderr)
        return EXIT_STALE
    ver = verify_bounds(run, report if run.controller != "vanilla" else None, sc)
    for k, v in ver.items():
        if k != "all_pass":
            print(f"{k:12s} {'pass' if v['pass'] else 'FAIL'}  worst={v.get('worst_margin')}")
    if args.out:
        Path(args.out).write_text(json.dumps(ver, indent=2, default=_json_default))
    return EXIT_OK if ver["all_pass"] or run.controller == "vanilla" else EXIT_FAIL


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ucmpc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, design_flags=True):
        p.add_argument("name", nargs="?", help="scenario name or JSON config path")
        p.add_argument("--scenario", dest="scenario_opt")
        p.add_argument("--out")
        if design_flags:
            p.add_argument("--kf", type=_positive("--kf"))
            p.add_argument("--T-runtime", dest="T_runtime", type=_positive("--T-runtime"))
            p.add_argument("--scale-w", dest="scale_w", action=argparse.BooleanOptionalAction,
                           default=None)

    p = sub.add_parser("design", help="PPG gain and L1 tightening report")
    common(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="closed-loop run, CSV log and verification summary")
    common(p)
    p.add_argument("--controller", choices=("ucmpc", "vanilla", "ablation-noua"), default="ucmpc")
    p.add_argument("--report", help="design report produced by the design command")
    p.add_argument("--duration", type=_positive("--duration"))
    p.add_argument("--dt-sim", dest="dt_sim", type=_positive("--dt-sim"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="tabulate metrics across completed runs")
    p.add_argument("runs", nargs="+", help="run directories or summary.json files")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare, name=None, scenario_opt=None)

    p = sub.add_parser("verify", help="recheck the containment claims of a CSV log")
    common(p)
    p.add_argument("--log", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "compare":
        args.scenario = args.scenario_opt or args.name
        if not args.scenario:
            print("a scenario is required (positional or --scenario)", file=sys.stderr)
            return EXIT_FAIL
    try:
        return args.func(args)
    except (ConfigError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
