"""F-16 pitch tracking: design, then UC-MPC, vanilla MPC and the u_a = 0 ablation.

Runs land in runs/f16-<controller>/ and a comparison in runs/f16-comparison.json.
Pass --matched-only to zero the unmatched disturbance.
"""
import argparse
import json
import os

from ucmpc.cli import main as cli

CONTROLLERS = ("ucmpc", "vanilla", "ablation-noua")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="f16")
    ap.add_argument("--duration", default=None)
    ap.add_argument("--matched-only", action="store_true")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    scenario = args.scenario
    if args.matched_only:
        scenario = f"{args.out}/{args.scenario}-matched.json"
        with open(scenario, "w") as fh:
            json.dump({"scenario": args.scenario, "params": {"w_amp": 0.0}}, fh)
    tag = args.scenario + ("-matched" if args.matched_only else "")
    report = f"{args.out}/{tag}.design.json"
    cli(["design", scenario, "--out", report])
    extra = ["--duration", args.duration] if args.duration else []
    runs = []
    for c in CONTROLLERS:
        out = f"{args.out}/{tag}-{c}"
        cli(["simulate", scenario, "--controller", c, "--report", report, "--out", out] + extra)
        runs.append(out)
    cli(["compare", *runs, "--out", f"{args.out}/{tag}-comparison.json"])


if __name__ == "__main__":
    main()
