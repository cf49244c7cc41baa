"""Asteroid descent, both phases: UC-MPC against vanilla MPC, final distances compared."""
import argparse
import os

from ucmpc.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phases", nargs="+", default=["asteroid", "asteroid-phase2"])
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name in args.phases:
        report = f"{args.out}/{name}.design.json"
        cli(["design", name, "--out", report])
        runs = []
        for c in ("ucmpc", "vanilla"):
            out = f"{args.out}/{name}-{c}"
            cli(["simulate", name, "--controller", c, "--report", report, "--out", out])
            runs.append(out)
        cli(["compare", *runs, "--out", f"{args.out}/{name}-comparison.json"])


if __name__ == "__main__":
    main()
