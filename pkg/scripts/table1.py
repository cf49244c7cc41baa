"""Gain comparison on the F-16: certified PPG bound and tightening bounds per fixed Kx."""
import json
import sys

import numpy as np

from ucmpc.experiments import TABLE1_REF, table1_rows


def main():
    rows = table1_rows()
    print(f"{'row':>3} {'beta(alpha)':>11} {'beta(z)':>8}  tilde_rho{'':16} tilde_rho_u")
    for i, r in enumerate(rows):
        print(f"{i + 1:>3} {r['beta']:11.4f} {r['beta_weighted']:8.4f}  "
              f"{np.round(r['tilde_rho'], 3)!s:25} {np.round(r['tilde_rho_u'], 2)}")
    print("reference beta", TABLE1_REF["beta"], "tilde_rho3", TABLE1_REF["rho3"])
    if len(sys.argv) > 1:
        with open(sys.argv[1], "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
