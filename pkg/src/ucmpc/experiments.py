"""Bound tables for the F-16 case study (gain comparison and w scaling)."""
from __future__ import annotations

import numpy as np

from .design import design_l1
from .ppg import PpgProblem, certify_gain
from .scenarios import load_scenario

# three stabilising gains compared in the gain study, largest PPG bound first
TABLE1_KX = [
    [[3.25, 0.89, 7.12], [-6.10, -0.90, -10.00]],
    [[3.29, 1.23, 9.71], [-2.75, -0.10, -2.67]],
    [[4.11, 1.66, 16.22], [-3.10, 0.06, -1.63]],
]
TABLE1_REF = {"beta": [0.07, 0.05, 0.03], "rho3": [0.27, 0.17, 0.11],
              "tilde_rho": [[0.38, 1.36, 0.27], [0.43, 1.30, 0.17], [0.40, 1.28, 0.11]],
              "tilde_rho_u": [[6.55, 4.64], [9.00, 3.41], [9.93, 3.14]]}
TABLE2_REF = {"with": [1.06, 1.54, 0.53, 9.69], "without": [1.35, 2.15, 0.74, 11.63]}


def alpha_output_problem(plant) -> PpgProblem:
    """PPG from w to the angle of attack alone."""
    return PpgProblem(plant, [[0.0, 0.0, 1.0]], np.zeros((1, plant.m)))


def table1_rows() -> list[dict]:
    """Certified beta (alpha-only and weighted output) and bounds for each fixed gain."""
    rows = []
    for K in TABLE1_KX:
        sc = load_scenario("f16", {"Kx": K})
        Kx = np.asarray(K, float)
        beta_alpha = certify_gain(alpha_output_problem(sc.plant), Kx).beta
        beta_weighted = certify_gain(sc.ppg, Kx).beta
        r = design_l1(sc.plant, Kx, sc.bounds, sc.X, sc.U, sc.X0, sc.l1)
        rows.append({"Kx": K, "beta": beta_alpha, "beta_weighted": beta_weighted,
                     "tilde_rho": r.tilde_rho.tolist(), "tilde_rho_u": r.tilde_rho_u.tolist(),
                     "rho_ua": r.rho_ua.tolist()})
    return rows


def table2_rows() -> dict:
    """[tilde_rho, tilde_rho_u^1] on the single-input variant with and without w scaling."""
    out = {}
    for key, flag in (("with", True), ("without", False)):
        sc = load_scenario("f16-siso", {"scale_w": flag})
        r = design_l1(sc.plant, sc.Kx, sc.bounds, sc.X, sc.U, sc.X0, sc.l1)
        out[key] = list(map(float, np.concatenate([r.tilde_rho, r.tilde_rho_u[:1]])))
    return out
