import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ucmpc.linalg import DesignError, LtiPlant, is_hurwitz
from ucmpc.ppg import (PpgProblem, PpgResult, certify_gain, lmi_margins, synthesize_kx,
                       verify_ppg_by_simulation)


def _decoupled(a):
    # w drives x1 = 1/(s + a) w, with z = x1: the exact peak-to-peak gain is 1/a.
    # The undriven state is fast so that it does not cap the lambda search.
    return LtiPlant([[-a, 0.0], [0.0, -20.0]], [[0.0], [1.0]], [[1.0], [0.0]])


@given(st.floats(0.5, 5.0))
@settings(max_examples=3)
def test_certified_bound_of_first_order_map(a):
    grid = np.linspace(2 * a / 100, 2 * a, 100)
    res = certify_gain(PpgProblem(_decoupled(a), [[1.0, 0.0]], [[0.0]], lambda_grid=grid), [[0.0, 0.0]])
    assert res.beta >= 1.0 / a * (1 - 1e-6)
    assert res.beta <= 1.0 / a * 1.01


def test_certificate_satisfies_lmis():
    pr = PpgProblem(_decoupled(2.0), [[1.0, 0.0]], [[0.0]])
    res = certify_gain(pr, [[0.0, -1.0]])
    m18, m19 = lmi_margins(pr, res)
    assert m18 > 0 and m19 > 0


def test_synthesis_on_unstable_plant():
    p = LtiPlant([[0.0, 1.0], [2.0, -1.0]], [[0.0], [1.0]], [[1.0], [0.0]])
    pr = PpgProblem(p, [[1.0, 0.0], [0.0, 0.0]], [[0.0], [0.1]])
    res = synthesize_kx(pr)
    assert is_hurwitz(p.closed_loop(res.Kx))
    peak = verify_ppg_by_simulation(res, pr, trials=50, steps=5000)
    assert peak <= res.beta
    back = PpgResult.from_dict(res.to_dict())
    assert np.allclose(back.Kx, res.Kx) and back.beta == res.beta


def test_synthesis_beats_or_matches_fixed_gain():
    p = LtiPlant([[0.0, 1.0], [-1.0, -0.5]], [[0.0], [1.0]], [[1.0], [0.0]])
    pr = PpgProblem(p, [[1.0, 0.0], [0.0, 0.0]], [[0.0], [0.1]])
    syn = synthesize_kx(pr)
    fixed = certify_gain(pr, [[-1.0, -1.0]])
    assert syn.beta <= fixed.beta * (1 + 1e-3)


def test_certify_rejects_unstable_gain():
    pr = PpgProblem(_decoupled(1.0), [[1.0, 0.0]], [[0.0]])
    with pytest.raises(DesignError):
        certify_gain(pr, [[0.0, 25.0]])


def test_problem_validation():
    with pytest.raises(ValueError):
        PpgProblem(_decoupled(1.0), [[1.0, 0.0, 0.0]], [[0.0]])
    with pytest.raises(ValueError):
        PpgProblem(_decoupled(1.0), [[1.0, 0.0]], [[0.0]], lambda_grid=[2.0, 1.0])
