import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from einvex.expr import MapE, MapPsi, ScalarFn
from einvex.nlpp import (
    NlppError,
    NlppProblem,
    certify_assumptions,
    dense_scan,
    feasible_set,
    local_search,
    solve,
)
from einvex.problem import load_builtin
from einvex.sampling import SamplingPlan, Status
from einvex.sets import Box

PLAN = SamplingPlan(grid_per_axis=11, random_pairs=200)
SCAN = 20_001


def program(obj, cons=(), E="identity", lo=-2.0, hi=2.0):
    fs = [ScalarFn.parse(c, ["s"]) for c in cons]
    e = MapE.identity(1) if E == "identity" else MapE.parse(E, ["s"])
    return NlppProblem(ScalarFn.parse(obj, ["s"]), tuple(fs), e, MapPsi.difference(1), Box((lo,), (hi,)))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        NlppProblem(ScalarFn.parse("s", ["s"]), (), MapE.identity(2), MapPsi.difference(1), Box((0,), (1,)))


def test_feasible_set_membership():
    X = feasible_set(program("s"))
    assert X.contains(np.array([[-2.0], [2.0]])).all()
    X = feasible_set(program("s", ["s - 1"]))
    np.testing.assert_array_equal(X.contains(np.array([[-2.0], [1.0], [1.5]])), [True, True, False])


def test_certify_assumptions_square_map():
    P = program("s^2 + s", E="s^2", lo=0.0, hi=1.0)
    rep = certify_assumptions(P, PLAN)
    names = [r.property for r in rep.sub_reports]
    assert names[:3] == ["E(X) subset of X", "X strongly E-invex", "alpha s + Es feasible"]
    assert rep.sub_reports[0].certified


def test_certify_assumptions_translation_refuted():
    P = program("s", E="s + 1", lo=0.0, hi=1.0)
    rep = certify_assumptions(P, PLAN)
    assert rep.refuted
    image = rep.sub_reports[0]
    assert image.refuted and image.witness.s == (1.0,)


def test_certify_assumptions_empty_set():
    with pytest.raises(NlppError):
        certify_assumptions(program("s", ["1 + s^2"]), PLAN)


def test_local_search_converges():
    P = program("(s - 0.3)^2", lo=0.0, hi=1.0)
    r = local_search(P, [0.9], 0.25)
    assert abs(r.minimizer[0] - 0.3) < 1e-7
    assert r.radius < 1e-8
    at = local_search(P, [0.3], 0.25)
    assert at.minimizer == (0.3,)
    flat = local_search(program("5"), [1.0], 0.5)
    assert flat.minimizer == (1.0,) and flat.value == 5.0


def test_local_search_respects_constraints():
    P = program("-s", ["s - 0.7"])
    r = local_search(P, [0.0], 1.0)
    assert r.minimizer[0] <= 0.7 and r.minimizer[0] > 0.7 - 1e-7
    with pytest.raises(NlppError):
        local_search(P, [1.0], 1.0)


def test_dense_scan_clusters():
    summary, feas = dense_scan(program("(s^2 - 1)^2"), 2001)
    assert summary.best == 0.0 and summary.clusters == 2
    assert summary.points % 2 == 1 and len(feas) == summary.feasible


def test_solve_certified_fixture():
    P = load_builtin("nlpp_certified").nlpp
    res = solve(P, SamplingPlan())
    assert res.assumptions_certified and res.status == "solved" and res.exit_code() == 0
    assert res.starts_used == 32
    assert all(abs(r.value - res.global_scan_best) <= 1e-6 for r in res.start_results)
    assert res.feasibility_residual <= 0.0


def test_solve_control_fixture():
    P = load_builtin("nlpp_control").nlpp
    res = solve(P, SamplingPlan())
    assert not res.assumptions_certified and res.status == "solved"
    ends = sorted({round(r.minimizer[0], 6) for r in res.start_results})
    assert ends[0] < -0.5 and ends[-1] > 0.5
    assert any("no global assertion" in n for n in res.notes)


def test_solve_single_point_set():
    P = program("s^2", ["s^2 - 0"], E="0*s")
    res = solve(P, PLAN, n_starts=4, scan_points=SCAN)
    assert res.minimizer == (0.0,) and res.value == 0.0


def test_solve_deterministic():
    P = load_builtin("nlpp_certified").nlpp
    a = solve(P, PLAN, n_starts=8, scan_points=SCAN).to_dict()
    b = solve(P, PLAN, n_starts=8, scan_points=SCAN).to_dict()
    c = solve(P, PLAN, n_starts=8, scan_points=SCAN, workers=3).to_dict()
    assert a == b == c


def test_solve_flags_stuck_start_when_assumptions_claimed():
    P = load_builtin("nlpp_control").nlpp
    fake = certify_assumptions(load_builtin("nlpp_certified").nlpp, PLAN)
    P2 = NlppProblem(ScalarFn.parse("(s^2 - 1)^2 + 0.1*s", ["s"]), (), P.E, P.Psi, P.box)
    res = solve(P2, PLAN, n_starts=16, assumptions=fake, scan_points=SCAN)
    assert res.status == Status.THEOREM_VIOLATION.value and res.exit_code() == 3


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-3, 3), b=st.floats(-1.5, 1.5))
def test_minimizer_always_feasible(c, b):
    P = program(f"(s - ({c}))^2", [f"s - ({b})"])
    res = solve(P, PLAN, n_starts=4, scan_points=2001)
    assert res.feasibility_residual <= 0.0
    assert res.minimizer[0] <= b
    assert abs(res.minimizer[0] - min(max(c, -2.0), b)) < 1e-6
