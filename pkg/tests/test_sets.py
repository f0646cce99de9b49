import itertools

import numpy as np
import pytest

from einvex.expr import MapE, MapPsi, ScalarFn
from einvex.sampling import SamplingPlan, Status
from einvex.sets import (
    Box,
    SetSpec,
    check_e_image_subset,
    check_e_invex,
    check_levelsets_imply_qsep,
    check_strongly_e_invex,
    combination_point,
    intersect,
    is_member,
    qsep_sublevel_sei,
    sublevel_set,
)
from conftest import interval

ID = MapE.identity(1)
DIFF = MapPsi.difference(1)
NEG = MapE.parse("-s", ["s"])


def quadrant(lo, hi, preds):
    return SetSpec(Box((lo, lo), (hi, hi)), tuple(ScalarFn.parse(p, ["s", "t"]) for p in preds), bounded=False)


def test_membership_examples():
    third = quadrant(-2.0, 0.0, ["s", "t"])
    assert is_member(third, (-1.0, -1.0))
    assert not is_member(third, (1.0, 1.0))
    first = quadrant(0.0, 2.0, ["-s", "-t"])
    assert is_member(first, (0.0, 0.0))
    with pytest.raises(ValueError):
        is_member(first, (0.0,))


def test_box_validation():
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))
    with pytest.raises(ValueError):
        Box((0.0,), (float("inf"),))


def test_membership_tolerance_on_boundary():
    S = interval(0, 1)
    assert is_member(S, (1.0 + 1e-12,))
    assert not is_member(S, (1.0 + 1e-6,))


def test_third_quadrant_is_sei():
    S = quadrant(-2.0, 0.0, ["s", "t"])
    E = MapE.parse("[0, t]", ["s", "t"])
    rep = check_strongly_e_invex(S, E, MapPsi.difference(2), SamplingPlan(grid_per_axis=11, random_pairs=200))
    assert rep.status is Status.CERTIFIED


def _max_combination_oracle(lo, hi, k=21):
    # plain loops: E = id, Psi = a - b
    grid = [lo + (hi - lo) * i / (k - 1) for i in range(k)]
    best = -float("inf")
    for s, t, a, l in itertools.product(grid, grid, (0, 0.25, 0.5, 0.75, 1), (0, 0.25, 0.5, 0.75, 1)):
        u, v = a * s + s, a * t + t
        best = max(best, v + l * (u - v))
    return best


def test_interval_not_sei_with_identity():
    S = interval(1, 2)
    rep = check_strongly_e_invex(S, ID, DIFF, SamplingPlan())
    assert rep.status is Status.REFUTED
    w = rep.witness
    p = combination_point(ID, DIFF, np.array([w.s]), np.array([w.t]), np.array([w.alpha]), np.array([w.lam]))
    assert p[0, 0] == _max_combination_oracle(1.0, 2.0) == 4.0
    # ties are broken by sample index; every maximizer has alpha = 1 and t = 2
    assert w.alpha == 1.0 and w.t == (2.0,)
    assert w.margin == 2.0


def test_alpha_zero_reduction_matches_e_invex():
    S = interval(1, 2)
    plan = SamplingPlan(grid_per_axis=11, random_pairs=100)
    a = check_strongly_e_invex(S, ID, DIFF, plan.pinned(0.0))
    b = check_e_invex(S, ID, DIFF, plan)
    assert a.to_dict() == b.to_dict()
    assert a.status is Status.CERTIFIED


def test_image_subset_examples():
    plan = SamplingPlan()
    assert check_e_image_subset(interval(0, 2), MapE.parse("abs(s)", ["s"]), plan).certified
    rep = check_e_image_subset(interval(-2, 0), MapE.parse("-s^2", ["s"]), plan)
    assert rep.status is Status.REFUTED
    assert rep.witness.s == (-2.0,)
    assert rep.witness.rhs == -4.0  # lower face: lo <= E(s) fails with E(-2) = -4
    assert check_e_image_subset(interval(1, 2), MapE.parse("0", ["s"]), plan).refuted


def test_intersection():
    S = intersect(interval(-1, 1), interval(0, 2))
    assert S.box.lo == (0.0,) and S.box.hi == (1.0,)
    empty = intersect(interval(0, 1), interval(2, 3))
    assert empty.empty
    assert not empty.contains(np.linspace(-5, 5, 41).reshape(-1, 1)).any()


def test_intersection_of_sei_sets_is_sei():
    plan = SamplingPlan(grid_per_axis=11, random_pairs=100)
    A, B = interval(-1, 1), interval(-1, 0.5)
    # E = -s/2 keeps combination points between (alpha - 1/2) s and (alpha - 1/2) t
    E = MapE.parse("-s/2", ["s"])
    assert check_strongly_e_invex(A, E, DIFF, plan).certified
    assert check_strongly_e_invex(B, E, DIFF, plan).certified
    assert check_strongly_e_invex(intersect(A, B), E, DIFF, plan).certified


def test_sublevel_set_matches_analytic():
    h = ScalarFn.parse("s^2", ["s"])
    K = sublevel_set(h, 1.0, interval(-2, 2))
    xs = np.linspace(-2, 2, 401).reshape(-1, 1)
    assert np.array_equal(K.contains(xs), np.abs(xs[:, 0]) <= 1.0)


def test_sublevel_extremes_and_monotonicity():
    h = ScalarFn.parse("s^3 - s", ["s"])
    U = interval(-2, 2)
    xs = np.linspace(-2, 2, 21).reshape(-1, 1)
    vals = h(xs)
    assert sublevel_set(h, vals.max(), U).contains(xs).all()
    assert not sublevel_set(h, vals.min() - 1, U).contains(xs).any()
    prev = np.zeros(len(xs), bool)
    for r in np.linspace(vals.min(), vals.max(), 9):
        cur = sublevel_set(h, r, U).contains(xs)
        assert np.all(prev <= cur)
        prev = cur


def test_levelsets_example_one(ex1):
    # K_0.5 = [-0.5, 0] is not SEI under E = |s|: t = -0.5 maps to 0.5
    rep = check_levelsets_imply_qsep(ex1.h, ex1.S, ex1.E, ex1.Psi, ex1.r_values, ex1.plan)
    assert rep.status is Status.REFUTED
    failed = [r.property for r in rep.sub_reports if not r.certified]
    assert any("0.5" in name for name in failed)
    qsep = [r for r in rep.sub_reports if r.property == "qsep"]
    assert qsep and qsep[0].certified


def test_levelsets_example_two_qsep_stage(ex2):
    rep = check_levelsets_imply_qsep(ex2.h, ex2.S, ex2.E, ex2.Psi, (0.0, 1.0, 2.0), ex2.plan)
    qsep = [r for r in rep.sub_reports if r.property == "qsep"][0]
    assert qsep.refuted


def test_levelsets_constant_function():
    S = interval(-1, 1)
    h = ScalarFn.parse("3", ["s"])
    rep = check_levelsets_imply_qsep(h, S, NEG, DIFF, (0.0, 3.0, 5.0), SamplingPlan(grid_per_axis=11))
    assert rep.status is Status.CERTIFIED


def test_qsep_sublevel_single_and_pair():
    U = interval(-2, 2)
    plan = SamplingPlan(grid_per_axis=11, random_pairs=200)
    one = [ScalarFn.parse("s^2 - 1", ["s"])]
    assert qsep_sublevel_sei(one, NEG, DIFF, U, plan).status is Status.CERTIFIED
    two = one + [ScalarFn.parse("abs(s) - 0.5", ["s"])]
    assert qsep_sublevel_sei(two, NEG, DIFF, U, plan).status is Status.CERTIFIED


def test_qsep_sublevel_trivial_function():
    U = interval(-2, 2)
    plan = SamplingPlan(grid_per_axis=11, random_pairs=100)
    rep = qsep_sublevel_sei([ScalarFn.parse("-1", ["s"])], NEG, DIFF, U, plan)
    direct = check_strongly_e_invex(U, NEG, DIFF, plan)
    assert rep.status is direct.status is Status.CERTIFIED


def test_qsep_sublevel_refuses_without_hypotheses():
    U = interval(-2, 2)
    rep = qsep_sublevel_sei([ScalarFn.parse("-s^2", ["s"])], ID, DIFF, U, SamplingPlan(grid_per_axis=11))
    assert rep.status is Status.PRECONDITION_FAILED
    assert rep.exit_code() == 2


def test_set_checks_deterministic_across_workers():
    S = interval(1, 2)
    plan = SamplingPlan()
    a = check_strongly_e_invex(S, ID, DIFF, plan, workers=1).to_dict()
    b = check_strongly_e_invex(S, ID, DIFF, plan, workers=4).to_dict()
    assert a == b


def test_witness_recomputes(ex2):
    rep = check_e_image_subset(interval(-2, 0), MapE.parse("-s^2", ["s"]), SamplingPlan())
    w = rep.witness
    assert -(w.s[0] ** 2) < -2.0
