import numpy as np
import pytest

from einvex.classifiers import ProblemTriple, check_qsep
from einvex.expr import MapE, MapPsi, ScalarFn
from einvex.sampling import SamplingPlan, Status
from einvex.theorems import (
    BivariateFn,
    FamilySpec,
    check_outer_function,
    grid_infimum,
    product_triple,
    verify_composition,
    verify_inf_marginal,
    verify_linear_combination,
    verify_sei_conda_implies_sep,
    verify_sei_implies_qsei,
    verify_sei_nonneg_dot_implies_psei,
    verify_sep_implies_qsep,
    verify_shift_property,
    verify_sup_family,
)
from conftest import interval, triple_1d

PLAN = SamplingPlan()
SMALL = SamplingPlan(grid_per_axis=11, random_pairs=200)
H1 = "if s > 0 then 1 else -s"


def fn(src, var="s"):
    return ScalarFn.parse(src, [var])


def test_family_validation():
    with pytest.raises(ValueError):
        FamilySpec(())
    with pytest.raises(ValueError):
        FamilySpec((fn("s"),), weights=(-1.0,))
    with pytest.raises(ValueError):
        FamilySpec((fn("s"),), weights=(1.0, 2.0))
    with pytest.raises(ValueError):
        FamilySpec((fn("s"),), outer=ScalarFn.parse("x + y", ["x", "y"]))


def test_shift_examples(ex1):
    assert verify_shift_property(ex1.triple(), ex1.plan).status is Status.CERTIFIED
    ident = triple_1d("s^2", -1, 1, bounded=False)
    rep = verify_shift_property(ident, PLAN.pinned(0.0))
    assert rep.status is Status.CERTIFIED
    # h(2t) <= h(t) fails at alpha = 1, but QSEP fails first so the suite refuses
    assert verify_shift_property(ident, PLAN).status is Status.PRECONDITION_FAILED


def test_linear_combination_examples(ex1):
    base = ex1.triple()
    h = fn(H1)
    single = verify_linear_combination(FamilySpec((h,)), base, ex1.plan)
    own = check_qsep(base, ex1.plan)
    assert single.certified and single.sub_reports[-1].samples_checked == own.samples_checked
    zero = verify_linear_combination(FamilySpec((h, h), (0.0, 0.0)), base, ex1.plan)
    assert zero.certified
    two = verify_linear_combination(FamilySpec((h, h), (1.0, 2.0)), base, ex1.plan)
    assert two.certified


def test_linear_combination_counterexample():
    P = triple_1d("0", -2, 2)
    fam = FamilySpec((fn("if s > 0 then 2 else 0"), fn("if s < 1 then 3 else 0")))
    rep = verify_linear_combination(fam, P, PLAN.pinned(0.0))
    assert rep.status is Status.THEOREM_VIOLATION
    assert rep.exit_code() == 3
    assert rep.witness.lhs == 5.0 and rep.witness.rhs == 3.0


def test_linear_combination_needs_nonnegative_members(ex1):
    fam = FamilySpec((fn("-1"),))
    rep = verify_linear_combination(fam, ex1.triple(), SMALL)
    assert rep.status is Status.PRECONDITION_FAILED
    assert "nonnegative" in rep.message


def test_sup_family_examples(ex1, ex2):
    h = fn(H1)
    one = verify_sup_family(FamilySpec((h,)), ex1.triple(), ex1.plan)
    assert one.certified
    two = verify_sup_family(FamilySpec((h, fn("if s > 0 then 2 else -2*s"))), ex1.triple(), ex1.plan)
    assert two.certified
    bad = verify_sup_family(FamilySpec((h,), names=("ex2 h",)), ex2.triple(), ex2.plan)
    assert bad.status is Status.PRECONDITION_FAILED and "ex2 h" in bad.message


def test_outer_function_spot_checks():
    assert check_outer_function(fn("2*x", "x"), PLAN).certified
    assert check_outer_function(fn("max(x, 0)", "x"), PLAN).certified
    rep = check_outer_function(fn("x + 1", "x"), PLAN)
    assert rep.refuted and "g(0.5*0.0)" in rep.message
    assert check_outer_function(fn("-x", "x"), PLAN).refuted


def test_composition_examples(ex1):
    h = fn(H1)
    for g in ("2*x", "max(x, 0)"):
        rep = verify_composition(FamilySpec((h,), outer=fn(g, "x")), ex1.triple(), ex1.plan)
        assert rep.certified, g
    rep = verify_composition(FamilySpec((h,), outer=fn("x + 1", "x")), ex1.triple(), ex1.plan)
    assert rep.status is Status.PRECONDITION_FAILED
    with pytest.raises(ValueError):
        verify_composition(FamilySpec((h,)), ex1.triple(), ex1.plan)


def test_sep_implies_qsep_examples():
    assert verify_sep_implies_qsep(triple_1d("4", -1, 1, bounded=False), SMALL).certified
    rep = verify_sep_implies_qsep(triple_1d("s", -1, 1, bounded=False), SMALL)
    assert rep.status is Status.PRECONDITION_FAILED
    P = triple_1d("abs(s)", -1, 1, E="1 + 0*s")
    rep = verify_sep_implies_qsep(P, SMALL.pinned(0.0))
    assert rep.certified


def test_product_triple_shapes(ex1):
    F = BivariateFn(ScalarFn.parse("max(s, t)", ["s", "t"]))
    PF = product_triple(ex1.triple(), F)
    assert PF.dim == 2 and PF.S.box.lo == (-2.0, -2.0)
    X = np.array([[1.0, -3.0]])
    np.testing.assert_array_equal(PF.E(X), [[1.0, 3.0]])
    with pytest.raises(ValueError):
        product_triple(ex1.triple(), BivariateFn(ScalarFn.parse("s", ["s"])))


def test_grid_infimum():
    F = BivariateFn(ScalarFn.parse("(s - t)^2 + t", ["s", "t"]))
    g = grid_infimum(F, np.array([[0.0], [1.0]]))
    np.testing.assert_array_equal(g(np.array([[0.0], [1.0], [2.0]])), [0.0, 1.0, 2.0])


def test_inf_marginal_examples(ex1):
    tg = SamplingPlan(grid_per_axis=11, random_pairs=0)
    ignore_t = BivariateFn(ScalarFn.parse(H1, ["s", "t"]))
    rep = verify_inf_marginal(ignore_t, ex1.triple(), tg, SMALL)
    assert rep.certified
    pair = BivariateFn(ScalarFn.parse("max(if s > 0 then 1 else -s, if t > 0 then 1 else -t)", ["s", "t"]))
    assert verify_inf_marginal(pair, ex1.triple(), tg, SMALL).certified
    const = BivariateFn(ScalarFn.parse("3", ["s", "t"]))
    assert verify_inf_marginal(const, ex1.triple(), tg, SMALL).certified
    assert any("grid infimum" in n for n in rep.notes)


def test_sei_implies_qsei_examples():
    assert verify_sei_implies_qsei(triple_1d("4", -1, 1, bounded=False), SMALL).certified
    rep = verify_sei_implies_qsei(triple_1d("s", -1, 1, bounded=False), SMALL.pinned(0.0))
    assert rep.status is Status.PRECONDITION_FAILED
    P = triple_1d("abs(s)", -1, 1, E="1 + 0*s")
    assert verify_sei_implies_qsei(P, SMALL).status in (Status.CERTIFIED, Status.PRECONDITION_FAILED)


def test_sei_conda_implies_sep_examples():
    plan = PLAN.pinned(0.0)
    assert verify_sei_conda_implies_sep(triple_1d("s^2", -1, 1), plan).certified
    assert verify_sei_conda_implies_sep(triple_1d("3*s - 2", -1, 1), plan).certified
    rep = verify_sei_conda_implies_sep(triple_1d("s^3", -1, 1), plan)
    assert rep.status is Status.PRECONDITION_FAILED
    assert "sei" in rep.message


def test_sei_nonneg_dot_implies_psei_examples():
    assert verify_sei_nonneg_dot_implies_psei(triple_1d("-4", 0, 1), SMALL).certified
    # h increasing with Psi = |a - b|: the SEI hypothesis already fails for s < t
    P = triple_1d("2*s", 0, 1, Psi="abs(a - b)", bounded=False)
    rep = verify_sei_nonneg_dot_implies_psei(P, SMALL.pinned(0.0))
    assert rep.status is Status.PRECONDITION_FAILED
    neg = verify_sei_nonneg_dot_implies_psei(triple_1d("s", 0, 1), SMALL.pinned(0.0))
    assert neg.status is Status.PRECONDITION_FAILED
    assert any(r.property.startswith("grad") and r.refuted for r in neg.sub_reports)


def test_suites_never_violate_on_fixtures(ex1, ex2):
    plan = SamplingPlan(grid_per_axis=11, random_pairs=200)
    for pf in (ex1, ex2):
        P = pf.triple()
        reps = [
            verify_shift_property(P, plan),
            verify_linear_combination(pf.family, P, plan),
            verify_sup_family(pf.family, P, plan),
            verify_composition(pf.family, P, plan),
        ]
        assert all(r.status is not Status.THEOREM_VIOLATION for r in reps)
