import json

import numpy as np
import pytest

from einvex.sampling import (
    Anchor,
    CertReport,
    SamplingPlan,
    Status,
    Witness,
    axis_grid,
    build_quadruples,
    current_tol,
    effective_grid,
    sample_points,
    tolerance,
    violation_tol,
)
from conftest import interval


def test_plan_always_has_required_values():
    plan = SamplingPlan(alpha_values=(0.3,), lambda_values=())
    assert plan.alpha_values == (0.0, 0.3, 0.5, 1.0)
    assert plan.lambda_values == (0.0, 0.5, 1.0)


def test_plan_validation():
    with pytest.raises(ValueError):
        SamplingPlan(grid_per_axis=1)
    with pytest.raises(ValueError):
        SamplingPlan(random_pairs=-1)
    with pytest.raises(ValueError):
        SamplingPlan(alpha_values=(1.5,))


def test_pinned_alpha():
    plan = SamplingPlan().pinned(0.0)
    assert plan.alphas == (0.0,)


def test_plan_dict_round_trip():
    plan = SamplingPlan(seed=3, anchors=(Anchor.of([0.0], [1.0], 0.5, 0.5),))
    assert SamplingPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan


def test_axis_grid_has_exact_endpoints_and_zero():
    g = axis_grid(-2.0, 2.0, 4)
    assert g[0] == -2.0 and g[-1] == 2.0 and 0.0 in g
    assert len(axis_grid(0.0, 1.0, 5)) == 5


def test_grid_cap_in_high_dimension():
    g = effective_grid([-1.0] * 4, [1.0] * 4, 21)
    assert 0 < len(g) <= 1024


def test_samples_are_reproducible():
    S = interval(-1, 1)
    a, b = sample_points(S, SamplingPlan(seed=5)), sample_points(S, SamplingPlan(seed=5))
    assert np.array_equal(a.all, b.all)
    c = sample_points(S, SamplingPlan(seed=6))
    assert not np.array_equal(a.random, c.random)


def test_samples_are_members():
    S = interval(-1, 1)
    pts = sample_points(S, SamplingPlan(random_pairs=50)).all
    assert S.contains(pts).all()


def test_quadruples_include_diagonal_pairs():
    q = build_quadruples(interval(0, 1), SamplingPlan(grid_per_axis=3, random_pairs=4))
    assert np.any(q.pair_i == q.pair_j)
    assert q.total == len(q.pair_i) * 5 * 5


def test_anchor_outside_set_dropped():
    inside = Anchor.of([0.5], [0.0], 0.0, 0.0)
    plan = SamplingPlan(anchors=(Anchor.of([5.0], [0.0], 0.0, 0.0), inside))
    assert build_quadruples(interval(0, 1), plan).anchors == (inside,)


def test_violation_tolerance_scales():
    assert violation_tol(0.0, 0.0) == pytest.approx(1e-9)
    assert violation_tol(1e6, 0.0) == pytest.approx(1e-3)


def test_tolerance_context():
    assert current_tol() == 1e-9
    with tolerance(1e-6):
        assert current_tol() == 1e-6
    assert current_tol() == 1e-9
    with pytest.raises(ValueError):
        with tolerance(-1.0):
            pass


def test_report_round_trip():
    w = Witness((0.0,), (1.0,), 0.5, 0.5, 1.0, 0.5, 0.5, (0, 0, 0, 0))
    rep = CertReport("sep", Status.REFUTED, 10, 1e-9, SamplingPlan(), witness=w, violations=3,
                     sub_reports=[CertReport("x", Status.CERTIFIED, 2, 1e-9, None)], notes=["n"])
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["witness"]["lambda"] == 0.5
    back = CertReport.from_dict(d)
    assert back.to_dict() == rep.to_dict()


def test_exit_codes():
    assert Status.CERTIFIED.exit_code() == 0
    assert Status.REFUTED.exit_code() == 2
    assert Status.PRECONDITION_FAILED.exit_code() == 2
    assert Status.THEOREM_VIOLATION.exit_code() == 3
