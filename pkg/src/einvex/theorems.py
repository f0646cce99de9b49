"""Closure and implication results run as property suites.

A suite first re-checks its hypotheses on the plan, then checks the
conclusion on the same plan.  Outcomes:

* hypotheses not all certified -> ``PRECONDITION_FAILED`` (the suite refuses)
* hypotheses certified, conclusion certified -> ``CERTIFIED``
* hypotheses certified, conclusion refuted -> ``THEOREM_VIOLATION``: either a
  sampling gap, an implementation bug, or a false statement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .classifiers import (
    ProblemTriple,
    _gradient_terms,
    check_condition_a,
    check_psei,
    check_qsei,
    check_qsep,
    check_sei,
    check_sep,
    run_property,
)
from .expr import MapE, MapPsi, ScalarFn
from .sampling import (
    current_tol,
    CertReport,
    KernelOut,
    SampleError,
    SamplingPlan,
    Status,
    build_quadruples,
    report_from_scan,
    sample_points,
    scan,
    violation_tol,
)
from .sets import Box, SetSpec

HOMOGENEITY_FACTORS = (0.5, 1.0, 2.0, 10.0)
HOMOGENEITY_SAMPLES = 50
MONOTONE_PAIRS = 200


@dataclass(frozen=True)
class FamilySpec:
    """Members h_j with optional weights a_j >= 0 and optional outer g."""

    members: tuple[ScalarFn, ...]
    weights: tuple[float, ...] | None = None
    outer: ScalarFn | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("family needs at least one member")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.members):
                raise ValueError("one weight per member required")
            if any(x < 0 for x in w):
                raise ValueError(f"weights must be non-negative, got {w}")
            object.__setattr__(self, "weights", w)
        if self.outer is not None and self.outer.dim != 1:
            raise ValueError("outer function g must be univariate")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"h_{j + 1}" for j in range(len(self.members))))


@dataclass(frozen=True)
class BivariateFn:
    """F(s, t) on R^n x R^n, stored as a function of the 2n-vector (s, t)."""

    F: ScalarFn

    @property
    def half_dim(self) -> int:
        if self.F.dim % 2:
            raise ValueError("bivariate function needs an even number of variables")
        return self.F.dim // 2


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _hyp(label: str, fn: Callable[[], CertReport]) -> CertReport:
    try:
        rep = fn()
    except SampleError as exc:
        return CertReport(label, Status.PRECONDITION_FAILED, 0, current_tol(), None, message=str(exc))
    rep.property = label
    return rep


def _finish(name: str, plan: SamplingPlan, hyps: list[CertReport],
            conclusion: Callable[[], CertReport], label: str, notes: Sequence[str] = ()) -> CertReport:
    bad = [r for r in hyps if not r.certified]
    total = sum(r.samples_checked for r in hyps)
    if bad:
        return CertReport(name, Status.PRECONDITION_FAILED, total, current_tol(), plan,
                          witness=bad[0].witness, sub_reports=list(hyps), notes=list(notes),
                          message="hypothesis not certified: " + ", ".join(r.property for r in bad)
                          + (f" ({bad[0].message})" if bad[0].message else ""))
    concl = _hyp(label, conclusion)
    subs = list(hyps) + [concl]
    total += concl.samples_checked
    if concl.certified:
        return CertReport(name, Status.CERTIFIED, total, current_tol(), plan, sub_reports=subs, notes=list(notes))
    return CertReport(name, Status.THEOREM_VIOLATION, total, current_tol(), plan, witness=concl.witness,
                      sub_reports=subs, notes=list(notes),
                      message=f"hypotheses certified but {label} failed: sampling gap, bug, "
                              "or the statement does not hold")


def _point_check(label: str, P: ProblemTriple, plan: SamplingPlan, mode: str,
                 kernel: Callable, alpha: float | None = None) -> CertReport:
    if alpha is not None:
        plan = plan.pinned(alpha)
    q = build_quadruples(P.S, plan, mode)
    return report_from_scan(label, scan(q, kernel), plan)


def _nonnegative(P: ProblemTriple, h: ScalarFn, plan: SamplingPlan, label: str) -> CertReport:
    """h >= 0 at sampled points and at their E-images."""
    def k(s, t, a, l):
        vals = np.minimum(h(s), h(P.E(s)))
        zero = np.zeros_like(vals)
        return KernelOut(zero, vals, -vals, -vals > violation_tol(vals, zero))
    return _point_check(label, P, plan, "point", k)


def _image_order(P: ProblemTriple, plan: SamplingPlan) -> CertReport:
    """h(Es) <= h(Et) on every sampled pair."""
    def k(s, t, a, l):
        hs, ht = P.h(P.E(s)), P.h(P.E(t))
        margin = hs - ht
        return KernelOut(hs, ht, margin, margin > violation_tol(hs, ht))
    return _point_check("h(Es) <= h(Et) for all s, t", P, plan, "pair_alpha", k, alpha=0.0)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def verify_shift_property(P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    """QSEP  =>  h(alpha t + E t) <= h(E t)."""
    hyps = [_hyp("qsep", lambda: check_qsep(P, plan, workers))]
    return _finish("shift", plan, hyps, lambda: run_property("shift", P, plan, workers),
                   "h(alpha t + Et) <= h(Et)")


def _weighted_sum(fam: FamilySpec) -> ScalarFn:
    members, weights = fam.members, fam.weights or (1.0,) * len(fam.members)

    def fn(X):
        acc = np.zeros(X.shape[0])
        for w, m in zip(weights, members):
            acc = acc + w * m(X)
        return acc
    src = " + ".join(f"{w!r}*({m.source})" for w, m in zip(weights, members))
    return ScalarFn(fn, members[0].dim, src)


def verify_linear_combination(fam: FamilySpec, base: ProblemTriple, plan: SamplingPlan,
                              workers: int = 1) -> CertReport:
    """Non-negative QSEP members, a_j >= 0  =>  sum a_j h_j QSEP."""
    hyps = []
    for name, m in zip(fam.names, fam.members):
        Pm = base.with_h(m)
        hyps.append(_hyp(f"{name} qsep", lambda Pm=Pm: check_qsep(Pm, plan, workers)))
        hyps.append(_hyp(f"{name} nonnegative", lambda Pm=Pm, m=m: _nonnegative(Pm, m, plan, "")))
    combo = base.with_h(_weighted_sum(fam))
    return _finish("linear_combination", plan, hyps, lambda: check_qsep(combo, plan, workers),
                   "sum a_j h_j qsep")


def _pointwise_max(fam: FamilySpec) -> ScalarFn:
    def fn(X):
        acc = fam.members[0](X)
        for m in fam.members[1:]:
            acc = np.maximum(acc, m(X))
        return acc
    return ScalarFn(fn, fam.members[0].dim, "max(" + ", ".join(str(m.source) for m in fam.members) + ")")


def verify_sup_family(fam: FamilySpec, base: ProblemTriple, plan: SamplingPlan,
                      workers: int = 1) -> CertReport:
    """All members QSEP  =>  pointwise sup QSEP (finite family)."""
    hyps = [
        _hyp(f"{name} qsep", lambda Pm=base.with_h(m): check_qsep(Pm, plan, workers))
        for name, m in zip(fam.names, fam.members)
    ]
    sup = base.with_h(_pointwise_max(fam))
    return _finish("sup_family", plan, hyps, lambda: check_qsep(sup, plan, workers), "sup h_i qsep",
                   notes=[f"finite family of {len(fam.members)} stands in for an arbitrary index set"])


def check_outer_function(g: ScalarFn, plan: SamplingPlan, scale: float = 10.0) -> CertReport:
    """Spot checks: g(c x) = c g(x) for c in {0.5, 1, 2, 10}; g non-decreasing."""
    rng = np.random.default_rng(plan.seed)
    xs = np.concatenate([[0.0], rng.uniform(-scale, scale, HOMOGENEITY_SAMPLES - 1)])
    checked = 0
    for c in HOMOGENEITY_FACTORS:
        lhs = g((c * xs).reshape(-1, 1))
        rhs = c * g(xs.reshape(-1, 1))
        checked += len(xs)
        bad = np.abs(lhs - rhs) > violation_tol(lhs, rhs)
        if bad.any():
            i = int(np.argmax(bad))
            return CertReport("outer g positively homogeneous", Status.REFUTED, checked, current_tol(), plan,
                              violations=int(bad.sum()),
                              message=f"g({c}*{float(xs[i])!r}) = {float(lhs[i])!r} != {c}*g({float(xs[i])!r}) = {float(rhs[i])!r}")
    pairs = np.sort(rng.uniform(-scale, scale, (MONOTONE_PAIRS, 2)), axis=1)
    gx, gy = g(pairs[:, :1]), g(pairs[:, 1:])
    bad = gx > gy + violation_tol(gx, gy)
    checked += MONOTONE_PAIRS
    if bad.any():
        i = int(np.argmax(bad))
        return CertReport("outer g non-decreasing", Status.REFUTED, checked, current_tol(), plan,
                          violations=int(bad.sum()),
                          message=f"x={float(pairs[i, 0])!r} <= y={float(pairs[i, 1])!r} but g(x)={float(gx[i])!r} > g(y)={float(gy[i])!r}")
    return CertReport("outer g spot checks", Status.CERTIFIED, checked, current_tol(), plan)


def verify_composition(fam: FamilySpec, base: ProblemTriple, plan: SamplingPlan,
                       workers: int = 1) -> CertReport:
    """h QSEP, g positively homogeneous and non-decreasing  =>  g o h QSEP."""
    if fam.outer is None:
        raise ValueError("composition needs an outer function g")
    g = fam.outer
    h = fam.members[0]
    pts = sample_points(base.S, plan).all
    scale = max(1.0, float(np.max(np.abs(h(pts)))) if len(pts) else 1.0)
    spot = check_outer_function(g, plan, scale)
    if not spot.certified:
        return CertReport("composition", Status.PRECONDITION_FAILED, spot.samples_checked, current_tol(), plan,
                          sub_reports=[spot], message=spot.message)
    hyps = [spot, _hyp(f"{fam.names[0]} qsep", lambda: check_qsep(base.with_h(h), plan, workers))]
    gh = ScalarFn(lambda X: g(h(X).reshape(-1, 1)), h.dim, f"g({h.source})")
    return _finish("composition", plan, hyps, lambda: check_qsep(base.with_h(gh), plan, workers),
                   "g o h qsep")


def verify_sep_implies_qsep(P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    """SEP and h(Es) <= h(Et) for all s, t  =>  QSEP.  (The order hypothesis
    forces h o E to be constant on S.)"""
    hyps = [
        _hyp("sep", lambda: check_sep(P, plan, workers)),
        _hyp("h(Es) <= h(Et) for all s, t", lambda: _image_order(P, plan)),
    ]
    return _finish("sep_implies_qsep", plan, hyps, lambda: check_qsep(P, plan, workers), "qsep",
                   notes=["order hypothesis forces h o E constant on S"])


def product_triple(base: ProblemTriple, F: BivariateFn) -> ProblemTriple:
    """(F, E x E, Psi x Psi, S x S) in dimension 2n."""
    n = base.dim
    if F.half_dim != n:
        raise ValueError(f"F has {F.F.dim} variables, expected {2 * n}")
    E, Psi, S = base.E, base.Psi, base.S
    EE = MapE(lambda X: np.concatenate([E(X[:, :n]), E(X[:, n:])], axis=1), 2 * n, f"{E.source} x {E.source}")
    PP = MapPsi(lambda A, B: np.concatenate([Psi(A[:, :n], B[:, :n]), Psi(A[:, n:], B[:, n:])], axis=1),
                2 * n, f"{Psi.source} x {Psi.source}")
    preds = []
    for g in S.predicates:
        preds.append(ScalarFn(lambda X, g=g: g(X[:, :n]), 2 * n, g.source))
        preds.append(ScalarFn(lambda X, g=g: g(X[:, n:]), 2 * n, g.source))
    box = Box(S.box.lo + S.box.lo, S.box.hi + S.box.hi)
    SS = SetSpec(box, tuple(preds), S.bounded, S.empty, name="S x S")
    return ProblemTriple(F.F, EE, PP, SS)


def grid_infimum(F: BivariateFn, T: np.ndarray) -> ScalarFn:
    """g(s) = min over rows t of T of F(s, t)."""
    n = F.half_dim
    if T.shape[0] == 0:
        raise ValueError("empty t grid for the infimum")

    def g(X):
        acc = np.full(X.shape[0], np.inf)
        for t in T:
            Y = np.concatenate([X, np.broadcast_to(t, (X.shape[0], n))], axis=1)
            acc = np.minimum(acc, F.F(Y))
        return acc
    return ScalarFn(g, n, f"min_t {F.F.source}")


def verify_inf_marginal(F: BivariateFn, base: ProblemTriple, t_grid: SamplingPlan, plan: SamplingPlan,
                        workers: int = 1) -> CertReport:
    """F quasi strongly ExE-preinvex w.r.t. Psi x Psi  =>  inf_t F(., t) QSEP."""
    PF = product_triple(base, F)
    pplan = replace(plan, anchors=())  # anchors live in S, not S x S
    hyps = [_hyp("F qsep on S x S", lambda: check_qsep(PF, pplan, workers))]
    T = sample_points(base.S, t_grid).all
    g = grid_infimum(F, T)
    return _finish("inf_marginal", plan, hyps, lambda: check_qsep(base.with_h(g), plan, workers),
                   "inf_t F(., t) qsep",
                   notes=[f"g is a grid infimum over {T.shape[0]} t-points of the box; "
                          "grid resolution plays the role of epsilon"])


def verify_sei_implies_qsei(P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    hyps = [
        _hyp("sei", lambda: check_sei(P, plan, workers)),
        _hyp("h(Es) <= h(Et) for all s, t", lambda: _image_order(P, plan)),
    ]
    return _finish("sei_implies_qsei", plan, hyps, lambda: check_qsei(P, plan, workers), "qsei")


def verify_sei_conda_implies_sep(P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    """Differentiable SEI + Condition A  =>  SEP."""
    hyps = [
        _hyp("sei", lambda: check_sei(P, plan, workers)),
        _hyp("condition_a", lambda: check_condition_a(P, plan, workers)),
    ]
    return _finish("sei_conda_implies_sep", plan, hyps, lambda: check_sep(P, plan, workers), "sep")


def _dot_nonnegative(P: ProblemTriple, plan: SamplingPlan) -> CertReport:
    def k(s, t, a, l):
        dot, _, _ = _gradient_terms(P, s, t, a)
        zero = np.zeros_like(dot)
        return KernelOut(zero, dot, -dot, -dot > violation_tol(dot, zero))
    return _point_check("grad h(Et) . Psi >= 0", P, plan, "pair_alpha", k)


def verify_sei_nonneg_dot_implies_psei(P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    hyps = [
        _hyp("sei", lambda: check_sei(P, plan, workers)),
        _hyp("grad h(Et) . Psi >= 0", lambda: _dot_nonnegative(P, plan)),
    ]
    return _finish("sei_nonneg_dot_implies_psei", plan, hyps, lambda: check_psei(P, plan, workers), "psei")


__all__ = [
    "FamilySpec",
    "BivariateFn",
    "verify_shift_property",
    "verify_linear_combination",
    "verify_sup_family",
    "verify_composition",
    "verify_sep_implies_qsep",
    "verify_inf_marginal",
    "verify_sei_implies_qsei",
    "verify_sei_conda_implies_sep",
    "verify_sei_nonneg_dot_implies_psei",
    "check_outer_function",
    "product_triple",
    "grid_infimum",
]
