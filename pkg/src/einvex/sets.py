"""Domain sets and set-level checks (strong E-invexity, E(S) in S, level sets)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

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
    scan,
    violation_tol,
)

if TYPE_CHECKING:
    from .classifiers import ProblemTriple


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be non-empty and of equal length")
        for a, b in zip(lo, hi):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ValueError("box bounds must be finite")
            if a > b:
                raise ValueError(f"empty box axis [{a}, {b}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "Box":
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def pairs(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self.lo, self.hi)]


@dataclass(frozen=True)
class SetSpec:
    """S = {p in box : g_k(p) <= 0 for all k}.

    With ``bounded=False`` the box only bounds *sampling*: the set itself is
    {p in R^n : g_k(p) <= 0}, so combination points may leave the box without
    leaving S.  Certification is then relative to samples drawn from the box.
    """

    box: Box
    predicates: tuple[ScalarFn, ...] = ()
    bounded: bool = True
    empty: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        for g in self.predicates:
            if g.dim != self.box.dim:
                raise ValueError(f"predicate {g} has dimension {g.dim}, box has {self.box.dim}")

    @property
    def dim(self) -> int:
        return self.box.dim

    def slack(self, X: np.ndarray) -> KernelOut:
        """Worst constraint at each row: lhs <= rhs is required."""
        X = np.asarray(X, dtype=float)
        n_rows = X.shape[0]
        best_lhs = np.full(n_rows, -np.inf)
        best_rhs = np.zeros(n_rows)
        best_excess = np.full(n_rows, -np.inf)
        comps = []
        if self.bounded:
            for i in range(self.dim):
                lo = np.full(n_rows, self.box.lo[i])
                hi = np.full(n_rows, self.box.hi[i])
                comps.append((lo, X[:, i]))
                comps.append((X[:, i], hi))
        zero = np.zeros(n_rows)
        for g in self.predicates:
            comps.append((g(X), zero))
        for lhs, rhs in comps:
            excess = (lhs - rhs) - violation_tol(lhs, rhs)
            take = excess > best_excess
            best_excess = np.where(take, excess, best_excess)
            best_lhs = np.where(take, lhs, best_lhs)
            best_rhs = np.where(take, rhs, best_rhs)
        if not comps:
            best_lhs = np.zeros(n_rows)
        violated = best_excess > 0
        if self.empty:
            violated = np.ones(n_rows, dtype=bool)
            best_lhs = np.where(np.isfinite(best_lhs), best_lhs, 1.0)
        return KernelOut(best_lhs, best_rhs, best_lhs - best_rhs, violated)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.dim:
            raise ValueError(f"point dimension {X.shape[1]} != set dimension {self.dim}")
        return ~self.slack(X).violated


def is_member(S: SetSpec, p) -> bool:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (S.dim,):
        raise ValueError(f"point dimension {p.shape[0]} != set dimension {S.dim}")
    return bool(S.contains(p.reshape(1, -1))[0])


def intersect(S1: SetSpec, S2: SetSpec) -> SetSpec:
    if S1.dim != S2.dim:
        raise ValueError(f"cannot intersect sets of dimension {S1.dim} and {S2.dim}")
    lo = tuple(max(a, b) for a, b in zip(S1.box.lo, S2.box.lo))
    hi = tuple(min(a, b) for a, b in zip(S1.box.hi, S2.box.hi))
    preds = S1.predicates + S2.predicates
    bounded = S1.bounded or S2.bounded
    if any(a > b for a, b in zip(lo, hi)):
        if bounded:
            return SetSpec(S1.box, preds, True, empty=True, name="empty")
        # unbounded sets: the boxes only bound sampling, so sample over the hull
        lo = tuple(min(a, b) for a, b in zip(S1.box.lo, S2.box.lo))
        hi = tuple(max(a, b) for a, b in zip(S1.box.hi, S2.box.hi))
    return SetSpec(Box(lo, hi), preds, bounded, S1.empty or S2.empty)


def sublevel_set(h: ScalarFn, r: float, universe: SetSpec) -> SetSpec:
    """K_r = {s in universe : h(s) <= r}."""
    r = float(r)
    g = ScalarFn(lambda X: h(X) - r, h.dim, f"({h.source}) - {r!r}" if h.source else None)
    return SetSpec(universe.box, universe.predicates + (g,), universe.bounded, universe.empty,
                   name=f"K_{r!r}")


# ---------------------------------------------------------------------------
# Set checks
# ---------------------------------------------------------------------------

def combination_point(E: MapE, Psi: MapPsi, s, t, alpha, lam) -> np.ndarray:
    """alpha t + E t + lambda Psi(alpha s + E s, alpha t + E t), row-wise."""
    a = alpha[:, None]
    u = a * s + E(s)
    v = a * t + E(t)
    return v + lam[:, None] * Psi(u, v)


def _membership_kernel(S: SetSpec, point_fn):
    def kernel(s, t, a, l):
        return S.slack(point_fn(s, t, a, l))
    return kernel


def _check_dims(S: SetSpec, *maps):
    for m in maps:
        if m is not None and m.dim != S.dim:
            raise ValueError(f"{m} has dimension {m.dim}, set has {S.dim}")


def sei_kernel(S: SetSpec, E: MapE, Psi: MapPsi):
    return _membership_kernel(S, lambda s, t, a, l: combination_point(E, Psi, s, t, a, l))


def image_kernel(S: SetSpec, E: MapE):
    return _membership_kernel(S, lambda s, t, a, l: E(s))


def _notes(S: SetSpec) -> list[str]:
    if S.bounded:
        return [f"sampled on box {S.box.pairs()}"]
    return [f"set extends beyond its box; s, t sampled on box {S.box.pairs()}"]


def check_strongly_e_invex(S: SetSpec, E: MapE, Psi: MapPsi, plan: SamplingPlan,
                           workers: int = 1) -> CertReport:
    """Refuted iff some sampled combination point falls outside S."""
    _check_dims(S, E, Psi)
    q = build_quadruples(S, plan, "quad")
    res = scan(q, sei_kernel(S, E, Psi), workers)
    name = "e_invex_set" if plan.alpha_pinned == 0.0 else "sei_set"
    return report_from_scan(name, res, plan, notes=_notes(S))


def check_e_invex(S: SetSpec, E: MapE, Psi: MapPsi, plan: SamplingPlan, workers: int = 1) -> CertReport:
    return check_strongly_e_invex(S, E, Psi, plan.pinned(0.0), workers)


def check_e_image_subset(S: SetSpec, E: MapE, plan: SamplingPlan, workers: int = 1) -> CertReport:
    _check_dims(S, E)
    q = build_quadruples(S, plan, "point")
    res = scan(q, image_kernel(S, E), workers)
    return report_from_scan("e_image_subset", res, plan, notes=_notes(S))


def _stage_failed(report: CertReport) -> bool:
    return report.status is not Status.CERTIFIED


def check_levelsets_imply_qsep(h: ScalarFn, S: SetSpec, E: MapE, Psi: MapPsi,
                               r_values: Sequence[float], plan: SamplingPlan,
                               workers: int = 1) -> CertReport:
    """Level sets K_r all SEI  =>  h QSEP, run on one plan.

    Stages: S SEI (needed for the QSEP check to make sense), every K_r SEI,
    then h QSEP.  All K_r SEI with QSEP refuted is a theorem violation.
    """
    from .classifiers import ProblemTriple, check_qsep

    if not r_values:
        raise ValueError("r_values must be non-empty")
    base = check_strongly_e_invex(S, E, Psi, plan, workers)
    base.property = "S sei_set"
    subs = [base]
    if _stage_failed(base):
        return CertReport("levelsets_imply_qsep", Status.PRECONDITION_FAILED, base.samples_checked,
                          current_tol(), plan, witness=base.witness, sub_reports=subs,
                          message="S is not strongly E-invex on samples; QSEP stage not run")
    failing = []
    for r in r_values:
        rep = check_strongly_e_invex(sublevel_set(h, r, S), E, Psi, plan, workers)
        rep.property = f"K_{float(r)!r} sei_set"
        subs.append(rep)
        if _stage_failed(rep):
            failing.append(rep)
    qsep = check_qsep(ProblemTriple(h, E, Psi, S), plan, workers)
    subs.append(qsep)
    total = sum(r.samples_checked for r in subs)
    if failing:
        first = failing[0]
        msg = "failing stage(s): " + ", ".join(r.property for r in failing)
        if not qsep.certified:
            msg += "; qsep refuted"
        return CertReport("levelsets_imply_qsep", Status.REFUTED, total, current_tol(), plan,
                          witness=first.witness, sub_reports=subs, message=msg)
    if not qsep.certified:
        return CertReport("levelsets_imply_qsep", Status.THEOREM_VIOLATION, total, current_tol(), plan,
                          witness=qsep.witness, sub_reports=subs,
                          message="all level sets SEI but h refuted QSEP: sampling gap or bug")
    return CertReport("levelsets_imply_qsep", Status.CERTIFIED, total, current_tol(), plan, sub_reports=subs)


def qsep_sublevel_sei(h_list: Sequence[ScalarFn], E: MapE, Psi: MapPsi, universe: SetSpec,
                      plan: SamplingPlan, workers: int = 1) -> CertReport:
    """QSEP constraints with E(S) in S  =>  S = {h_j <= 0 for all j} is SEI."""
    from .classifiers import ProblemTriple, check_qsep

    name = "qsep_sublevel_sei"
    subs = []
    uni = check_strongly_e_invex(universe, E, Psi, plan, workers)
    uni.property = "universe sei_set"
    subs.append(uni)
    if uni.certified:
        for j, h in enumerate(h_list):
            rep = check_qsep(ProblemTriple(h, E, Psi, universe), plan, workers)
            rep.property = f"h_{j + 1} qsep"
            subs.append(rep)
    S = universe
    for h in h_list:
        S = sublevel_set(h, 0.0, S)
    image = check_e_image_subset(S, E, plan, workers)
    subs.append(image)
    total = sum(r.samples_checked for r in subs)
    bad = [r for r in subs if not r.certified]
    if bad:
        return CertReport(name, Status.PRECONDITION_FAILED, total, current_tol(), plan,
                          witness=bad[0].witness, sub_reports=subs,
                          message="hypothesis not certified: " + ", ".join(r.property for r in bad))
    concl = check_strongly_e_invex(S, E, Psi, plan, workers)
    concl.property = "S sei_set"
    subs.append(concl)
    total += concl.samples_checked
    if not concl.certified:
        return CertReport(name, Status.THEOREM_VIOLATION, total, current_tol(), plan,
                          witness=concl.witness, sub_reports=subs,
                          message="hypotheses certified but S refuted SEI: sampling gap or bug")
    return CertReport(name, Status.CERTIFIED, total, current_tol(), plan, sub_reports=subs)


__all__ = [
    "Box",
    "SetSpec",
    "SampleError",
    "is_member",
    "intersect",
    "sublevel_set",
    "combination_point",
    "check_strongly_e_invex",
    "check_e_invex",
    "check_e_image_subset",
    "check_levelsets_imply_qsep",
    "qsep_sublevel_sei",
]
