"""The constrained program  min h0(s)  s.t.  h_j(s) <= 0,  s in a box.

``certify_assumptions`` re-checks the structural hypotheses under which every
local minimizer is a strict global one.  ``solve`` runs a derivative-free
multi-start search and compares every start against a dense grid scan; a
start stuck above the scan best while the hypotheses are certified is a
theorem violation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import ndimage
from scipy.stats import qmc

from .classifiers import ProblemTriple, check_qsep, check_strict_qsep
from .expr import MapE, MapPsi, ScalarFn
from .sampling import (
    current_tol,
    CertReport,
    SampleError,
    SamplingPlan,
    Status,
    build_quadruples,
    report_from_scan,
    scan,
)
from .sets import Box, SetSpec, check_e_image_subset, check_strongly_e_invex

GAP_RTOL = 1e-6
STOP_RTOL = 1e-8
SCAN_POINTS = 1_000_000
HALTON_ROUNDS = 64


class NlppError(ValueError):
    """Empty feasible set, infeasible start, or no feasible start found."""


@dataclass(frozen=True)
class NlppProblem:
    objective: ScalarFn
    constraints: tuple[ScalarFn, ...]
    E: MapE
    Psi: MapPsi
    box: Box
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = self.box.dim
        for f in (self.objective, *self.constraints, self.E, self.Psi):
            if f.dim != n:
                raise ValueError(f"{f} has dimension {f.dim}, box has {n}")

    @property
    def dim(self) -> int:
        return self.box.dim


@dataclass
class StartResult:
    start: tuple[float, ...]
    minimizer: tuple[float, ...]
    value: float
    radius: float
    iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "start": list(self.start),
            "minimizer": list(self.minimizer),
            "value": self.value,
            "radius": self.radius,
            "iterations": self.iterations,
        }


@dataclass
class ScanSummary:
    best: float
    argbest: tuple[float, ...]
    points: int
    feasible: int
    clusters: int


@dataclass
class NlppResult:
    minimizer: tuple[float, ...]
    value: float
    feasibility_residual: float
    starts_used: int
    global_scan_best: float
    global_gap: float
    local_ball_radius: float
    start_results: list[StartResult] = field(default_factory=list)
    scan_clusters: int = 0
    assumptions_certified: bool = False
    status: str = "solved"
    assumptions: CertReport | None = None
    notes: list[str] = field(default_factory=list)

    def exit_code(self) -> int:
        return 3 if self.status == Status.THEOREM_VIOLATION.value else 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "property": "nlpp",
            "status": self.status,
            "minimizer": list(self.minimizer),
            "value": self.value,
            "feasibility_residual": self.feasibility_residual,
            "starts_used": self.starts_used,
            "global_scan_best": self.global_scan_best,
            "global_gap": self.global_gap,
            "local_ball_radius": self.local_ball_radius,
            "scan_clusters": self.scan_clusters,
            "assumptions_certified": self.assumptions_certified,
            "assumptions": self.assumptions.to_dict() if self.assumptions else None,
            "starts": [r.to_dict() for r in self.start_results],
            "notes": list(self.notes),
        }

    def summary(self) -> str:
        x = ", ".join(f"{v:.10g}" for v in self.minimizer)
        lines = [
            f"nlpp: {self.status}",
            f"  minimizer ({x})  value {self.value:.12g}",
            f"  scan best {self.global_scan_best:.12g}  gap {self.global_gap:.3g}  "
            f"starts {self.starts_used}  ball radius {self.local_ball_radius:.3g}",
            f"  assumptions certified: {self.assumptions_certified}",
        ]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def feasible_set(P: NlppProblem) -> SetSpec:
    """X = {s in box : h_j(s) <= 0 for all j}."""
    return SetSpec(P.box, P.constraints, bounded=True, name="X")


def _whole_space(P: NlppProblem) -> SetSpec:
    # h_j and h0 are hypothesised QSEP on all of R^n; sample over the box
    return SetSpec(P.box, (), bounded=False, name="R^n")


def _residual(P: NlppProblem, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.zeros(X.shape[0])
    lo, hi = np.asarray(P.box.lo), np.asarray(P.box.hi)
    r = np.maximum(r, np.max(lo - X, axis=1))
    r = np.maximum(r, np.max(X - hi, axis=1))
    for g in P.constraints:
        r = np.maximum(r, g(X))
    return r


def _shift_feasibility(P: NlppProblem, X: SetSpec, plan: SamplingPlan, workers: int) -> CertReport:
    def kernel(s, t, a, l):
        p = a[:, None] * s + P.E(s)
        return X.slack(p)
    q = build_quadruples(X, plan, "point_alpha")
    return report_from_scan("alpha s + Es feasible", scan(q, kernel, workers), plan)


def _guard(label: str, fn) -> CertReport:
    try:
        rep = fn()
    except SampleError as exc:
        return CertReport(label, Status.REFUTED, 0, current_tol(), None, message=str(exc))
    rep.property = label
    return rep


def certify_assumptions(P: NlppProblem, plan: SamplingPlan, workers: int = 1) -> CertReport:
    """Bundle: E(X) in X, X SEI, alpha s + Es feasible, h_j QSEP, h0 strictly QSEP."""
    X = feasible_set(P)
    if not X.contains(_scan_grid(P, plan.grid_per_axis)[0]).any():
        raise NlppError("feasible set is empty on the sample grid")
    R = _whole_space(P)
    subs = [
        _guard("E(X) subset of X", lambda: check_e_image_subset(X, P.E, plan, workers)),
        _guard("X strongly E-invex", lambda: check_strongly_e_invex(X, P.E, P.Psi, plan, workers)),
        _guard("alpha s + Es feasible", lambda: _shift_feasibility(P, X, plan, workers)),
    ]
    for j, g in enumerate(P.constraints, start=1):
        Pj = ProblemTriple(g, P.E, P.Psi, R)
        subs.append(_guard(f"h_{j} qsep", lambda Pj=Pj: check_qsep(Pj, plan, workers)))
    P0 = ProblemTriple(P.objective, P.E, P.Psi, R)
    subs.append(_guard("h_0 strict qsep", lambda: check_strict_qsep(P0, plan, workers)))
    total = sum(r.samples_checked for r in subs)
    failed = [r for r in subs if not r.certified]
    if failed:
        return CertReport("nlpp_assumptions", Status.REFUTED, total, current_tol(), plan,
                          witness=failed[0].witness, sub_reports=subs,
                          message="not certified: " + ", ".join(r.property for r in failed))
    return CertReport("nlpp_assumptions", Status.CERTIFIED, total, current_tol(), plan, sub_reports=subs,
                      notes=["h_j and h_0 checked on R^n, sampled over the box"])


def local_search(P: NlppProblem, start: Sequence[float], step0: float,
                 max_iter: int = 100_000) -> StartResult:
    """Feasibility-preserving compass search.

    Probes +-step along each axis, moves to the best strictly improving
    feasible probe, halves the step otherwise, and stops once the step drops
    below 1e-8 times the box diameter.
    """
    x = np.asarray(start, dtype=float).reshape(1, -1)
    if _residual(P, x)[0] > 0.0:
        raise NlppError(f"infeasible start {tuple(x[0].tolist())}")
    n = P.dim
    dirs = np.concatenate([np.eye(n), -np.eye(n)])
    fx = float(P.objective(x)[0])
    step = float(step0)
    stop = STOP_RTOL * max(P.box.diameter, 1e-300)
    it = 0
    while step >= stop and it < max_iter:
        it += 1
        probes = x + step * dirs
        ok = _residual(P, probes) <= 0.0
        vals = np.full(len(probes), np.inf)
        if ok.any():
            vals[ok] = P.objective(probes[ok])
        k = int(np.argmin(vals))
        if vals[k] < fx:
            x, fx = probes[k:k + 1], float(vals[k])
        else:
            step *= 0.5
    return StartResult(tuple(float(v) for v in start), tuple(x[0].tolist()), fx, step, it)


def _scan_grid(P: NlppProblem, k: int) -> tuple[np.ndarray, tuple[int, ...]]:
    axes = [np.linspace(a, b, k) for a, b in P.box.pairs()]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), tuple(len(a) for a in axes)


def dense_scan(P: NlppProblem, total_points: int = SCAN_POINTS) -> tuple[ScanSummary, np.ndarray]:
    """Evaluate h0 on a grid of about ``total_points`` points; count clusters
    of feasible grid points within tolerance of the best value."""
    k = max(3, int(round(total_points ** (1.0 / P.dim))))
    k += 1 - k % 2
    pts, shape = _scan_grid(P, k)
    feas = _residual(P, pts) <= 0.0
    if not feas.any():
        raise NlppError("feasible set is empty on the scan grid")
    vals = np.full(len(pts), np.inf)
    vals[feas] = P.objective(pts[feas])
    i = int(np.argmin(vals))
    best = float(vals[i])
    near = vals <= best + GAP_RTOL * max(1.0, abs(best))
    _, clusters = ndimage.label(near.reshape(shape))
    summary = ScanSummary(best, tuple(pts[i].tolist()), len(pts), int(feas.sum()), int(clusters))
    return summary, pts[feas]


def feasible_starts(P: NlppProblem, n_starts: int, seed: int, fallback: np.ndarray) -> np.ndarray:
    """Scrambled Halton points of the box that are feasible, topped up with
    evenly spaced feasible scan points."""
    sampler = qmc.Halton(d=P.dim, scramble=True, seed=seed)
    lo, hi = np.asarray(P.box.lo), np.asarray(P.box.hi)
    got: list[np.ndarray] = []
    have = 0
    for _ in range(HALTON_ROUNDS):
        if have >= n_starts:
            break
        cand = lo + (hi - lo) * sampler.random(max(64, 4 * n_starts))
        cand = cand[_residual(P, cand) <= 0.0]
        got.append(cand)
        have += len(cand)
    starts = np.concatenate(got)[:n_starts] if got else np.empty((0, P.dim))
    if len(starts) < n_starts and len(fallback):
        idx = np.linspace(0, len(fallback) - 1, n_starts - len(starts)).round().astype(int)
        starts = np.concatenate([starts, fallback[idx]])
    if len(starts) == 0:
        raise NlppError("no feasible start found")
    return starts


def solve(P: NlppProblem, plan: SamplingPlan, n_starts: int = 32, workers: int = 1,
          assumptions: CertReport | None = None, scan_points: int = SCAN_POINTS) -> NlppResult:
    if assumptions is None:
        assumptions = certify_assumptions(P, plan, workers)
    scan_sum, feasible_pts = dense_scan(P, scan_points)
    starts = feasible_starts(P, n_starts, plan.seed, feasible_pts)
    step0 = 0.25 * float(np.max(np.asarray(P.box.hi) - np.asarray(P.box.lo)))
    if step0 == 0.0:
        step0 = 1.0
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: local_search(P, s, step0), starts))
    else:
        results = [local_search(P, s, step0) for s in starts]
    best = min(results, key=lambda r: (r.value, r.minimizer))
    gap = best.value - scan_sum.best
    certified = assumptions.certified
    status = "solved"
    notes = [f"dense scan of {scan_sum.points} grid points, {scan_sum.feasible} feasible"]
    if certified:
        tol = GAP_RTOL * max(1.0, abs(scan_sum.best))
        stuck = [r for r in results if r.value - scan_sum.best > tol]
        if stuck:
            status = Status.THEOREM_VIOLATION.value
            notes.append(f"{len(stuck)} of {len(results)} starts stopped above the scan best "
                         f"while assumptions are certified")
        if scan_sum.clusters > 1:
            notes.append(f"scan best attained on {scan_sum.clusters} separated grid clusters")
    else:
        notes.append("assumptions not certified: no global assertion made")
    residual = float(_residual(P, np.asarray(best.minimizer))[0])
    return NlppResult(
        minimizer=best.minimizer,
        value=best.value,
        feasibility_residual=residual,
        starts_used=len(results),
        global_scan_best=scan_sum.best,
        global_gap=gap,
        local_ball_radius=best.radius,
        start_results=results,
        scan_clusters=scan_sum.clusters,
        assumptions_certified=certified,
        status=status,
        assumptions=assumptions,
        notes=notes,
    )


__all__ = [
    "NlppError",
    "NlppProblem",
    "NlppResult",
    "StartResult",
    "ScanSummary",
    "feasible_set",
    "certify_assumptions",
    "local_search",
    "dense_scan",
    "feasible_starts",
    "solve",
]
