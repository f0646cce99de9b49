"""Sampled certification of the E-preinvex / E-invex function classes.

Each property is a vectorized kernel over quadruples (s, t, alpha, lambda)
plus a sampling mode.  ``check_<property>`` scans a plan and returns a
:class:`~einvex.sampling.CertReport`; :func:`recompute_witness` re-evaluates a
single quadruple through the same kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .expr import MapE, MapPsi, ScalarFn
from .sampling import (
    STRICT_MARGIN,
    CertReport,
    KernelOut,
    SampleError,
    SamplingPlan,
    Status,
    Witness,
    build_quadruples,
    current_tol,
    evaluate_one,
    report_from_scan,
    scan,
    violation_tol,
)
from .sets import SetSpec, combination_point, image_kernel, sei_kernel

FD_STEP = float(np.cbrt(np.finfo(float).eps))


class CombinationOutsideSet(SampleError):
    """A combination point left S: S is not SEI or its box is too small."""


class GradientError(SampleError):
    pass


class PreimageError(SampleError):
    """No v with E(v) = target inside the box (E not onto as sampled)."""


@dataclass(frozen=True)
class ProblemTriple:
    """h, E, Psi and S of the function-class definitions.

    ``grad_h`` maps ``(N, n)`` points to ``(N, n)`` gradients; without it
    gradients come from finite differences.  ``E_inv`` is only used by the
    Condition A check.
    """

    h: ScalarFn | None
    E: MapE
    Psi: MapPsi
    S: SetSpec
    grad_h: MapE | None = None
    E_inv: MapE | None = None

    def __post_init__(self):
        n = self.S.dim
        for name in ("h", "E", "Psi", "grad_h", "E_inv"):
            obj = getattr(self, name)
            if obj is not None and obj.dim != n:
                raise ValueError(f"{name} has dimension {obj.dim}, S has dimension {n}")

    @property
    def dim(self) -> int:
        return self.S.dim

    def with_h(self, h: ScalarFn, grad_h: MapE | None = None) -> "ProblemTriple":
        return replace(self, h=h, grad_h=grad_h)


# ---------------------------------------------------------------------------
# Gradient
# ---------------------------------------------------------------------------

def _fd_gradient(P: ProblemTriple, X: np.ndarray) -> np.ndarray:
    h = P.h
    n_rows, n = X.shape
    G = np.empty((n_rows, n))
    lo = np.asarray(P.S.box.lo)
    hi = np.asarray(P.S.box.hi)
    for i in range(n):
        x = X[:, i]
        step = FD_STEP * np.maximum(1.0, np.abs(x))
        if P.S.bounded:
            up = x + step <= hi[i]
            down = x - step >= lo[i]
            up2 = x + 2 * step <= hi[i]
            down2 = x - 2 * step >= lo[i]
        else:
            up = down = up2 = down2 = np.ones(n_rows, dtype=bool)
        stuck = ~up & ~down
        if stuck.any():
            row = int(np.argmax(stuck))
            raise GradientError(f"finite-difference stencil leaves the box on both sides of axis {i}",
                                X[row], X[row], 0.0, 0.0)

        def shifted(k):
            Y = X.copy()
            Y[:, i] = x + k * step
            return h(Y)

        f0 = h(X)
        fp, fm = shifted(1.0), shifted(-1.0)
        fp2, fm2 = shifted(2.0), shifted(-2.0)
        central = (fp - fm) / (2 * step)
        fwd2 = (-3 * f0 + 4 * fp - fp2) / (2 * step)
        bwd2 = (3 * f0 - 4 * fm + fm2) / (2 * step)
        fwd1 = (fp - f0) / step
        bwd1 = (f0 - fm) / step
        g = np.where(up & down, central,
                     np.where(up, np.where(up2, fwd2, fwd1), np.where(down2, bwd2, bwd1)))
        G[:, i] = g
    return G


def gradient_batch(P: ProblemTriple, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if P.grad_h is not None:
        return P.grad_h(X)
    if P.h is None:
        raise ValueError("problem has no h")
    with np.errstate(all="ignore"):
        return _fd_gradient(P, X)


def gradient(P: ProblemTriple, x) -> np.ndarray:
    """grad h at one point: the supplied gradient, else finite differences.

    Central differences with step cbrt(eps) * max(1, |x_i|); second-order
    one-sided stencils at box faces of a bounded S.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, P.dim)
    return gradient_batch(P, x)[0]


def _dot(G: np.ndarray, V: np.ndarray) -> np.ndarray:
    # fixed summation order: identical for batch and single-sample paths
    acc = np.zeros(G.shape[0])
    for i in range(G.shape[1]):
        acc = acc + G[:, i] * V[:, i]
    return acc


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def _combination_in_S(P: ProblemTriple, s, t, a, l) -> np.ndarray:
    C = combination_point(P.E, P.Psi, s, t, a, l)
    outside = P.S.slack(C).violated
    if outside.any():
        row = int(np.argmax(outside))
        raise CombinationOutsideSet(
            f"combination point {C[row].tolist()} lies outside S (S not SEI or box too small)",
            s[row], t[row], a[row], l[row])
    return C


def _images(P: ProblemTriple, s, t):
    return P.h(P.E(s)), P.h(P.E(t))


def _out(lhs, rhs, violated=None) -> KernelOut:
    margin = lhs - rhs
    if violated is None:
        violated = margin > violation_tol(lhs, rhs)
    return KernelOut(lhs, rhs, margin, violated)


def qsep_kernel(P):
    def k(s, t, a, l):
        C = _combination_in_S(P, s, t, a, l)
        hs, ht = _images(P, s, t)
        return _out(P.h(C), np.maximum(hs, ht))
    return k


def sep_kernel(P):
    def k(s, t, a, l):
        C = _combination_in_S(P, s, t, a, l)
        hs, ht = _images(P, s, t)
        return _out(P.h(C), l * hs + (1.0 - l) * ht)
    return k


def strict_qsep_kernel(P):
    """Eligible: lambda in (0, 1) and |h(Es) - h(Et)| > STRICT_MARGIN.

    Violation: lhs >= rhs up to float noise (lhs - rhs >= -eta).
    """
    def k(s, t, a, l):
        C = _combination_in_S(P, s, t, a, l)
        hs, ht = _images(P, s, t)
        lhs, rhs = P.h(C), np.maximum(hs, ht)
        eligible = (l > 0.0) & (l < 1.0) & (np.abs(hs - ht) > STRICT_MARGIN)
        margin = lhs - rhs
        return KernelOut(lhs, rhs, margin, eligible & (margin >= -violation_tol(lhs, rhs)))
    return k


def _gradient_terms(P, s, t, a):
    Es, Et = P.E(s), P.E(t)
    A = a[:, None]
    V = P.Psi(A * s + Es, A * t + Et)
    try:
        G = gradient_batch(P, Et)
    except GradientError as exc:
        row = int(np.flatnonzero(np.all(Et == np.asarray(exc.s), axis=1))[0])
        raise GradientError(str(exc).split(" at sample")[0], s[row], t[row], a[row], 0.0) from exc
    return _dot(G, V), P.h(Es), P.h(Et)


def sei_fn_kernel(P):
    def k(s, t, a, l):
        dot, hs, ht = _gradient_terms(P, s, t, a)
        return _out(dot, hs - ht)
    return k


def qsei_kernel(P):
    def k(s, t, a, l):
        dot, hs, ht = _gradient_terms(P, s, t, a)
        ante = hs <= ht + violation_tol(hs, ht)
        zero = np.zeros_like(dot)
        return _out(dot, zero, ante & (dot > violation_tol(dot, zero)))
    return k


def psei_kernel(P):
    def k(s, t, a, l):
        dot, hs, ht = _gradient_terms(P, s, t, a)
        zero = np.zeros_like(dot)
        ante = dot >= -violation_tol(dot, zero)
        return _out(ht, hs, ante & (hs < ht - violation_tol(hs, ht)))
    return k


def shift_kernel(P):
    """h(alpha t + E t) <= h(E t); samples have s = t, lambda = 0."""
    def k(s, t, a, l):
        Et = P.E(t)
        return _out(P.h(a[:, None] * t + Et), P.h(Et))
    return k


# -- Condition A ------------------------------------------------------------

PREIMAGE_GRID = 257


def _preimage(P: ProblemTriple, Y: np.ndarray, s, t, a, l) -> np.ndarray:
    """Some v in the box with E(v) = Y, row-wise."""
    if P.E_inv is not None:
        return P.E_inv(Y)
    if P.E.source == "identity":
        return Y.copy()
    if not P.E.separable:
        raise PreimageError("E is not separable and no E inverse was supplied; cannot recover v",
                            s[0], t[0], a[0], l[0])
    n_rows, n = Y.shape
    box = P.S.box
    mid = (np.asarray(box.lo) + np.asarray(box.hi)) / 2
    V = np.empty_like(Y)
    for i in range(n):
        lo, hi = box.lo[i], box.hi[i]
        grid = np.array([lo + (hi - lo) * j / (PREIMAGE_GRID - 1) for j in range(PREIMAGE_GRID)])
        grid[-1] = hi

        def Ei(v):
            X = np.tile(mid, (v.shape[0], 1))
            X[:, i] = v
            return P.E(X)[:, i]

        Eg = Ei(grid)
        D = Eg[None, :] - Y[:, i:i + 1]
        exact = D == 0.0
        sign_change = np.signbit(D[:, :-1]) != np.signbit(D[:, 1:])
        has_exact = exact.any(axis=1)
        has_bracket = sign_change.any(axis=1)
        missing = ~(has_exact | has_bracket)
        if missing.any():
            row = int(np.argmax(missing))
            raise PreimageError(f"no v in box with E(v) = {Y[row].tolist()} (E not onto as sampled)",
                                s[row], t[row], a[row], l[row])
        first_exact = np.argmax(exact, axis=1)
        first_bracket = np.argmax(sign_change, axis=1)
        use_exact = has_exact & (~has_bracket | (first_exact <= first_bracket))
        left = grid[first_bracket]
        right = grid[np.minimum(first_bracket + 1, PREIMAGE_GRID - 1)]
        f_left = Eg[first_bracket] - Y[:, i]
        for _ in range(200):
            midv = 0.5 * (left + right)
            f_mid = Ei(midv) - Y[:, i]
            go_left = np.signbit(f_mid) != np.signbit(f_left)
            right = np.where(go_left, midv, right)
            left = np.where(go_left, left, midv)
            f_left = np.where(go_left, f_left, f_mid)
            if np.all((right - left) <= np.spacing(np.maximum(np.abs(left), np.abs(right)))):
                break
        V[:, i] = np.where(use_exact, grid[first_exact], 0.5 * (left + right))
    return V


def _norm(X: np.ndarray) -> np.ndarray:
    acc = np.zeros(X.shape[0])
    for i in range(X.shape[1]):
        acc = acc + X[:, i] * X[:, i]
    return np.sqrt(acc)


def condition_a_kernel(P, which: int):
    """A1: Psi(at+Et, av+Ev) = -lam (a v + Psi(as+Es, at+Et))
    A2: Psi(as+Es, av+Ev) = (1-lam)(a v + Psi(as+Es, at+Et))
    with E v = at + Et + lam Psi(as+Es, at+Et)."""
    def k(s, t, a, l):
        A, L = a[:, None], l[:, None]
        u = A * s + P.E(s)
        w = A * t + P.E(t)
        base = P.Psi(u, w)
        target = w + L * base
        v = _preimage(P, target, s, t, a, l)
        vv = A * v + P.E(v)
        if which == 1:
            left = P.Psi(w, vv)
            right = -L * (A * v + base)
        else:
            left = P.Psi(u, vv)
            right = (1.0 - L) * (A * v + base)
        res = _norm(left - right)
        scale = np.maximum(_norm(left), _norm(right))
        zero = np.zeros_like(res)
        return KernelOut(res, zero, res, res > violation_tol(scale, zero))
    return k


# ---------------------------------------------------------------------------
# Registry and checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropertySpec:
    name: str
    mode: str
    kernel: Callable[[ProblemTriple], Callable]
    alpha: float | None = None     # pinned alpha, if any
    needs_h: bool = True


PROPERTIES: dict[str, PropertySpec] = {
    p.name: p for p in [
        PropertySpec("qsep", "quad", qsep_kernel),
        PropertySpec("strict_qsep", "quad", strict_qsep_kernel),
        PropertySpec("sep", "quad", sep_kernel),
        PropertySpec("e_preinvex", "quad", sep_kernel, alpha=0.0),
        PropertySpec("e_prequasi_invex", "quad", qsep_kernel, alpha=0.0),
        PropertySpec("sei", "pair_alpha", sei_fn_kernel),
        PropertySpec("qsei", "pair_alpha", qsei_kernel),
        PropertySpec("psei", "pair_alpha", psei_kernel),
        PropertySpec("condition_a1", "quad", lambda P: condition_a_kernel(P, 1), needs_h=False),
        PropertySpec("condition_a2", "quad", lambda P: condition_a_kernel(P, 2), needs_h=False),
        PropertySpec("shift", "point_alpha", shift_kernel),
        PropertySpec("sei_set", "quad", lambda P: sei_kernel(P.S, P.E, P.Psi), needs_h=False),
        PropertySpec("e_invex_set", "quad", lambda P: sei_kernel(P.S, P.E, P.Psi), alpha=0.0,
                     needs_h=False),
        PropertySpec("e_image_subset", "point", lambda P: image_kernel(P.S, P.E), needs_h=False),
    ]
}


def _spec(name: str) -> PropertySpec:
    try:
        return PROPERTIES[name]
    except KeyError:
        raise KeyError(f"unknown property {name!r}; known: {sorted(PROPERTIES)}") from None


def _plan_for(spec: PropertySpec, plan: SamplingPlan) -> SamplingPlan:
    return plan.pinned(spec.alpha) if spec.alpha is not None else plan


def run_property(name: str, P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    spec = _spec(name)
    if spec.needs_h and P.h is None:
        raise ValueError(f"property {name!r} needs a function h")
    plan = _plan_for(spec, plan)
    q = build_quadruples(P.S, plan, spec.mode)
    res = scan(q, spec.kernel(P), workers)
    notes = []
    if not P.S.bounded:
        notes.append(f"s, t sampled on box {P.S.box.pairs()}; S extends beyond it")
    if name in ("sei", "qsei", "psei"):
        notes.append("gradient: " + ("supplied" if P.grad_h is not None else "finite differences"))
    if name == "strict_qsep":
        notes.append(f"eligible: lambda in (0,1), |h(Es)-h(Et)| > {STRICT_MARGIN}; "
                     "violation: lhs >= rhs - eta")
    return report_from_scan(name, res, plan, notes=notes)


def check_qsep(P, plan, workers=1):
    return run_property("qsep", P, plan, workers)


def check_strict_qsep(P, plan, workers=1):
    return run_property("strict_qsep", P, plan, workers)


def check_sep(P, plan, workers=1):
    return run_property("sep", P, plan, workers)


def check_e_preinvex(P, plan, workers=1):
    return run_property("e_preinvex", P, plan, workers)


def check_e_prequasi_invex(P, plan, workers=1):
    return run_property("e_prequasi_invex", P, plan, workers)


def check_sei(P, plan, workers=1):
    """Differentiable SEI: grad h(Et) . Psi(as+Es, at+Et) <= h(Es) - h(Et)."""
    return run_property("sei", P, plan, workers)


def check_qsei(P, plan, workers=1):
    return run_property("qsei", P, plan, workers)


def check_psei(P, plan, workers=1):
    return run_property("psei", P, plan, workers)


def check_condition_a(P: ProblemTriple, plan: SamplingPlan, workers: int = 1) -> CertReport:
    """Both functional equations, reported separately as sub-reports.

    v-recovery failures (E not onto within the box) come back as
    PRECONDITION_FAILED rather than raising.
    """
    subs = []
    for name in ("condition_a1", "condition_a2"):
        try:
            subs.append(run_property(name, P, plan, workers))
        except PreimageError as exc:
            return CertReport("condition_a", Status.PRECONDITION_FAILED, 0, current_tol(),
                              plan, sub_reports=subs, message=str(exc))
    total = sum(r.samples_checked for r in subs)
    bad = [r for r in subs if not r.certified]
    if bad:
        return CertReport("condition_a", Status.REFUTED, total, bad[0].tolerance, plan,
                          witness=bad[0].witness, worst_witness=bad[0].worst_witness,
                          violations=sum(r.violations for r in subs), sub_reports=subs,
                          message="failing: " + ", ".join(r.property for r in bad))
    return CertReport("condition_a", Status.CERTIFIED, total, subs[0].tolerance, plan, sub_reports=subs)


def qsep_sides(P: ProblemTriple, s, t, alpha: float, lam: float) -> tuple[float, float]:
    """(h at the combination point, max{h(Es), h(Et)})."""
    out = evaluate_one(qsep_kernel(P), s, t, alpha, lam)
    return float(out.lhs[0]), float(out.rhs[0])


def recompute_witness(name: str, P: ProblemTriple, w: Witness) -> Witness:
    """Re-evaluate a witness's quadruple from scratch."""
    out = evaluate_one(_spec(name).kernel(P), w.s, w.t, w.alpha, w.lam)
    return replace(w, lhs=float(out.lhs[0]), rhs=float(out.rhs[0]), margin=float(out.margin[0]))


def witness_holds(name: str, P: ProblemTriple, w: Witness) -> bool:
    out = evaluate_one(_spec(name).kernel(P), w.s, w.t, w.alpha, w.lam)
    return bool(out.violated[0])


# ---------------------------------------------------------------------------
# Counterexample search
# ---------------------------------------------------------------------------

def find_counterexample(name: str, P: ProblemTriple, plan: SamplingPlan, refine: bool = False,
                        workers: int = 1, max_rounds: int = 40) -> Witness | None:
    """Largest-margin violation over the plan, optionally refined locally.

    Refinement is a coordinate search over (s, t, alpha, lambda) with
    halving steps; a move is kept only if the quadruple stays admissible
    (s, t in S, alpha, lambda in [0, 1], kernel evaluates) and the margin
    strictly grows.
    """
    spec = _spec(name)
    plan = _plan_for(spec, plan)
    q = build_quadruples(P.S, plan, spec.mode)
    kernel = spec.kernel(P)
    best = scan(q, kernel, workers).worst
    if best is None or not refine:
        return best

    n = P.dim
    lo, hi = np.asarray(P.S.box.lo), np.asarray(P.S.box.hi)
    width = hi - lo
    x = np.concatenate([best.s, best.t, [best.alpha, best.lam]])
    free = list(range(2 * n))
    if spec.mode in ("quad", "pair_alpha", "point_alpha") and spec.alpha is None:
        free.append(2 * n)
    if spec.mode == "quad":
        free.append(2 * n + 1)
    same_point = spec.mode in ("point", "point_alpha")
    steps = np.concatenate([width, width, [0.25, 0.25]]) * 0.25
    margin = best.margin

    def evaluate(x):
        s, t = x[:n], x[n:2 * n]
        if same_point:
            t = s
        if not (0.0 <= x[2 * n] <= 1.0 and 0.0 <= x[2 * n + 1] <= 1.0):
            return None
        pts = np.stack([s, t])
        if np.any(pts < lo) or np.any(pts > hi) or not P.S.contains(pts).all():
            return None
        try:
            out = evaluate_one(kernel, s, t, x[2 * n], x[2 * n + 1])
        except Exception:
            return None
        if not out.violated[0]:
            return None
        return float(out.margin[0])

    for _ in range(max_rounds):
        improved = False
        for k in free:
            if same_point and n <= k < 2 * n:
                continue
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[k] += sign * steps[k]
                m = evaluate(trial)
                if m is not None and m > margin:
                    x, margin, improved = trial, m, True
                    break
        if not improved:
            steps = steps * 0.5
            if np.all(steps < 1e-12):
                break
    s, t = x[:n], x[n:2 * n]
    if same_point:
        t = s
    out = evaluate_one(kernel, s, t, x[2 * n], x[2 * n + 1])
    return Witness(tuple(map(float, s)), tuple(map(float, t)), float(x[2 * n]), float(x[2 * n + 1]),
                   float(out.lhs[0]), float(out.rhs[0]), float(out.margin[0]), ())
