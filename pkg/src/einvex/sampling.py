"""Sampling plans, witnesses, reports and the vectorized sample engine.

Every check discretizes "for all s, t in S, alpha, lambda in [0, 1]" into a
finite list of quadruples.  The enumeration order is fixed: anchors first, then
grid pairs, then random pairs, each crossed with the alpha and lambda values.
A quadruple's position in that order is its index, which breaks ties when
several violations share a margin, so chunked, threaded and serial runs pick
the same witness.
"""

from __future__ import annotations

import enum
import math
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Any, Callable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .sets import SetSpec

REL_TOL = 1e-9
STRICT_MARGIN = 1e-6
CHUNK_ROWS = 1 << 17
GRID_POINT_CAP = 1024  # grid pairs grow as points^2, so high dimensions get a coarser grid


_rtol = [REL_TOL]


def current_tol() -> float:
    return _rtol[0]


@contextmanager
def tolerance(rtol: float):
    """Temporarily replace the relative tolerance used by every check."""
    rtol = float(rtol)
    if not (math.isfinite(rtol) and rtol > 0):
        raise ValueError(f"tolerance must be a positive finite number, got {rtol!r}")
    old = _rtol[0]
    _rtol[0] = rtol
    try:
        yield rtol
    finally:
        _rtol[0] = old


def violation_tol(lhs, rhs, rtol: float | None = None):
    """eta = rtol * max(1, |lhs|, |rhs|), elementwise."""
    r = _rtol[0] if rtol is None else rtol
    return r * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))


class Status(str, enum.Enum):
    CERTIFIED = "certified-on-samples"
    REFUTED = "refuted"
    THEOREM_VIOLATION = "theorem-violation"
    PRECONDITION_FAILED = "precondition-failed"

    def exit_code(self) -> int:
        return {
            Status.CERTIFIED: 0,
            Status.REFUTED: 2,
            Status.PRECONDITION_FAILED: 2,
            Status.THEOREM_VIOLATION: 3,
        }[self]


@dataclass(frozen=True)
class Anchor:
    """An explicitly requested quadruple, evaluated before the plan's samples."""

    s: tuple[float, ...]
    t: tuple[float, ...]
    alpha: float
    lam: float

    @classmethod
    def of(cls, s, t, alpha, lam) -> "Anchor":
        return cls(_as_tuple(s), _as_tuple(t), float(alpha), float(lam))


def _as_tuple(x) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))


def _with_required(values: Sequence[float]) -> tuple[float, ...]:
    vals = {float(v) for v in values} | {0.0, 0.5, 1.0}
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"alpha/lambda value {v} outside [0, 1]")
    return tuple(sorted(vals))


@dataclass(frozen=True)
class SamplingPlan:
    """Finite stand-in for the quantifiers over s, t, alpha and lambda.

    ``alpha_values`` and ``lambda_values`` always contain 0, 1/2 and 1 in
    addition to whatever is passed.  ``alpha_pinned`` replaces the alpha grid
    by a single value (alpha = 0 gives the plain E-invex/E-preinvex forms).
    """

    seed: int = 42
    grid_per_axis: int = 21
    random_pairs: int = 2000
    alpha_values: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    lambda_values: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    alpha_pinned: float | None = None
    anchors: tuple[Anchor, ...] = ()

    def __post_init__(self):
        if self.grid_per_axis < 2:
            raise ValueError("grid_per_axis must be at least 2")
        if self.random_pairs < 0:
            raise ValueError("random_pairs must be non-negative")
        object.__setattr__(self, "alpha_values", _with_required(self.alpha_values))
        object.__setattr__(self, "lambda_values", _with_required(self.lambda_values))
        if self.alpha_pinned is not None:
            if not 0.0 <= self.alpha_pinned <= 1.0:
                raise ValueError("alpha_pinned outside [0, 1]")
            object.__setattr__(self, "alpha_pinned", float(self.alpha_pinned))
        object.__setattr__(self, "anchors", tuple(self.anchors))

    @property
    def alphas(self) -> tuple[float, ...]:
        if self.alpha_pinned is not None:
            return (self.alpha_pinned,)
        return self.alpha_values

    def pinned(self, alpha: float) -> "SamplingPlan":
        return replace(self, alpha_pinned=alpha)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["anchors"] = [
            {"s": list(a.s), "t": list(a.t), "alpha": a.alpha, "lambda": a.lam} for a in self.anchors
        ]
        d["alpha_values"] = list(self.alpha_values)
        d["lambda_values"] = list(self.lambda_values)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SamplingPlan":
        d = dict(d)
        anchors = tuple(
            Anchor.of(a["s"], a["t"], a["alpha"], a.get("lambda", a.get("lam", 0.0)))
            for a in d.pop("anchors", ())
        )
        return cls(anchors=anchors, **d)


@dataclass(frozen=True)
class Witness:
    """A quadruple refuting an inequality, with both sides as evaluated."""

    s: tuple[float, ...]
    t: tuple[float, ...]
    alpha: float
    lam: float
    lhs: float
    rhs: float
    margin: float
    index: tuple[int, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "s": list(self.s),
            "t": list(self.t),
            "alpha": self.alpha,
            "lambda": self.lam,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "index": list(self.index),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Witness":
        return cls(
            tuple(d["s"]), tuple(d["t"]), d["alpha"], d["lambda"],
            d["lhs"], d["rhs"], d["margin"], tuple(d.get("index", ())),
        )


@dataclass
class CertReport:
    """Outcome of a sampled check.  Certified never means proved."""

    property: str
    status: Status
    samples_checked: int
    tolerance: float
    plan: SamplingPlan | None
    witness: Witness | None = None
    worst_witness: Witness | None = None
    violations: int = 0
    sub_reports: list["CertReport"] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.status is Status.CERTIFIED

    @property
    def refuted(self) -> bool:
        return self.status is Status.REFUTED

    def exit_code(self) -> int:
        return self.status.exit_code()

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "property": self.property,
            "status": self.status.value,
            "samples_checked": self.samples_checked,
            "violations": self.violations,
            "tolerance": self.tolerance,
            "plan": self.plan.to_dict() if self.plan is not None else None,
            "sub_reports": [r.to_dict() for r in self.sub_reports],
            "notes": list(self.notes),
        }
        if self.message:
            d["message"] = self.message
        if self.witness is not None:
            d["witness"] = self.witness.to_dict()
        if self.worst_witness is not None:
            d["worst_witness"] = self.worst_witness.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CertReport":
        return cls(
            property=d["property"],
            status=Status(d["status"]),
            samples_checked=d["samples_checked"],
            tolerance=d["tolerance"],
            plan=SamplingPlan.from_dict(d["plan"]) if d.get("plan") else None,
            witness=Witness.from_dict(d["witness"]) if "witness" in d else None,
            worst_witness=Witness.from_dict(d["worst_witness"]) if "worst_witness" in d else None,
            violations=d.get("violations", 0),
            sub_reports=[cls.from_dict(r) for r in d.get("sub_reports", [])],
            notes=list(d.get("notes", [])),
            message=d.get("message", ""),
        )

    def summary(self, indent: int = 0) -> str:
        pad = "  " * indent
        line = f"{pad}{self.property}: {self.status.value} ({self.samples_checked} samples"
        if self.violations:
            line += f", {self.violations} violations"
        line += ")"
        lines = [line]
        if self.message:
            lines.append(f"{pad}  {self.message}")
        if self.witness is not None:
            w = self.witness
            lines.append(
                f"{pad}  witness s={list(w.s)} t={list(w.t)} alpha={w.alpha} lambda={w.lam}: "
                f"lhs={w.lhs!r} rhs={w.rhs!r} margin={w.margin!r}"
            )
        for note in self.notes:
            lines.append(f"{pad}  note: {note}")
        for sub in self.sub_reports:
            lines.append(sub.summary(indent + 1))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Sample generation
# ---------------------------------------------------------------------------

def axis_grid(lo: float, hi: float, k: int) -> np.ndarray:
    """k evenly spaced values with exact endpoints, plus 0 when inside."""
    pts = [lo + (hi - lo) * i / (k - 1) for i in range(k)]
    pts[-1] = hi
    if lo < 0.0 < hi:
        pts.append(0.0)
    return np.unique(np.array(pts, dtype=float))


def grid_points(lo: Sequence[float], hi: Sequence[float], k: int) -> np.ndarray:
    axes = [axis_grid(a, b, k) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class PointSample:
    """Sample points of a set: members of the box grid and random members."""

    grid: np.ndarray
    random: np.ndarray

    @property
    def all(self) -> np.ndarray:
        return np.concatenate([self.grid, self.random], axis=0)


def effective_grid(lo: Sequence[float], hi: Sequence[float], k: int) -> np.ndarray:
    """Box grid with k per axis, coarsened until it has at most GRID_POINT_CAP points."""
    while True:
        grid = grid_points(lo, hi, k)
        if len(grid) <= GRID_POINT_CAP or k <= 2:
            return grid
        k -= 1


def sample_points(S: "SetSpec", plan: SamplingPlan) -> PointSample:
    box = S.box
    n = box.dim
    grid = effective_grid(box.lo, box.hi, plan.grid_per_axis)
    grid = grid[S.contains(grid)]
    rng = np.random.default_rng(plan.seed)
    want = plan.random_pairs * 2
    got: list[np.ndarray] = []
    have = 0
    lo, hi = np.array(box.lo), np.array(box.hi)
    for _ in range(10):
        if have >= want:
            break
        cand = lo + (hi - lo) * rng.random((max(want, 1) * 2, n))
        cand = cand[S.contains(cand)]
        got.append(cand)
        have += cand.shape[0]
    rand = np.concatenate(got, axis=0)[:want] if got else np.empty((0, n))
    return PointSample(grid, rand.reshape(-1, n))


@dataclass
class Quadruples:
    """Index arrays describing the ordered sample set of a check."""

    points: np.ndarray           # (M, n)
    pair_i: np.ndarray           # (P,) indices into points
    pair_j: np.ndarray
    pair_group: np.ndarray       # 1 = grid pairs, 2 = random pairs
    alphas: np.ndarray
    lams: np.ndarray
    anchors: tuple[Anchor, ...]

    @property
    def per_pair(self) -> int:
        return len(self.alphas) * len(self.lams)

    @property
    def total(self) -> int:
        return len(self.anchors) + len(self.pair_i) * self.per_pair


def build_quadruples(S: "SetSpec", plan: SamplingPlan, mode: str = "quad") -> Quadruples:
    """Enumerate samples for a check.

    mode ``quad``: pairs x alphas x lambdas; ``pair_alpha``: pairs x alphas
    (lambda = 0); ``point_alpha``: s = t, x alphas; ``point``: s = t,
    alpha = lambda = 0.
    """
    pts = sample_points(S, plan)
    g, r = pts.grid.shape[0], pts.random.shape[0]
    points = pts.all
    if mode in ("quad", "pair_alpha"):
        gi, gj = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
        half = r // 2
        ri = g + np.arange(half)
        rj = g + half + np.arange(half)
        rd = g + np.arange(r)  # diagonal pairs for random points
        pair_i = np.concatenate([gi.ravel(), ri, rd])
        pair_j = np.concatenate([gj.ravel(), rj, rd])
        group = np.concatenate([np.ones(g * g, int), np.full(half + r, 2)])
    else:
        pair_i = np.arange(g + r)
        pair_j = pair_i
        group = np.concatenate([np.ones(g, int), np.full(r, 2)])
    alphas = np.array(plan.alphas if mode in ("quad", "pair_alpha", "point_alpha") else (0.0,))
    lams = np.array(plan.lambda_values if mode == "quad" else (0.0,))
    anchors: tuple[Anchor, ...] = ()
    if mode in ("quad", "pair_alpha"):
        anchors = tuple(
            a if mode == "quad" else Anchor(a.s, a.t, a.alpha, 0.0) for a in plan.anchors
        )
        # anchors belong to the set they were written for; derived sets
        # (level sets, products, feasible regions) keep only their members
        anchors = tuple(
            a for a in anchors
            if len(a.s) == S.dim and S.contains(np.array([a.s, a.t])).all()
        )
        if plan.alpha_pinned is not None:
            anchors = tuple(Anchor(a.s, a.t, plan.alpha_pinned, a.lam) for a in anchors)
    return Quadruples(points, pair_i, pair_j, group, alphas, lams, anchors)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

@dataclass
class KernelOut:
    """Per-sample outcome of a check kernel."""

    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    violated: np.ndarray


Kernel = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], KernelOut]


class SampleError(Exception):
    """A kernel failed on a specific sample; carries the sample."""

    def __init__(self, message: str, s, t, alpha, lam):
        self.s, self.t, self.alpha, self.lam = _as_tuple(s), _as_tuple(t), float(alpha), float(lam)
        super().__init__(
            f"{message} at sample s={list(self.s)} t={list(self.t)} alpha={self.alpha} lambda={self.lam}"
        )


@dataclass
class ScanResult:
    samples: int
    violations: int
    reported: Witness | None
    worst: Witness | None


def _index_tuple(q: Quadruples, flat: int) -> tuple[int, ...]:
    na = len(q.anchors)
    if flat < na:
        return (0, flat, 0, 0)
    k = flat - na
    pair, rest = divmod(k, q.per_pair)
    ai, li = divmod(rest, len(q.lams))
    return (int(q.pair_group[pair]), pair, ai, li)


def _materialize(q: Quadruples, start: int, stop: int):
    """Arrays (s, t, alpha, lambda) for flat indices [start, stop)."""
    na = len(q.anchors)
    parts_s, parts_t, parts_a, parts_l = [], [], [], []
    if start < na:
        sel = q.anchors[start:min(stop, na)]
        parts_s.append(np.array([a.s for a in sel], dtype=float))
        parts_t.append(np.array([a.t for a in sel], dtype=float))
        parts_a.append(np.array([a.alpha for a in sel], dtype=float))
        parts_l.append(np.array([a.lam for a in sel], dtype=float))
    lo, hi = max(start, na) - na, stop - na
    if hi > lo:
        k = np.arange(lo, hi)
        pair, rest = np.divmod(k, q.per_pair)
        ai, li = np.divmod(rest, len(q.lams))
        parts_s.append(q.points[q.pair_i[pair]])
        parts_t.append(q.points[q.pair_j[pair]])
        parts_a.append(q.alphas[ai])
        parts_l.append(q.lams[li])
    return (
        np.concatenate(parts_s), np.concatenate(parts_t),
        np.concatenate(parts_a), np.concatenate(parts_l),
    )


def _witness_at(q, s, t, a, l, out: KernelOut, row: int, flat: int) -> Witness:
    return Witness(
        _as_tuple(s[row]), _as_tuple(t[row]), float(a[row]), float(l[row]),
        float(out.lhs[row]), float(out.rhs[row]), float(out.margin[row]),
        _index_tuple(q, flat),
    )


def scan(q: Quadruples, kernel: Kernel, workers: int = 1, chunk: int = CHUNK_ROWS) -> ScanResult:
    """Evaluate ``kernel`` on every sample and reduce deterministically.

    The reported witness is the first violating anchor when one exists,
    otherwise the largest-margin violation (lowest index on ties).  ``worst``
    is always the largest-margin violation.
    """
    total = q.total
    na = len(q.anchors)
    bounds = [(0, na)] if na else []
    bounds += [(b, min(b + chunk, total)) for b in range(na, total, chunk)]

    def run(bound):
        start, stop = bound
        s, t, a, l = _materialize(q, start, stop)
        try:
            out = kernel(s, t, a, l)
        except SampleError:
            raise
        except Exception as exc:  # pin the failure to a sample
            row = _first_failing_row(kernel, s, t, a, l)
            raise SampleError(str(exc), s[row], t[row], a[row], l[row]) from exc
        viol = np.asarray(out.violated, dtype=bool)
        count = int(viol.sum())
        first = worst = None
        if count:
            idx = np.flatnonzero(viol)
            m = out.margin[idx]
            best = idx[np.flatnonzero(m == m.max())[0]]
            worst = (float(out.margin[best]), start + int(best),
                     _witness_at(q, s, t, a, l, out, int(best), start + int(best)))
            if start < na:
                fa = int(idx[0])
                if start + fa < na:
                    first = _witness_at(q, s, t, a, l, out, fa, start + fa)
        return count, first, worst

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, bounds))
    else:
        results = [run(b) for b in bounds]

    violations = sum(r[0] for r in results)
    anchor_first = next((r[1] for r in results if r[1] is not None), None)
    worst = None
    for r in results:
        if r[2] is None:
            continue
        if worst is None or r[2][0] > worst[0] or (r[2][0] == worst[0] and r[2][1] < worst[1]):
            worst = r[2]
    worst_w = worst[2] if worst else None
    return ScanResult(total, violations, anchor_first or worst_w, worst_w)


def _first_failing_row(kernel: Kernel, s, t, a, l) -> int:
    for row in range(len(a)):
        try:
            kernel(s[row:row + 1], t[row:row + 1], a[row:row + 1], l[row:row + 1])
        except Exception:
            return row
    return 0


def report_from_scan(name: str, res: ScanResult, plan: SamplingPlan, **extra) -> CertReport:
    status = Status.REFUTED if res.violations else Status.CERTIFIED
    return CertReport(
        property=name,
        status=status,
        samples_checked=res.samples,
        tolerance=current_tol(),
        plan=plan,
        witness=res.reported,
        worst_witness=res.worst,
        violations=res.violations,
        **extra,
    )


def evaluate_one(kernel: Kernel, s, t, alpha, lam) -> KernelOut:
    """Run a kernel on a single quadruple (same code path as the batch scan)."""
    s = np.asarray(s, dtype=float).reshape(1, -1)
    t = np.asarray(t, dtype=float).reshape(1, -1)
    return kernel(s, t, np.array([float(alpha)]), np.array([float(lam)]))
