"""Problem files: one TOML document describing h, E, Psi, the set, the plan
and whatever extra pieces the suites and the solver need.

Layout (every table except ``[box]`` and ``[functions]`` is optional)::

    name = "ex1"
    variables = ["s"]                 # default: s for n = 1, x1..xn otherwise

    [box]
    bounds = [[-2.0, 2.0]]            # one [lo, hi] per variable
    bounded = false                   # S extends beyond the box

    [functions]
    h = "if s > 0 then 1 else -s"
    E = "abs(s)"                      # or "identity"
    Psi = "if a != b then -b else 0"  # or "difference"; a/b (n = 1), a1.., b1..
    grad_h = "3*s^2"                  # optional analytic gradient
    E_inv = "..."                     # optional inverse of E

    [set]
    predicates = ["s"]                # S = {p : g(p) <= 0 for every g}

    [plan]
    seed = 42
    grid = 21
    random_pairs = 2000
    alpha = [0, 0.25, 0.5, 0.75, 1]
    lambda = [0, 0.25, 0.5, 0.75, 1]
    anchors = [{ s = [0], t = [1], alpha = 0.5, lambda = 0.5 }]

    [family]
    members = ["...", "..."]
    weights = [1, 2]
    outer = "max(x, 0)"               # univariate in x

    [bivariate]
    F = "max(s, t)"                   # variables: s, t (n = 1) or <v>_s, <v>_t
    t_grid = 41

    [levelsets]
    r_values = [0, 0.5, 1, 2]

    [nlpp]
    objective = "..."
    constraints = ["..."]
    starts = 32

    [checks]
    properties = ["qsep", "sep"]
    suites = ["shift"]
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .classifiers import ProblemTriple
from .expr import ExprError, MapE, MapPsi, ScalarFn, default_variables
from .nlpp import NlppProblem
from .sampling import Anchor, SamplingPlan
from .sets import Box, SetSpec
from .theorems import BivariateFn, FamilySpec

BUILTINS = ("ex1", "ex2", "ex_qsei", "ex_psei", "nlpp_certified", "nlpp_control", "sum_counterexample")

_TOP_KEYS = {"name", "variables", "box", "functions", "set", "plan", "family", "bivariate",
             "levelsets", "nlpp", "checks", "psi_variables", "description"}


class ProblemFileError(ValueError):
    """Malformed problem file; the message names the offending location."""


@dataclass
class ProblemFile:
    name: str
    variables: tuple[str, ...]
    box: Box
    bounded: bool
    h: ScalarFn | None
    E: MapE
    Psi: MapPsi
    S: SetSpec
    plan: SamplingPlan
    grad_h: MapE | None = None
    E_inv: MapE | None = None
    family: FamilySpec | None = None
    bivariate: BivariateFn | None = None
    t_grid: int = 41
    r_values: tuple[float, ...] = ()
    nlpp: NlppProblem | None = None
    starts: int = 32
    properties: tuple[str, ...] = ()
    suites: tuple[str, ...] = ()
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.box.dim

    def triple(self) -> ProblemTriple:
        return ProblemTriple(self.h, self.E, self.Psi, self.S, self.grad_h, self.E_inv)

    def t_grid_plan(self) -> SamplingPlan:
        return SamplingPlan(seed=self.plan.seed, grid_per_axis=self.t_grid, random_pairs=0)


def _err(where: str, msg: str) -> ProblemFileError:
    return ProblemFileError(f"{where}: {msg}")


def _table(doc: dict, key: str, src: str) -> dict:
    v = doc.get(key, {})
    if not isinstance(v, dict):
        raise _err(f"{src}: [{key}]", "expected a table")
    return v


def _parse_expr(where: str, build):
    try:
        return build()
    except ExprError as exc:
        raise _err(where, str(exc)) from None


def _floats(where: str, v) -> tuple[float, ...]:
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise _err(where, f"expected a list of numbers, got {v!r}")
    return tuple(float(x) for x in v)


def _strings(where: str, v) -> tuple[str, ...]:
    if isinstance(v, str):
        return (v,)
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise _err(where, f"expected a list of strings, got {v!r}")
    return tuple(v)


def _bivariate_vars(vs: tuple[str, ...]) -> tuple[str, ...]:
    if vs == ("s",):
        return ("s", "t")
    return tuple(f"{v}_s" for v in vs) + tuple(f"{v}_t" for v in vs)


def _psi_vars(n: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    if n == 1:
        return ("a",), ("b",)
    return default_variables(n, "a"), default_variables(n, "b")


def _plan(tbl: dict, src: str, n: int) -> SamplingPlan:
    where = f"{src}: [plan]"
    known = {"seed", "grid", "random_pairs", "alpha", "lambda", "alpha_pinned", "anchors"}
    extra = set(tbl) - known
    if extra:
        raise _err(where, f"unknown keys {sorted(extra)}")
    kw: dict[str, Any] = {}
    for key, name in (("seed", "seed"), ("grid", "grid_per_axis"), ("random_pairs", "random_pairs")):
        if key in tbl:
            if not isinstance(tbl[key], int) or isinstance(tbl[key], bool):
                raise _err(f"{where}.{key}", f"expected an integer, got {tbl[key]!r}")
            kw[name] = tbl[key]
    if "alpha" in tbl:
        kw["alpha_values"] = _floats(f"{where}.alpha", tbl["alpha"])
    if "lambda" in tbl:
        kw["lambda_values"] = _floats(f"{where}.lambda", tbl["lambda"])
    if "alpha_pinned" in tbl:
        kw["alpha_pinned"] = float(tbl["alpha_pinned"])
    anchors = []
    for i, a in enumerate(tbl.get("anchors", [])):
        aw = f"{where}.anchors[{i}]"
        if not isinstance(a, dict) or not {"s", "t", "alpha"} <= set(a):
            raise _err(aw, "anchor needs s, t, alpha (and optionally lambda)")
        s, t = _floats(f"{aw}.s", a["s"]), _floats(f"{aw}.t", a["t"])
        if len(s) != n or len(t) != n:
            raise _err(aw, f"anchor points must have dimension {n}")
        anchors.append(Anchor.of(s, t, float(a["alpha"]), float(a.get("lambda", 0.0))))
    kw["anchors"] = tuple(anchors)
    try:
        return SamplingPlan(**kw)
    except ValueError as exc:
        raise _err(where, str(exc)) from None


def parse_problem(doc: dict[str, Any], src: str = "<problem>") -> ProblemFile:
    """Build a ProblemFile from an already-decoded TOML document."""
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise _err(src, f"unknown top-level keys {sorted(extra)}")
    box_t = _table(doc, "box", src)
    if "bounds" not in box_t:
        raise _err(f"{src}: [box]", "missing 'bounds'")
    if set(box_t) - {"bounds", "bounded"}:
        raise _err(f"{src}: [box]", f"unknown keys {sorted(set(box_t) - {'bounds', 'bounded'})}")
    bounds = box_t["bounds"]
    if not isinstance(bounds, list) or not all(isinstance(p, list) and len(p) == 2 for p in bounds):
        raise _err(f"{src}: [box].bounds", "expected a list of [lo, hi] pairs")
    try:
        box = Box.from_pairs([_floats(f"{src}: [box].bounds", p) for p in bounds])
    except ValueError as exc:
        raise _err(f"{src}: [box].bounds", str(exc)) from None
    n = box.dim
    bounded = bool(box_t.get("bounded", True))

    variables = _strings(f"{src}: variables", doc.get("variables", list(default_variables(n))))
    if len(variables) != n:
        raise _err(f"{src}: variables", f"{len(variables)} names for a {n}-dimensional box")
    if len(set(variables)) != n:
        raise _err(f"{src}: variables", "names must be distinct")

    fn = _table(doc, "functions", src)
    fw = f"{src}: [functions]"
    h = None
    if "h" in fn:
        h = _parse_expr(f"{fw}.h", lambda: ScalarFn.parse(fn["h"], variables))
    e_src = fn.get("E", "identity")
    E = MapE.identity(n) if e_src == "identity" else _parse_expr(f"{fw}.E", lambda: MapE.parse(e_src, variables))
    a_vars, b_vars = _psi_vars(n)
    if "psi_variables" in doc:
        pv = doc["psi_variables"]
        if not (isinstance(pv, list) and len(pv) == 2):
            raise _err(f"{src}: psi_variables", "expected [[a names], [b names]]")
        a_vars = _strings(f"{src}: psi_variables[0]", pv[0])
        b_vars = _strings(f"{src}: psi_variables[1]", pv[1])
    p_src = fn.get("Psi", "difference")
    Psi = MapPsi.difference(n) if p_src == "difference" else _parse_expr(
        f"{fw}.Psi", lambda: MapPsi.parse(p_src, a_vars, b_vars))
    if Psi.dim != n:
        raise _err(f"{fw}.Psi", f"Psi has dimension {Psi.dim}, expected {n}")
    grad_h = _parse_expr(f"{fw}.grad_h", lambda: MapE.parse(fn["grad_h"], variables)) if "grad_h" in fn else None
    E_inv = _parse_expr(f"{fw}.E_inv", lambda: MapE.parse(fn["E_inv"], variables)) if "E_inv" in fn else None

    set_t = _table(doc, "set", src)
    preds = tuple(
        _parse_expr(f"{src}: [set].predicates[{i}]", lambda g=g: ScalarFn.parse(g, variables))
        for i, g in enumerate(_strings(f"{src}: [set].predicates", set_t.get("predicates", [])))
    )
    S = SetSpec(box, preds, bounded=bounded, name=str(doc.get("name", "S")))
    plan = _plan(_table(doc, "plan", src), src, n)
    for a in plan.anchors:
        if not (S.contains(np.array([a.s]))[0] and S.contains(np.array([a.t]))[0]):
            raise _err(f"{src}: [plan].anchors", f"anchor {a} has a point outside the set")

    family = None
    fam_t = _table(doc, "family", src)
    if fam_t:
        fwh = f"{src}: [family]"
        members = tuple(
            _parse_expr(f"{fwh}.members[{i}]", lambda m=m: ScalarFn.parse(m, variables))
            for i, m in enumerate(_strings(f"{fwh}.members", fam_t.get("members", [])))
        )
        if not members:
            if h is None:
                raise _err(fwh, "members missing and no h to default to")
            members = (h,)
        weights = _floats(f"{fwh}.weights", fam_t["weights"]) if "weights" in fam_t else None
        outer = _parse_expr(f"{fwh}.outer", lambda: ScalarFn.parse(fam_t["outer"], ("x",))) \
            if "outer" in fam_t else None
        try:
            family = FamilySpec(members, weights, outer)
        except ValueError as exc:
            raise _err(fwh, str(exc)) from None

    biv, t_grid = None, 41
    biv_t = _table(doc, "bivariate", src)
    if biv_t:
        bw = f"{src}: [bivariate]"
        if "F" not in biv_t:
            raise _err(bw, "missing 'F'")
        bvars = _strings(f"{bw}.variables", biv_t["variables"]) if "variables" in biv_t \
            else _bivariate_vars(variables)
        if len(bvars) != 2 * n:
            raise _err(f"{bw}.variables", f"F needs {2 * n} variables")
        biv = BivariateFn(_parse_expr(f"{bw}.F", lambda: ScalarFn.parse(biv_t["F"], bvars)))
        t_grid = int(biv_t.get("t_grid", 41))

    r_values = ()
    lv = _table(doc, "levelsets", src)
    if "r_values" in lv:
        r_values = _floats(f"{src}: [levelsets].r_values", lv["r_values"])

    nl, starts = None, 32
    nl_t = _table(doc, "nlpp", src)
    if nl_t:
        nw = f"{src}: [nlpp]"
        obj_src = nl_t.get("objective", fn.get("h"))
        if obj_src is None:
            raise _err(nw, "missing 'objective'")
        obj = _parse_expr(f"{nw}.objective", lambda: ScalarFn.parse(obj_src, variables))
        cons = tuple(
            _parse_expr(f"{nw}.constraints[{i}]", lambda c=c: ScalarFn.parse(c, variables))
            for i, c in enumerate(_strings(f"{nw}.constraints", nl_t.get("constraints", [])))
        )
        nl = NlppProblem(obj, cons, E, Psi, box, name=str(doc.get("name", "")))
        starts = int(nl_t.get("starts", 32))

    ch = _table(doc, "checks", src)
    return ProblemFile(
        name=str(doc.get("name", Path(src).stem)),
        variables=variables,
        box=box,
        bounded=bounded,
        h=h,
        E=E,
        Psi=Psi,
        S=S,
        plan=plan,
        grad_h=grad_h,
        E_inv=E_inv,
        family=family,
        bivariate=biv,
        t_grid=t_grid,
        r_values=r_values,
        nlpp=nl,
        starts=starts,
        properties=_strings(f"{src}: [checks].properties", ch.get("properties", [])),
        suites=_strings(f"{src}: [checks].suites", ch.get("suites", [])),
        raw=doc,
    )


def loads_problem(text: str, src: str = "<string>") -> ProblemFile:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise _err(src, f"not valid TOML: {exc}") from None
    return parse_problem(doc, src)


def load_problem(path: str | Path) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _err(str(path), f"cannot read: {exc.strerror}") from None
    return loads_problem(text, str(path))


def builtin_text(name: str) -> str:
    if name not in BUILTINS:
        raise ProblemFileError(f"unknown built-in {name!r}; choose from {', '.join(BUILTINS)}")
    return resources.files("einvex").joinpath("fixtures").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def load_builtin(name: str) -> ProblemFile:
    return loads_problem(builtin_text(name), f"builtin:{name}")


__all__ = [
    "BUILTINS",
    "ProblemFile",
    "ProblemFileError",
    "parse_problem",
    "loads_problem",
    "load_problem",
    "load_builtin",
    "builtin_text",
]
