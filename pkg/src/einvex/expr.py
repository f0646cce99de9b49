"""Small expression language for scalar functions and vector maps.

Sources look like ``if s > 0 then 1 else -s`` or ``[0, x2]``.  Parsing yields
an immutable :class:`Expr`; evaluation is vectorized over numpy arrays, and the
scalar path goes through the same code so both agree bit for bit.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | atom ('^' INT)?
    atom   := NUMBER | IDENT | '(' expr ')' | 'abs(' expr ')'
            | 'min(' expr ',' expr ')' | 'max(' expr ',' expr ')'
            | 'if' cond 'then' expr 'else' expr
    cond   := expr ('<'|'<='|'>'|'>='|'=='|'!=') expr
    vector := '[' expr (',' expr)* ']'
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, source: str, pos: int):
        self.source = source
        self.pos = pos
        caret = " " * pos + "^"
        super().__init__(f"{message} at position {pos}\n  {source}\n  {caret}")


class ArityError(ExprError):
    """Signature mismatch: wrong number of arguments or output dimension."""


class UndeclaredVariableError(ExprError):
    pass


class EvalError(ExprError):
    """Domain error during evaluation; carries the offending input."""

    def __init__(self, message: str, inputs: dict[str, float]):
        self.inputs = inputs
        shown = ", ".join(f"{k}={v!r}" for k, v in inputs.items())
        super().__init__(f"{message} at ({shown})")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Node", ...]


@dataclass(frozen=True)
class If:
    relop: str
    left: "Node"
    right: "Node"
    then: "Node"
    orelse: "Node"


@dataclass(frozen=True)
class Vector:
    items: tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Pow, Call, If, Vector]

_FUNCS = {"abs": 1, "min": 2, "max": 2}
_KEYWORDS = {"if", "then", "else"} | set(_FUNCS)
_RELOPS = ("<=", ">=", "==", "!=", "<", ">")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[<>+\-*/^(),\[\]])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(source)))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ExprSyntaxError(message, self.source, tok.pos)

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op", "ident") and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")

    def parse_top(self) -> Node:
        if self.tok.text == "[":
            node = self.vector()
        else:
            node = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}")
        return node

    def vector(self) -> Node:
        self.expect("[")
        items = [self.expr()]
        while self.accept(","):
            items.append(self.expr())
        self.expect("]")
        return Vector(tuple(items))

    def expr(self) -> Node:
        node = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept("-"):
            return Neg(self.factor())
        node = self.atom()
        if self.accept("^"):
            tok = self.tok
            if tok.kind != "num" or not tok.text.isdigit():
                self.error("exponent must be a non-negative integer literal")
            self.i += 1
            node = Pow(node, int(tok.text))
        return node

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            if tok.text == "if":
                self.i += 1
                left = self.expr()
                if self.tok.text not in _RELOPS:
                    self.error("expected comparison operator")
                relop = self.tok.text
                self.i += 1
                right = self.expr()
                self.expect("then")
                then = self.expr()
                if self.tok.text != "else":
                    self.error("'if' without 'else' (every guard needs both branches)")
                self.i += 1
                orelse = self.expr()
                return If(relop, left, right, then, orelse)
            if tok.text in _FUNCS:
                self.i += 1
                self.expect("(")
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if len(args) != _FUNCS[tok.text]:
                    raise ArityError(
                        f"{tok.text}() takes {_FUNCS[tok.text]} argument(s), "
                        f"got {len(args)} (position {tok.pos})"
                    )
                return Call(tok.text, tuple(args))
            if tok.text in _KEYWORDS:
                self.error(f"unexpected keyword {tok.text!r}")
            self.i += 1
            return Var(tok.text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        self.error(f"unexpected {found!r}")


def _variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return _variables(node.operand)
    if isinstance(node, BinOp):
        return _variables(node.left) | _variables(node.right)
    if isinstance(node, Pow):
        return _variables(node.base)
    if isinstance(node, If):
        out = set()
        for child in (node.left, node.right, node.then, node.orelse):
            out |= _variables(child)
        return out
    out = set()
    for child in node.items if isinstance(node, Vector) else node.args:
        out |= _variables(child)
    return out


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_CMP = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


def _ev(node: Node, env: dict[str, np.ndarray]):
    """Return (value, bad) where bad flags division by zero per element."""
    if isinstance(node, Num):
        return node.value, False
    if isinstance(node, Var):
        return env[node.name], False
    if isinstance(node, Neg):
        v, bad = _ev(node.operand, env)
        return np.negative(v), bad
    if isinstance(node, BinOp):
        a, bad_a = _ev(node.left, env)
        b, bad_b = _ev(node.right, env)
        if node.op == "+":
            return np.add(a, b), bad_a | bad_b
        if node.op == "-":
            return np.subtract(a, b), bad_a | bad_b
        if node.op == "*":
            return np.multiply(a, b), bad_a | bad_b
        zero = np.equal(b, 0.0)
        return np.divide(a, np.where(zero, 1.0, b)), bad_a | bad_b | zero
    if isinstance(node, Pow):
        v, bad = _ev(node.base, env)
        out = np.ones_like(np.asarray(v, dtype=float))
        # repeated multiplication keeps scalar and batch paths identical
        for _ in range(node.exponent):
            out = np.multiply(out, v)
        return out, bad
    if isinstance(node, Call):
        vals = [_ev(a, env) for a in node.args]
        bad = False
        for _, b in vals:
            bad = bad | b
        if node.func == "abs":
            return np.abs(vals[0][0]), bad
        if node.func == "min":
            return np.minimum(vals[0][0], vals[1][0]), bad
        return np.maximum(vals[0][0], vals[1][0]), bad
    if isinstance(node, If):
        a, bad_a = _ev(node.left, env)
        b, bad_b = _ev(node.right, env)
        cond = _CMP[node.relop](a, b)
        t, bad_t = _ev(node.then, env)
        e, bad_e = _ev(node.orelse, env)
        return np.where(cond, t, e), bad_a | bad_b | np.where(cond, bad_t, bad_e)
    raise TypeError(f"cannot evaluate {node!r} as a scalar")


@dataclass(frozen=True)
class Expr:
    """Parsed expression with a declared signature.

    ``params`` groups the variable names by point argument: a scalar function
    of a point in R^2 has ``(("x1", "x2"),)``; a map of two points in R^1 has
    ``(("a",), ("b",))``.
    """

    ast: Node
    params: tuple[tuple[str, ...], ...]
    output_dim: int
    source: str = ""

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def components(self) -> tuple[Node, ...]:
        return self.ast.items if isinstance(self.ast, Vector) else (self.ast,)

    def __call__(self, *args) -> np.ndarray | float:
        """Evaluate at points.

        Each argument is either one point (shape ``(n,)`` or a bare number when
        n = 1) or a batch of shape ``(N, n)``.  Scalar results come back as
        ``float`` for single points.
        """
        if len(args) != self.arity:
            raise ArityError(f"expected {self.arity} point argument(s), got {len(args)}")
        batched = any(np.ndim(a) == 2 for a in args)
        arrs = []
        for a, names in zip(args, self.params):
            arr = np.asarray(a, dtype=float)
            if arr.ndim < 2:
                arr = arr.reshape(1, -1)
            if arr.shape[1] != len(names):
                raise ArityError(
                    f"point has dimension {arr.shape[1]}, expected {len(names)}"
                )
            arrs.append(arr)
        out = self.evaluate(*arrs)
        if batched:
            return out
        out = out[0]
        return float(out) if self.output_dim == 1 and np.ndim(out) == 0 else out

    def evaluate(self, *batches: np.ndarray) -> np.ndarray:
        """Vectorized evaluation.

        Takes one ``(N, n)`` array per point argument.  Returns ``(N,)`` for
        scalar expressions and ``(N, output_dim)`` for vector ones.
        """
        n_rows = max(b.shape[0] for b in batches)
        env: dict[str, np.ndarray] = {}
        for batch, names in zip(batches, self.params):
            for k, name in enumerate(names):
                env[name] = np.broadcast_to(batch[:, k], (n_rows,))
        cols = []
        with np.errstate(all="ignore"):
            for comp in self.components:
                val, bad = _ev(comp, env)
                val = np.broadcast_to(np.asarray(val, dtype=float), (n_rows,))
                bad = np.broadcast_to(bad, (n_rows,)) | ~np.isfinite(val)
                if bad.any():
                    row = int(np.argmax(bad))
                    inputs = {name: float(env[name][row]) for grp in self.params for name in grp}
                    raise EvalError(f"domain error evaluating {self.source or to_source(comp)!r}", inputs)
                cols.append(np.array(val, dtype=float))
        if isinstance(self.ast, Vector):
            return np.stack(cols, axis=1)
        return cols[0]

    def component_variables(self) -> list[set[str]]:
        return [_variables(c) for c in self.components]

    def to_source(self) -> str:
        return to_source(self.ast)


def parse(
    source: str,
    params: Sequence[Sequence[str]] = (("s",),),
    output_dim: int | None = None,
) -> Expr:
    """Parse ``source`` against the declared point arguments.

    A bare scalar expression is accepted where ``output_dim == 1`` is
    requested; vector maps must use ``[...]`` unless they are one-dimensional.
    """
    if isinstance(params, str):
        params = ((params,),)
    params = tuple(tuple(p) for p in params)
    ast = _Parser(source).parse_top()
    declared = {name for group in params for name in group}
    undeclared = _variables(ast) - declared
    if undeclared:
        raise UndeclaredVariableError(
            f"undeclared variable(s) {sorted(undeclared)} in {source!r}; declared: {sorted(declared)}"
        )
    dim = len(ast.items) if isinstance(ast, Vector) else 1
    if output_dim is not None and dim != output_dim:
        if output_dim == 1 and isinstance(ast, Vector):
            raise ArityError(f"expected a scalar expression, got a vector of length {dim}")
        raise ArityError(f"expected output dimension {output_dim}, got {dim} in {source!r}")
    return Expr(ast, params, dim, source)


def to_source(node: Node) -> str:
    """Print fully parenthesized source that parses back to the same tree."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Pow):
        return f"({to_source(node.base)})^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.func}(" + ", ".join(to_source(a) for a in node.args) + ")"
    if isinstance(node, If):
        return (
            f"(if {to_source(node.left)} {node.relop} {to_source(node.right)} "
            f"then {to_source(node.then)} else {to_source(node.orelse)})"
        )
    return "[" + ", ".join(to_source(i) for i in node.items) + "]"


# ---------------------------------------------------------------------------
# Function wrappers used by the checkers
# ---------------------------------------------------------------------------

def default_variables(n: int, prefix: str = "x") -> tuple[str, ...]:
    if n == 1:
        return ("s",) if prefix == "x" else (prefix,)
    return tuple(f"{prefix}{i + 1}" for i in range(n))


class ScalarFn:
    """h: R^n -> R, evaluated row-wise on ``(N, n)`` arrays."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, source: str | None = None):
        self._fn = fn
        self.dim = dim
        self.source = source

    @classmethod
    def parse(cls, source: str, variables: Sequence[str]) -> "ScalarFn":
        e = parse(source, (tuple(variables),), output_dim=1)
        return cls(e.evaluate, len(variables), source)

    @classmethod
    def constant(cls, value: float, dim: int) -> "ScalarFn":
        return cls(lambda X: np.full(X.shape[0], float(value)), dim, repr(float(value)))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self._fn(np.asarray(X, dtype=float))

    def at(self, x) -> float:
        return float(self(np.asarray(x, dtype=float).reshape(1, self.dim))[0])

    def __repr__(self):
        return f"ScalarFn({self.source or '<callable>'}, dim={self.dim})"


class MapE:
    """E: R^n -> R^n."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, source: str | None = None,
                 separable: bool = False):
        self._fn = fn
        self.dim = dim
        self.source = source
        self.separable = separable

    @classmethod
    def parse(cls, source: str, variables: Sequence[str]) -> "MapE":
        variables = tuple(variables)
        e = parse(source, (variables,), output_dim=len(variables))
        deps = e.component_variables()
        separable = all(d <= {v} for d, v in zip(deps, variables))
        if e.output_dim == 1:
            fn = lambda X: e.evaluate(X).reshape(-1, 1)  # noqa: E731
        else:
            fn = e.evaluate
        return cls(fn, len(variables), source, separable)

    @classmethod
    def identity(cls, dim: int) -> "MapE":
        return cls(lambda X: np.array(X, dtype=float), dim, "identity", separable=True)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self._fn(np.asarray(X, dtype=float))

    def at(self, x) -> np.ndarray:
        return self(np.asarray(x, dtype=float).reshape(1, self.dim))[0]

    def __repr__(self):
        return f"MapE({self.source or '<callable>'}, dim={self.dim})"


class MapPsi:
    """Psi: R^n x R^n -> R^n."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], dim: int,
                 source: str | None = None):
        self._fn = fn
        self.dim = dim
        self.source = source

    @classmethod
    def parse(cls, source: str, a_vars: Sequence[str], b_vars: Sequence[str]) -> "MapPsi":
        a_vars, b_vars = tuple(a_vars), tuple(b_vars)
        e = parse(source, (a_vars, b_vars), output_dim=len(a_vars))
        if e.output_dim == 1:
            fn = lambda A, B: e.evaluate(A, B).reshape(-1, 1)  # noqa: E731
        else:
            fn = e.evaluate
        return cls(fn, len(a_vars), source)

    @classmethod
    def difference(cls, dim: int) -> "MapPsi":
        return cls(lambda A, B: np.subtract(A, B), dim, "a - b")

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return self._fn(np.asarray(A, dtype=float), np.asarray(B, dtype=float))

    def at(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(1, self.dim)
        b = np.asarray(b, dtype=float).reshape(1, self.dim)
        return self(a, b)[0]

    def __repr__(self):
        return f"MapPsi({self.source or '<callable>'}, dim={self.dim})"
