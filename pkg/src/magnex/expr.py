"""Small arithmetic expression language for run configuration.

Expressions range over the spatial coordinates ``x, y, z`` and time ``t``
(all SI), numeric literals, ``+ - * / ^`` with unary minus, comparisons
yielding 0/1, the constant ``pi``, and the functions sin, cos, tan, exp,
log, sqrt, tanh, abs, min, max and the lazy ternary ``where(cond, a, b)``.

Precedence, loosest to tightest: comparisons, additive, multiplicative,
unary minus, ``^`` (right-associative, binds tighter than unary minus, so
``-2^2 = -4`` and ``2^-2`` works).

Scalar evaluation raises on sqrt/log domain violations and skips the
untaken ``where`` branch. Grid evaluation is vectorized IEEE arithmetic:
domain violations become NaN, and ``where`` discards whatever the untaken
branch produced — callers validate finiteness of the final array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Expr", "ExprError", "ExprEvalError", "parse_expr", "FUNCTIONS"]

VARIABLES = ("x", "y", "z", "t")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1,
             "tanh": 1, "abs": 1, "min": 2, "max": 2, "where": 3}

_CMP_OPS = ("<=", ">=", "==", "<", ">")


class ExprError(ValueError):
    """Parse-time failure, carrying 1-based line and column."""

    def __init__(self, msg: str, src: str, pos: int):
        line = src.count("\n", 0, pos) + 1
        col = pos - (src.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


class ExprEvalError(ValueError):
    """Domain failure during scalar evaluation; names the sub-expression."""


# --- AST -----------------------------------------------------------------

@dataclass(frozen=True)
class _Num:
    value: float
    span: tuple[int, int]


@dataclass(frozen=True)
class _Var:
    name: str
    span: tuple[int, int]


@dataclass(frozen=True)
class _Const:
    name: str
    span: tuple[int, int]


@dataclass(frozen=True)
class _Unary:
    operand: object
    span: tuple[int, int]


@dataclass(frozen=True)
class _Bin:
    op: str
    lhs: object
    rhs: object
    span: tuple[int, int]


@dataclass(frozen=True)
class _Call:
    fn: str
    args: tuple
    span: tuple[int, int]


# --- tokenizer -----------------------------------------------------------

def _tokenize(src: str):
    toks = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                val = float(text)
            except ValueError:
                raise ExprError(f"bad numeric literal {text!r}", src, i) from None
            toks.append(("num", val, i, j))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(("ident", src[i:j], i, j))
            i = j
            continue
        two = src[i:i + 2]
        if two in _CMP_OPS:
            toks.append(("op", two, i, i + 2))
            i += 2
            continue
        if c in "+-*/^<>(),":
            kind = {"(": "lparen", ")": "rparen", ",": "comma"}.get(c, "op")
            toks.append((kind, c, i, i + 1))
            i += 1
            continue
        raise ExprError(f"unexpected character {c!r}", src, i)
    toks.append(("end", "", n, n))
    return toks


# --- parser --------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind, what):
        tok = self.next()
        if tok[0] != kind:
            raise ExprError(f"expected {what}, found {tok[1]!r}" if tok[1]
                            else f"expected {what}, found end of input",
                            self.src, tok[2])
        return tok

    def parse(self):
        node = self.comparison()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprError(f"unexpected trailing {tok[1]!r}", self.src, tok[2])
        return node

    def comparison(self):
        node = self.additive()
        while self.peek()[0] == "op" and self.peek()[1] in _CMP_OPS:
            op = self.next()[1]
            rhs = self.additive()
            node = _Bin(op, node, rhs, (node.span[0], rhs.span[1]))
        return node

    def additive(self):
        node = self.multiplicative()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.next()[1]
            rhs = self.multiplicative()
            node = _Bin(op, node, rhs, (node.span[0], rhs.span[1]))
        return node

    def multiplicative(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.next()[1]
            rhs = self.unary()
            node = _Bin(op, node, rhs, (node.span[0], rhs.span[1]))
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.next()
            operand = self.unary()
            return _Unary(operand, (tok[2], operand.span[1]))
        return self.power()

    def power(self):
        base = self.primary()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.next()
            expo = self.unary()  # right-associative, allows 2^-3
            return _Bin("^", base, expo, (base.span[0], expo.span[1]))
        return base

    def primary(self):
        tok = self.next()
        if tok[0] == "num":
            return _Num(tok[1], (tok[2], tok[3]))
        if tok[0] == "lparen":
            node = self.comparison()
            self.expect("rparen", "')'")
            return node
        if tok[0] == "ident":
            name = tok[1]
            if self.peek()[0] == "lparen":
                if name not in FUNCTIONS:
                    raise ExprError(f"unknown function {name!r}", self.src, tok[2])
                self.next()
                args = [self.comparison()]
                while self.peek()[0] == "comma":
                    self.next()
                    args.append(self.comparison())
                close = self.expect("rparen", "')'")
                if len(args) != FUNCTIONS[name]:
                    raise ExprError(
                        f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                        self.src, tok[2])
                return _Call(name, tuple(args), (tok[2], close[3]))
            if name in VARIABLES:
                return _Var(name, (tok[2], tok[3]))
            if name in CONSTANTS:
                return _Const(name, (tok[2], tok[3]))
            raise ExprError(f"unknown identifier {name!r}", self.src, tok[2])
        raise ExprError(f"unexpected {tok[1]!r}" if tok[1] else "unexpected end of input",
                        self.src, tok[2])


# --- evaluation ----------------------------------------------------------
#
# One engine for both paths, running on numpy float64 so every operation has
# IEEE semantics (1/0 = inf, overflowing exp = inf, (-8)^0.5 = nan) and the
# scalar and grid results agree bitwise. ``lazy=True`` is the scalar mode:
# where() short-circuits and sqrt/log raise on domain violations instead of
# producing NaN.


def _eval(node, env, lazy: bool):
    if isinstance(node, _Num):
        return np.float64(node.value)
    if isinstance(node, _Var):
        return env[node.name]
    if isinstance(node, _Const):
        return np.float64(CONSTANTS[node.name])
    if isinstance(node, _Unary):
        return -_eval(node.operand, env, lazy)
    if isinstance(node, _Bin):
        a = _eval(node.lhs, env, lazy)
        b = _eval(node.rhs, env, lazy)
        op = node.op
        with np.errstate(all="ignore"):
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                return a / b
            if op == "^":
                return a ** b
            if op == "<":
                return np.where(a < b, 1.0, 0.0)
            if op == "<=":
                return np.where(a <= b, 1.0, 0.0)
            if op == ">":
                return np.where(a > b, 1.0, 0.0)
            if op == ">=":
                return np.where(a >= b, 1.0, 0.0)
            return np.where(a == b, 1.0, 0.0)
    fn = node.fn
    if fn == "where":
        cond = _eval(node.args[0], env, lazy)
        if lazy:
            return _eval(node.args[1] if cond != 0.0 else node.args[2], env, lazy)
        with np.errstate(all="ignore"):
            return np.where(cond != 0.0,
                            _eval(node.args[1], env, lazy),
                            _eval(node.args[2], env, lazy))
    with np.errstate(all="ignore"):
        if fn in ("sqrt", "log"):
            a = _eval(node.args[0], env, lazy)
            if lazy:
                if fn == "sqrt" and a < 0.0:
                    raise ExprEvalError(f"sqrt of negative value in '{_unparse(node)}'")
                if fn == "log" and a <= 0.0:
                    raise ExprEvalError(f"log of non-positive value in '{_unparse(node)}'")
            return np.sqrt(a) if fn == "sqrt" else np.log(a)
        if fn in ("min", "max"):
            a = _eval(node.args[0], env, lazy)
            b = _eval(node.args[1], env, lazy)
            return np.minimum(a, b) if fn == "min" else np.maximum(a, b)
        if fn == "abs":
            return np.abs(_eval(node.args[0], env, lazy))
        return getattr(np, fn)(_eval(node.args[0], env, lazy))


# --- printing ------------------------------------------------------------

_PREC = {"cmp": 1, "add": 2, "mul": 3, "unary": 4, "pow": 5, "atom": 6}


def _prec(node) -> int:
    if isinstance(node, _Bin):
        if node.op in _CMP_OPS:
            return _PREC["cmp"]
        if node.op in "+-":
            return _PREC["add"]
        if node.op in "*/":
            return _PREC["mul"]
        return _PREC["pow"]
    if isinstance(node, _Unary):
        return _PREC["unary"]
    return _PREC["atom"]


def _wrap(child, parent_prec, strict) -> str:
    s = _unparse(child)
    p = _prec(child)
    if p < parent_prec or (strict and p == parent_prec):
        return f"({s})"
    return s


def _unparse(node) -> str:
    if isinstance(node, _Num):
        return repr(node.value)
    if isinstance(node, (_Var, _Const)):
        return node.name
    if isinstance(node, _Unary):
        return "-" + _wrap(node.operand, _PREC["unary"], strict=False)
    if isinstance(node, _Bin):
        p = _prec(node)
        if node.op == "^":  # right-associative
            return f"{_wrap(node.lhs, p, strict=True)}^{_wrap(node.rhs, p, strict=False)}"
        lhs = _wrap(node.lhs, p, strict=False)
        rhs = _wrap(node.rhs, p, strict=True)
        return f"{lhs} {node.op} {rhs}"
    return f"{node.fn}({', '.join(_unparse(a) for a in node.args)})"


def _collect_vars(node, out: set) -> None:
    if isinstance(node, _Var):
        out.add(node.name)
    elif isinstance(node, _Unary):
        _collect_vars(node.operand, out)
    elif isinstance(node, _Bin):
        _collect_vars(node.lhs, out)
        _collect_vars(node.rhs, out)
    elif isinstance(node, _Call):
        for a in node.args:
            _collect_vars(a, out)


class Expr:
    """Parsed, immutable expression; shareable and reentrant."""

    __slots__ = ("root", "source")

    def __init__(self, root, source: str):
        self.root = root
        self.source = source

    def __call__(self, x: float = 0.0, y: float = 0.0, z: float = 0.0,
                 t: float = 0.0) -> float:
        env = {"x": np.float64(x), "y": np.float64(y),
               "z": np.float64(z), "t": np.float64(t)}
        return float(_eval(self.root, env, lazy=True))

    def eval_grid(self, X: np.ndarray, Y: np.ndarray, Z: np.ndarray,
                  t: float = 0.0) -> np.ndarray:
        out = _eval(self.root, {"x": X, "y": Y, "z": Z, "t": np.float64(t)},
                    lazy=False)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), X.shape).copy() \
            if np.ndim(out) == 0 else out

    def variables(self) -> frozenset:
        out: set = set()
        _collect_vars(self.root, out)
        return frozenset(out)

    def is_constant(self) -> bool:
        return not self.variables()

    def __str__(self) -> str:
        return _unparse(self.root)

    def __repr__(self) -> str:
        return f"Expr({_unparse(self.root)!r})"


def parse_expr(src: str) -> Expr:
    return Expr(_Parser(src).parse(), src)
