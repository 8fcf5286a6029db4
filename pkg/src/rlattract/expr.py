"""Minimal arithmetic expression language for time-varying coefficients.

Grammar (standard precedence, ``^`` binds tightest and associates right,
unary minus next, then ``* /``, then ``+ -``)::

    expr      := add
    add       := mul (('+' | '-') mul)*
    mul       := unary (('*' | '/') unary)*
    unary     := '-' unary | power
    power     := atom ('^' unary)?
    atom      := NUMBER | 't' | FUNC '(' expr ')' | '(' expr ')'
               | 'piecewise' '(' ('t' '<=' NUMBER ':' expr ',')+
                                 'else' ':' expr ')'
    FUNC      := 'sqrt' | 'exp' | 'log' | 'sin' | 'cos' | 'abs'

Piecewise thresholds must be numeric constants in strictly increasing
order; branches are selected by the first matching threshold.  Syntax
errors report the byte offset and the expected tokens; evaluation
reports domain faults (division by zero, log of a nonpositive value,
overflow) instead of returning non-finite values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExprDomainError, ExprSyntaxError

__all__ = [
    "Expr",
    "parse",
    "evaluate",
    "eval_array",
    "eval_matrix",
    "pretty",
    "continuity_warnings",
]


# ---------------------------------------------------------------- AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class TimeVar:
    pass


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


@dataclass(frozen=True)
class Piecewise:
    thresholds: tuple
    branches: tuple
    otherwise: "Expr"


Expr = Union[Num, TimeVar, Unary, Bin, Call, Piecewise]

_FUNCS = ("sqrt", "exp", "log", "sin", "cos", "abs")


# ---------------------------------------------------------------- lexer

_SYMBOLS = ("<=", "+", "-", "*", "/", "^", "(", ")", ",", ":")


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'ident', symbol itself, 'eof'
    text: str
    offset: int


def _tokenize(src: str) -> list:
    toks = []
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if src.startswith("<=", i):
            toks.append(_Tok("<=", "<=", i))
            i += 2
            continue
        if c in "+-*/^(),:":
            toks.append(_Tok(c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
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
                float(text)
            except ValueError:
                raise ExprSyntaxError(
                    f"malformed number {text!r} at offset {i}", i, ("number",)
                ) from None
            toks.append(_Tok("num", text, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("ident", src[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r} at offset {i}", i, ())
    toks.append(_Tok("eof", "", n))
    return toks


# ---------------------------------------------------------------- parser

class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Tok:
        tok = self.peek()
        if tok.kind != kind:
            raise ExprSyntaxError(
                f"expected {what} at offset {tok.offset}, found {tok.text or 'end of input'!r}",
                tok.offset,
                (what,),
            )
        return self.next()

    def parse_expr(self) -> Expr:
        node = self.parse_mul()
        while self.peek().kind in ("+", "-"):
            op = self.next().kind
            node = Bin(op, node, self.parse_mul())
        return node

    def parse_mul(self) -> Expr:
        node = self.parse_unary()
        while self.peek().kind in ("*", "/"):
            op = self.next().kind
            node = Bin(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Expr:
        if self.peek().kind == "-":
            self.next()
            return Unary("-", self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        if self.peek().kind == "^":
            self.next()
            return Bin("^", base, self.parse_unary())  # right-associative
        return base

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            return Num(float(tok.text))
        if tok.kind == "(":
            self.next()
            node = self.parse_expr()
            self.expect(")", "')'")
            return node
        if tok.kind == "ident":
            self.next()
            name = tok.text
            if name == "t":
                return TimeVar()
            if name in _FUNCS:
                self.expect("(", "'('")
                arg = self.parse_expr()
                self.expect(")", "')'")
                return Call(name, arg)
            if name == "piecewise":
                return self.parse_piecewise(tok.offset)
            raise ExprSyntaxError(
                f"unknown identifier {name!r} at offset {tok.offset}",
                tok.offset,
                ("t",) + _FUNCS + ("piecewise",),
            )
        raise ExprSyntaxError(
            f"expected a value at offset {tok.offset}, found {tok.text or 'end of input'!r}",
            tok.offset,
            ("number", "t", "function", "'('"),
        )

    def parse_piecewise(self, offset: int) -> Expr:
        self.expect("(", "'('")
        thresholds = []
        branches = []
        while True:
            tok = self.peek()
            if tok.kind == "ident" and tok.text == "else":
                self.next()
                self.expect(":", "':'")
                otherwise = self.parse_expr()
                self.expect(")", "')'")
                if not thresholds:
                    raise ExprSyntaxError(
                        f"piecewise at offset {offset} needs at least one "
                        "'t <= c:' branch before 'else'",
                        offset,
                        ("t <= threshold",),
                    )
                return Piecewise(tuple(thresholds), tuple(branches), otherwise)
            tvar = self.expect("ident", "'t' or 'else'")
            if tvar.text != "t":
                raise ExprSyntaxError(
                    f"piecewise condition must start with 't' at offset {tvar.offset}",
                    tvar.offset,
                    ("t", "else"),
                )
            self.expect("<=", "'<='")
            neg = False
            if self.peek().kind == "-":
                self.next()
                neg = True
            num = self.expect("num", "numeric threshold")
            thr = -float(num.text) if neg else float(num.text)
            if thresholds and thr <= thresholds[-1]:
                raise ExprSyntaxError(
                    f"piecewise thresholds must increase: {thr} at offset {num.offset}",
                    num.offset,
                    ("larger threshold",),
                )
            thresholds.append(thr)
            self.expect(":", "':'")
            branches.append(self.parse_expr())
            self.expect(",", "','")


def parse(src: str) -> Expr:
    """Parse ``src`` into an expression tree; ExprSyntaxError on failure."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0, ("expression",))
    parser = _Parser(_tokenize(src))
    node = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ExprSyntaxError(
            f"unexpected trailing input at offset {tok.offset}: {tok.text!r}",
            tok.offset,
            ("end of input",),
        )
    return node


# ---------------------------------------------------------------- evaluation

def _fault(msg: str, t):
    raise ExprDomainError(msg + f" (at t = {t})", t=t)


def evaluate(e: Expr, t: float) -> float:
    """Evaluate at a single time t >= 0; IEEE double semantics with
    domain faults raised as ExprDomainError."""
    if t < 0.0:
        raise ExprDomainError(f"expressions are defined for t >= 0, got {t}", t=t)
    val = _eval(e, t)
    if not math.isfinite(val):
        _fault("non-finite result (overflow)", t)
    return val


def _eval(e: Expr, t: float) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, TimeVar):
        return t
    if isinstance(e, Unary):
        return -_eval(e.arg, t)
    if isinstance(e, Bin):
        a = _eval(e.left, t)
        b = _eval(e.right, t)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                _fault("division by zero", t)
            return a / b
        # '^'
        if a < 0.0 and b != round(b):
            _fault(f"negative base {a} with non-integer exponent", t)
        try:
            return float(a**b)
        except OverflowError:
            _fault("overflow in power", t)
    if isinstance(e, Call):
        v = _eval(e.arg, t)
        if e.fn == "sqrt":
            if v < 0.0:
                _fault(f"sqrt of negative value {v}", t)
            return math.sqrt(v)
        if e.fn == "exp":
            try:
                return math.exp(v)
            except OverflowError:
                _fault("overflow in exp", t)
        if e.fn == "log":
            if v <= 0.0:
                _fault(f"log of nonpositive value {v}", t)
            return math.log(v)
        if e.fn == "sin":
            return math.sin(v)
        if e.fn == "cos":
            return math.cos(v)
        return abs(v)  # 'abs'
    # Piecewise: first matching threshold wins
    for thr, branch in zip(e.thresholds, e.branches):
        if t <= thr:
            return _eval(branch, t)
    return _eval(e.otherwise, t)


def eval_array(e: Expr, ts: np.ndarray) -> np.ndarray:
    """Vectorized evaluation; branches of piecewise nodes are evaluated
    only where selected, so an inactive branch cannot fault."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0.0):
        raise ExprDomainError("expressions are defined for t >= 0")
    out = _eval_arr(e, ts)
    if not np.all(np.isfinite(out)):
        bad = float(ts[~np.isfinite(out)][0])
        _fault("non-finite result (overflow)", bad)
    return out


def _eval_arr(e: Expr, ts: np.ndarray) -> np.ndarray:
    if isinstance(e, Num):
        return np.full(ts.shape, e.value)
    if isinstance(e, TimeVar):
        return ts.copy()
    if isinstance(e, Unary):
        return -_eval_arr(e.arg, ts)
    if isinstance(e, Bin):
        a = _eval_arr(e.left, ts)
        b = _eval_arr(e.right, ts)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(b == 0.0):
                _fault("division by zero", float(ts[b == 0.0][0]))
            return a / b
        neg = (a < 0.0) & (b != np.round(b))
        if np.any(neg):
            _fault("negative base with non-integer exponent", float(ts[neg][0]))
        with np.errstate(over="ignore", invalid="ignore"):
            return a**b
    if isinstance(e, Call):
        v = _eval_arr(e.arg, ts)
        if e.fn == "sqrt":
            if np.any(v < 0.0):
                _fault("sqrt of negative value", float(ts[v < 0.0][0]))
            return np.sqrt(v)
        if e.fn == "exp":
            with np.errstate(over="ignore"):
                return np.exp(v)
        if e.fn == "log":
            if np.any(v <= 0.0):
                _fault("log of nonpositive value", float(ts[v <= 0.0][0]))
            return np.log(v)
        if e.fn == "sin":
            return np.sin(v)
        if e.fn == "cos":
            return np.cos(v)
        return np.abs(v)
    out = np.empty(ts.shape)
    remaining = np.ones(ts.shape, dtype=bool)
    for thr, branch in zip(e.thresholds, e.branches):
        sel = remaining & (ts <= thr)
        if np.any(sel):
            out[sel] = _eval_arr(branch, ts[sel])
        remaining &= ~sel
    if np.any(remaining):
        out[remaining] = _eval_arr(e.otherwise, ts[remaining])
    return out


def eval_matrix(entries, t: float) -> np.ndarray:
    """Entrywise evaluation of a matrix (or vector) of expressions.

    A fault in any entry is re-raised with its (row, column) index."""
    rows = []
    for i, row in enumerate(entries):
        vals = []
        for j, e in enumerate(row):
            try:
                vals.append(evaluate(e, t))
            except ExprDomainError as exc:
                raise ExprDomainError(f"entry ({i}, {j}): {exc}", t=t) from exc
        rows.append(vals)
    return np.asarray(rows)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def pretty(e: Expr) -> str:
    """Render the tree to source that reparses to the same evaluation."""
    return _pp(e, 0)


def _pp(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Num):
        v = e.value
        text = repr(v)
        if v < 0:
            return f"({text})"
        return text
    if isinstance(e, TimeVar):
        return "t"
    if isinstance(e, Unary):
        inner = _pp(e.arg, _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["neg"] else text
    if isinstance(e, Bin):
        prec = _PREC[e.op]
        if e.op == "^":
            left = _pp(e.left, prec + 1)   # ^ is right-associative
            right = _pp(e.right, prec)
        else:
            left = _pp(e.left, prec)
            right = _pp(e.right, prec + 1)  # left-associative
        text = f"{left} {e.op} {right}"
        return f"({text})" if parent_prec > prec else text
    if isinstance(e, Call):
        return f"{e.fn}({_pp(e.arg, 0)})"
    parts = [
        f"t <= {thr!r}: {_pp(branch, 0)}"
        for thr, branch in zip(e.thresholds, e.branches)
    ]
    parts.append(f"else: {_pp(e.otherwise, 0)}")
    return "piecewise(" + ", ".join(parts) + ")"


def continuity_warnings(e: Expr, label: str = "expression") -> list:
    """Jump sizes at piecewise thresholds; coefficients are required to
    be continuous, so jumps above 1e-9 are reported as warnings."""
    warnings = []

    def visit(node):
        if isinstance(node, (Num, TimeVar)):
            return
        if isinstance(node, Unary):
            visit(node.arg)
        elif isinstance(node, Bin):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, Call):
            visit(node.arg)
        elif isinstance(node, Piecewise):
            branches = list(node.branches) + [node.otherwise]
            for i, thr in enumerate(node.thresholds):
                try:
                    left = _eval(branches[i], thr)
                    right = _eval(branches[i + 1], thr)
                except ExprDomainError:
                    continue
                jump = abs(left - right)
                if jump > 1e-9 * (1.0 + abs(left)):
                    warnings.append(
                        f"{label}: discontinuity {jump:.3e} at piecewise "
                        f"threshold t = {thr}"
                    )
            for br in branches:
                visit(br)

    visit(e)
    return warnings
