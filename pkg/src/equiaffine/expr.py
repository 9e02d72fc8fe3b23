"""Scalar expressions over chart coordinates.

Expressions are immutable trees parsed from a small infix grammar::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ('^' exponent)*
    exponent := ['-'] atom            (must be constant)
    atom     := number | coordinate | func '(' expr ')' | '(' expr ')'

All binary operators are left-associative.  Evaluation is vectorised: a point
may be a single coordinate vector of shape ``(n,)`` or a batch ``(..., n)``.
First- and second-order derivatives are propagated forward (jets), so they are
exact up to rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Expression", "Const", "Var", "Neg", "Func", "BinOp", "Pow",
    "ParseError", "DomainError", "Jet1", "Jet2",
    "parse", "render", "evaluate", "eval_jet1", "eval_jet2", "jets", "jets_many",
    "differentiate", "compile_many", "variables",
    "const", "var", "add", "sub", "mul", "div", "neg", "power", "func",
    "sum_of", "FUNCTIONS", "default_names",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "sinh", "cosh")


class Expression:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, slots=True)
class Const(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expression):
    index: int


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True, slots=True)
class Func(Expression):
    name: str
    arg: Expression


@dataclass(frozen=True, slots=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Pow(Expression):
    base: Expression
    exponent: float


class ParseError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")

    def pointer(self) -> str:
        """Two-line diagnostic with a caret under the offending column."""
        return f"{self.text}\n{' ' * self.position}^ {self.message}"


class DomainError(ValueError):
    """Evaluation left the domain of an elementary function."""

    def __init__(self, message: str, subtree: Expression, point=None):
        self.subtree = subtree
        self.point = None if point is None else np.asarray(point, dtype=float)
        where = "" if point is None else f" at point {self.point.tolist()}"
        super().__init__(f"{message} in '{render(subtree)}'{where}")


def default_names(n: int) -> list[str]:
    return [f"x{k}" for k in range(n)]


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = {name: k for k, name in enumerate(names)}
        self.n = len(names)
        self.tokens = self._tokenize()
        self.i = 0

    def _tokenize(self):
        tokens, pos, text = [], 0, self.text
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                col = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ParseError(f"unexpected character {text[col]!r}", col, text)
            kind = m.lastgroup
            tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos, self.text)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            arg = self.unary()
            # negative literals are stored as constants so render/parse round-trips
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self) -> Expression:
        node = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            pos = self.take()[2]
            sign = 1.0
            if self.peek()[0] == "op" and self.peek()[1] == "-":
                self.take()
                sign = -1.0
            exponent = _fold(self.atom())
            if not isinstance(exponent, Const):
                raise ParseError("exponent must be a constant", pos, self.text)
            node = Pow(node, sign * exponent.value)
        return node

    def atom(self) -> Expression:
        kind, text, pos = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ParseError(f"number {text} out of range", pos, self.text)
            return Const(value)
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            if text in self.names:
                return Var(self.names[text])
            if re.fullmatch(r"x\d+", text):
                raise ParseError(
                    f"unknown variable {text} in dimension {self.n}", pos, self.text)
            raise ParseError(f"unknown identifier {text!r}", pos, self.text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", pos, self.text)


def parse(text: str, n: int, names: Sequence[str] | None = None) -> Expression:
    """Parse ``text`` as a function of ``n`` coordinates.

    Coordinates are named ``x0 .. x{n-1}`` unless ``names`` is given.
    Raises :class:`ParseError` carrying the character position of the fault.
    """
    if n < 2:
        raise ValueError(f"dimension must be at least 2, got {n}")
    if names is None:
        names = default_names(n)
    if len(names) != n:
        raise ValueError(f"expected {n} coordinate names, got {len(names)}")
    if not text or not text.strip():
        raise ParseError("empty expression", 0, text)
    try:
        return _Parser(text, names).parse()
    except RecursionError:
        raise ParseError("expression nested too deeply", 0, text) from None


# ---------------------------------------------------------------------------
# rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Expression) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1, node.value) < 0):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def _number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value)) if value != 0 else "0"
    return repr(value)


def render(node: Expression, names: Sequence[str] | None = None) -> str:
    """Render to text accepted by :func:`parse` (parses back to an equal tree)."""

    def wrap(child: Expression, min_prec: int) -> str:
        s = go(child)
        return f"({s})" if _prec(child) < min_prec else s

    def go(e: Expression) -> str:
        if isinstance(e, Const):
            return _number(e.value)
        if isinstance(e, Var):
            return names[e.index] if names is not None else f"x{e.index}"
        if isinstance(e, Neg):
            return "-" + wrap(e.arg, 3)
        if isinstance(e, Func):
            return f"{e.name}({go(e.arg)})"
        if isinstance(e, Pow):
            ex = _number(e.exponent)
            if e.exponent < 0:
                ex = f"({ex})"
            return f"{wrap(e.base, 5)}^{ex}"
        if isinstance(e, BinOp):
            p = _PREC[e.op]
            return f"{wrap(e.left, p)} {e.op} {wrap(e.right, p + 1)}"
        raise TypeError(f"not an expression node: {e!r}")

    return go(node)


def variables(node: Expression) -> set[int]:
    """Coordinate indices referenced by ``node``."""
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, (Neg, Func)):
        return variables(node.arg)
    if isinstance(node, Pow):
        return variables(node.base)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()


# ---------------------------------------------------------------------------
# jets

@dataclass(frozen=True)
class Jet1:
    value: np.ndarray
    gradient: np.ndarray


@dataclass(frozen=True)
class Jet2:
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _sym_outer(a, b):
    # a_i b_j + b_i a_j is bitwise symmetric
    return _outer(a, b) + _outer(b, a)


class _Jets:
    """Forward propagation of (value, gradient, hessian) through a tree."""

    def __init__(self, p: np.ndarray, order: int):
        self.p = p
        self.order = order
        self.n = p.shape[-1]
        self.shape = p.shape[:-1]
        self.memo = {}

    def fail(self, message, node, mask):
        mask = np.broadcast_to(mask, self.shape)
        idx = tuple(np.argwhere(mask)[0]) if mask.ndim else ()
        raise DomainError(message, node, self.p[idx])

    def const(self, c):
        v = np.full(self.shape, float(c))
        g = np.zeros(self.shape + (self.n,)) if self.order >= 1 else None
        h = np.zeros(self.shape + (self.n, self.n)) if self.order >= 2 else None
        return v, g, h

    def chain(self, x, f0, f1, f2):
        """Compose a univariate function with derivatives f1, f2 onto jet x."""
        v, g, h = x
        g2 = h2 = None
        if self.order >= 1:
            g2 = f1[..., None] * g
        if self.order >= 2:
            h2 = f1[..., None, None] * h + f2[..., None, None] * _outer(g, g)
        return f0, g2, h2

    def mul(self, a, b):
        av, ag, ah = a
        bv, bg, bh = b
        g = h = None
        if self.order >= 1:
            g = ag * bv[..., None] + av[..., None] * bg
        if self.order >= 2:
            h = (ah * bv[..., None, None] + av[..., None, None] * bh
                 + _sym_outer(ag, bg))
        return av * bv, g, h

    def add(self, a, b, sign=1.0):
        av, ag, ah = a
        bv, bg, bh = b
        if sign > 0:
            return (av + bv, None if ag is None else ag + bg,
                    None if ah is None else ah + bh)
        return (av - bv, None if ag is None else ag - bg,
                None if ah is None else ah - bh)

    def neg(self, a):
        av, ag, ah = a
        return -av, None if ag is None else -ag, None if ah is None else -ah

    def recip(self, a, node):
        v = a[0]
        zero = v == 0
        if np.any(zero):
            self.fail("division by zero", node, zero)
        r = 1.0 / v
        return self.chain(a, r, -r * r, 2.0 * r * r * r)

    def int_power(self, a, k: int):
        result = None
        base = a
        while k:
            if k & 1:
                result = base if result is None else self.mul(result, base)
            k >>= 1
            if k:
                base = self.mul(base, base)
        return result

    def run(self, node: Expression):
        # structurally equal subtrees (e.g. a shared one-form) are evaluated once
        if isinstance(node, (Const, Var)):
            return self._run(node)
        hit = self.memo.get(node)
        if hit is None:
            hit = self.memo[node] = self._run(node)
        return hit

    def _run(self, node: Expression):
        if isinstance(node, Const):
            return self.const(node.value)
        if isinstance(node, Var):
            if node.index >= self.n:
                raise DomainError("variable index out of range", node)
            v = self.p[..., node.index].copy()
            g = h = None
            if self.order >= 1:
                g = np.zeros(self.shape + (self.n,))
                g[..., node.index] = 1.0
            if self.order >= 2:
                h = np.zeros(self.shape + (self.n, self.n))
            return v, g, h
        if isinstance(node, Neg):
            return self.neg(self.run(node.arg))
        if isinstance(node, BinOp):
            a = self.run(node.left)
            b = self.run(node.right)
            if node.op == "+":
                return self.add(a, b)
            if node.op == "-":
                return self.add(a, b, -1.0)
            if node.op == "*":
                return self.mul(a, b)
            return self.mul(a, self.recip(b, node))
        if isinstance(node, Pow):
            a = self.run(node.base)
            e = node.exponent
            if e == 0:
                return self.const(1.0)
            if float(e).is_integer():
                k = int(abs(e))
                out = self.int_power(a, k)
                return out if e > 0 else self.recip(out, node)
            v = a[0]
            bad = v <= 0
            if np.any(bad):
                self.fail("non-integer power of non-positive base", node, bad)
            return self.chain(a, v ** e, e * v ** (e - 1), e * (e - 1) * v ** (e - 2))
        if isinstance(node, Func):
            return self.func(node)
        raise TypeError(f"not an expression node: {node!r}")

    def func(self, node: Func):
        a = self.run(node.arg)
        v = a[0]
        name = node.name
        if name == "sin":
            s, c = np.sin(v), np.cos(v)
            return self.chain(a, s, c, -s)
        if name == "cos":
            s, c = np.sin(v), np.cos(v)
            return self.chain(a, c, -s, -c)
        if name == "tan":
            t = np.tan(v)
            sec2 = 1.0 + t * t
            return self.chain(a, t, sec2, 2.0 * t * sec2)
        if name == "exp":
            ex = np.exp(v)
            return self.chain(a, ex, ex, ex)
        if name == "sinh":
            s, c = np.sinh(v), np.cosh(v)
            return self.chain(a, s, c, s)
        if name == "cosh":
            s, c = np.sinh(v), np.cosh(v)
            return self.chain(a, c, s, c)
        if name == "ln":
            bad = v <= 0
            if np.any(bad):
                self.fail("logarithm of non-positive value", node, bad)
            r = 1.0 / v
            return self.chain(a, np.log(v), r, -r * r)
        if name == "sqrt":
            bad = v < 0 if self.order == 0 else v <= 0
            if np.any(bad):
                self.fail("square root outside its domain", node, bad)
            s = np.sqrt(v)
            with np.errstate(divide="ignore"):
                d1 = 0.5 / s
            return self.chain(a, s, d1, -0.5 * d1 / v if self.order >= 2 else d1)
        raise TypeError(f"unknown function {name!r}")


def jets_many(nodes: Sequence[Expression], p, order: int = 1) -> list[tuple]:
    """Jets of several expressions at the same points, sharing common subtrees.

    Each entry is ``(value, gradient, hessian)``; entries beyond ``order``
    (0, 1 or 2) are ``None``.  ``p`` has shape ``(..., n)``.
    """
    p = np.asarray(p, dtype=float)
    runner = _Jets(p, order)
    out = []
    for node in nodes:
        with np.errstate(all="ignore"):
            v, g, h = runner.run(node)
        v = np.asarray(v, dtype=float)
        bad = ~np.isfinite(v)
        if g is not None:
            bad = bad | ~np.all(np.isfinite(g), axis=-1)
        if np.any(bad):
            runner.fail("non-finite result", node, bad)
        if h is not None:
            h = 0.5 * (h + np.swapaxes(h, -1, -2))
        out.append((v, g, h))
    return out


def jets(node: Expression, p, order: int = 1):
    """Return ``(value, gradient, hessian)`` arrays up to ``order`` (0, 1 or 2)."""
    return jets_many([node], p, order)[0]


def evaluate(node: Expression, p):
    """Value of ``node`` at ``p`` (float for a single point, array for a batch)."""
    v = jets(node, p, 0)[0]
    return float(v) if v.ndim == 0 else v


def eval_jet1(node: Expression, p) -> Jet1:
    v, g, _ = jets(node, p, 1)
    return Jet1(v, g)


def eval_jet2(node: Expression, p) -> Jet2:
    v, g, h = jets(node, p, 2)
    return Jet2(v, g, h)


# ---------------------------------------------------------------------------
# simplifying constructors

def const(c: float) -> Const:
    return Const(float(c))


def var(k: int) -> Var:
    return Var(k)


def _is(node: Expression, c: float) -> bool:
    return isinstance(node, Const) and node.value == c


def _fold(node: Expression) -> Expression:
    """Replace ``node`` by a constant if it has no free coordinates."""
    if isinstance(node, Const) or variables(node):
        return node
    try:
        value = jets(node, np.zeros(2), 0)[0]
    except DomainError:
        return node
    return Const(float(value))


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if _is(a, 0) or _is(b, 0):
        return Const(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is(b, 0):
        raise ZeroDivisionError(f"division of '{render(a)}' by constant zero")
    if _is(a, 0):
        return Const(0.0)
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    return BinOp("/", a, b)


def power(a: Expression, e: float) -> Expression:
    e = float(e)
    if e == 0:
        return Const(1.0)
    if e == 1:
        return a
    if _is(a, 0) and e > 0:
        return Const(0.0)
    if _is(a, 1):
        return Const(1.0)
    return _fold(Pow(a, e)) if isinstance(a, Const) else Pow(a, e)


def func(name: str, a: Expression) -> Expression:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    node = Func(name, a)
    return _fold(node) if isinstance(a, Const) else node


def sum_of(terms) -> Expression:
    total: Expression = Const(0.0)
    for t in terms:
        total = add(total, t)
    return total


# ---------------------------------------------------------------------------
# symbolic differentiation

def differentiate(e: Expression, k: int) -> Expression:
    """Symbolic partial derivative of ``e`` with respect to coordinate ``k``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.index == k else 0.0)
    if k not in variables(e):
        return Const(0.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, k))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a, k), differentiate(b, k)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # (a/b)' = a'/b - a b' / b^2
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if isinstance(e, Pow):
        inner = differentiate(e.base, k)
        outer = mul(const(e.exponent), power(e.base, e.exponent - 1))
        return mul(outer, inner)
    if isinstance(e, Func):
        u = e.arg
        du = differentiate(u, k)
        name = e.name
        if name == "sin":
            d = func("cos", u)
        elif name == "cos":
            d = neg(func("sin", u))
        elif name == "tan":
            d = power(func("cos", u), -2)
        elif name == "exp":
            d = e
        elif name == "ln":
            return div(du, u)
        elif name == "sqrt":
            return div(du, mul(const(2), e))
        elif name == "sinh":
            d = func("cosh", u)
        else:
            d = func("sinh", u)
        return mul(d, du)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# compiled scalar evaluation

def _real_pow(a: float, e: float) -> float:
    if a <= 0:
        raise ValueError("non-integer power of non-positive base")
    return a ** e


class _Codegen:
    """Emit Python source for scalar evaluation, hoisting repeated subtrees."""

    def __init__(self, roots):
        self.counts = {}
        self.lines = []
        self.names = {}
        for root in roots:
            self._count(root)

    def _count(self, node):
        if isinstance(node, (Const, Var)):
            return
        seen = node in self.counts
        self.counts[node] = self.counts.get(node, 0) + 1
        if seen:
            return
        for child in _children(node):
            self._count(child)

    def emit(self, e: Expression) -> str:
        if isinstance(e, Const):
            return repr(e.value)
        if isinstance(e, Var):
            return f"x[{e.index}]"
        if e in self.names:
            return self.names[e]
        if isinstance(e, Neg):
            code = f"(-{self.emit(e.arg)})"
        elif isinstance(e, BinOp):
            code = f"({self.emit(e.left)} {e.op} {self.emit(e.right)})"
        elif isinstance(e, Pow):
            if float(e.exponent).is_integer():
                code = f"({self.emit(e.base)} ** {int(e.exponent)})"
            else:
                code = f"_pw({self.emit(e.base)}, {e.exponent!r})"
        elif isinstance(e, Func):
            name = "log" if e.name == "ln" else e.name
            code = f"_m.{name}({self.emit(e.arg)})"
        else:
            raise TypeError(f"not an expression node: {e!r}")
        if self.counts.get(e, 0) > 1:
            tmp = f"_t{len(self.names)}"
            self.lines.append(f"    {tmp} = {code}")
            self.names[e] = tmp
            return tmp
        return code


def _children(node):
    if isinstance(node, (Neg, Func)):
        return (node.arg,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    return ()


def compile_many(exprs: Sequence[Expression]) -> Callable[[Sequence[float]], list[float]]:
    """Compile expressions into one fast scalar function ``f(x) -> list``.

    Intended for hot loops (geodesic integration).  On a domain failure the
    expressions are re-evaluated by the tree walker so the raised
    :class:`DomainError` names the faulty subtree.
    """
    gen = _Codegen(exprs)
    results = [gen.emit(e) for e in exprs]
    code = "def _f(x):\n" + "".join(line + "\n" for line in gen.lines)
    code += f"    return [{', '.join(results)}]\n"
    scope = {"_m": math, "_pw": _real_pow}
    exec(compile(code, "<expression>", "exec"), scope)
    raw = scope["_f"]

    def f(x):
        try:
            out = raw(x)
        except (ValueError, ZeroDivisionError, OverflowError):
            out = None
        if out is None or not math.isfinite(sum(out)):
            jets_many(exprs, np.asarray(x, dtype=float), 0)
            raise DomainError("evaluation failed", exprs[0], x)
        return out

    return f
