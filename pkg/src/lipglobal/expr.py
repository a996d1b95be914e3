"""Problem files and the piecewise-smooth expression forest.

A problem declares a map F: R^n x R^m -> R^n whose coordinates are built
from constants, the variables x1..xn, y1..ym, the operators + - * / ^
(non-negative integer powers) and abs(). ``min``/``max`` are accepted and
rewritten in terms of abs, so abs is the only nonsmooth primitive.

Example file::

    # comments start with '#'
    n = 2
    m = 0
    A = [[-2, 1], [4, -3]]
    xi = [0, 0]
    box = [-10, 10] x [-10, 10]
    F1 = x1^3 + abs(x2)
    F2 = 4*x1 + abs(x2) + x2^3

Statements may also be separated by ';' and several header assignments may
share a line (``n=1 m=1; F1 = x1 - y1``). ``param a = 0.5`` declares a named
constant that is substituted into the expressions at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .interval import UNIT, Interval

__all__ = [
    "Node",
    "ProblemDef",
    "ActivityRecord",
    "ProblemError",
    "ProblemSyntaxError",
    "DimensionError",
    "UnknownVariableError",
    "EvaluationError",
    "parse_problem",
    "load_problem",
    "print_problem",
    "parse_box",
    "parse_vector",
    "format_expr",
    "evaluate",
    "evaluate_many",
    "eval_selection_jacobian",
    "selection_jacobians",
    "activity",
    "default_eta",
    "interval_eval",
    "interval_jacobian",
    "algebraic_map",
    "algebraic_system",
    "inverse_problem",
    "as_system",
]


# ---------------------------------------------------------------------------
# errors


class ProblemError(ValueError):
    """Base class for problem-file errors; carries an optional source position."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(message + where)


class ProblemSyntaxError(ProblemError):
    pass


class DimensionError(ProblemError):
    pass


class UnknownVariableError(ProblemError):
    pass


class EvaluationError(ArithmeticError):
    """Raised on division by zero; ``node_id`` names the offending div node."""

    def __init__(self, message: str, node_id: int):
        self.node_id = node_id
        super().__init__(message)


# ---------------------------------------------------------------------------
# expression nodes

KINDS = ("const", "var", "add", "sub", "mul", "div", "pow", "neg", "abs")


@dataclass(frozen=True)
class Node:
    kind: str
    children: tuple["Node", ...] = ()
    value: float = 0.0  # constant value, or exponent for pow
    index: int = 0  # variable index (0-based)
    block: str = ""  # "x" or "y" for variables

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")

    def walk(self) -> Iterable["Node"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __str__(self) -> str:
        return format_expr(self)


def const(v: float) -> Node:
    return Node("const", value=float(v))


def xvar(i: int) -> Node:
    return Node("var", index=i, block="x")


def yvar(i: int) -> Node:
    return Node("var", index=i, block="y")


def _bin(kind: str, a: Node, b: Node) -> Node:
    return Node(kind, (a, b))


def add(a: Node, b: Node) -> Node:
    return _bin("add", a, b)


def sub(a: Node, b: Node) -> Node:
    return _bin("sub", a, b)


def mul(a: Node, b: Node) -> Node:
    return _bin("mul", a, b)


def div(a: Node, b: Node) -> Node:
    return _bin("div", a, b)


def power(a: Node, k: int) -> Node:
    if k < 0 or int(k) != k:
        raise ValueError("exponent must be a non-negative integer")
    return Node("pow", (a,), value=float(k))


def neg(a: Node) -> Node:
    return Node("neg", (a,))


def absolute(a: Node) -> Node:
    return Node("abs", (a,))


def node_min(a: Node, b: Node) -> Node:
    return div(sub(add(a, b), absolute(sub(a, b))), const(2.0))


def node_max(a: Node, b: Node) -> Node:
    return div(add(add(a, b), absolute(sub(a, b))), const(2.0))


def _fmt_const(v: float) -> str:
    s = repr(float(v))
    return f"({s})" if v < 0 else s


def format_expr(node: Node) -> str:
    """Canonical, fully parenthesized text; parses back to the same tree."""
    k = node.kind
    if k == "const":
        return _fmt_const(node.value)
    if k == "var":
        return f"{node.block}{node.index + 1}"
    if k == "neg":
        return f"(-({format_expr(node.children[0])}))"
    if k == "abs":
        return f"abs({format_expr(node.children[0])})"
    if k == "pow":
        child = node.children[0]
        base = format_expr(child)
        if child.kind not in ("const", "var"):
            base = f"({base})"
        return f"{base}^{int(node.value)}"
    op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
    a, b = node.children
    return f"({format_expr(a)} {op} {format_expr(b)})"


# ---------------------------------------------------------------------------
# problem definition


@dataclass(frozen=True)
class ActivityRecord:
    node_id: int
    argument: float
    active: bool
    text: str = ""


@dataclass(frozen=True, eq=False)
class ProblemDef:
    """Parsed map F(x, y); immutable. ``A``/``xi`` select algebraic mode Ax = F(x) + xi."""

    n: int
    m: int
    components: tuple[Node, ...]
    A: np.ndarray | None = None
    xi: np.ndarray | None = None
    name: str = "problem"
    box: tuple[tuple[float, float], ...] | None = None
    params: tuple[tuple[str, float], ...] = ()
    _program: "_Program" = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 0:
            raise DimensionError(f"invalid dimensions n={self.n}, m={self.m}")
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != self.n:
            raise DimensionError(f"expected {self.n} components, got {len(comps)}")
        for c in comps:
            for node in c.walk():
                if node.kind == "var":
                    lim = self.n if node.block == "x" else self.m
                    if not 0 <= node.index < lim:
                        raise DimensionError(
                            f"{node.block}{node.index + 1} out of range ({node.block}-dimension is {lim})"
                        )
        if self.A is not None:
            A = np.array(self.A, dtype=float)
            if A.shape != (self.n, self.n):
                raise DimensionError(f"A must be {self.n}x{self.n}, got shape {A.shape}")
            A.setflags(write=False)
            object.__setattr__(self, "A", A)
        if self.xi is not None:
            xi = np.array(self.xi, dtype=float).reshape(-1)
            if xi.shape != (self.n,):
                raise DimensionError(f"xi must have length {self.n}")
            xi.setflags(write=False)
            object.__setattr__(self, "xi", xi)
        if self.box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            if len(box) not in (self.n, self.n + self.m):
                raise DimensionError(f"box must have {self.n} or {self.n + self.m} intervals")
            if any(lo > hi for lo, hi in box):
                raise DimensionError("box interval with lo > hi")
            object.__setattr__(self, "box", box)
        object.__setattr__(self, "_program", _Program(comps, self.n, self.m))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProblemDef):
            return NotImplemented

        def arr_eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (
            self.n == other.n
            and self.m == other.m
            and self.components == other.components
            and arr_eq(self.A, other.A)
            and arr_eq(self.xi, other.xi)
            and self.box == other.box
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def abs_count(self) -> int:
        return len(self._program.abs_ids)

    def abs_nodes(self) -> list[Node]:
        prog = self._program
        return [prog.nodes[i] for i in prog.abs_ids]

    def x_box(self) -> tuple[tuple[float, float], ...] | None:
        return None if self.box is None else self.box[: self.n]

    def y_box(self) -> tuple[tuple[float, float], ...] | None:
        if self.box is None or len(self.box) < self.n + self.m:
            return None
        return self.box[self.n :]

    def with_box(self, box) -> "ProblemDef":
        return ProblemDef(self.n, self.m, self.components, self.A, self.xi, self.name, box, self.params)


# ---------------------------------------------------------------------------
# compiled program (flat postorder code shared by all evaluators)


class _Program:
    def __init__(self, components: Sequence[Node], n: int, m: int):
        self.n, self.m = n, m
        self.nodes: list[Node] = []
        self.code: list[tuple[str, tuple[int, ...], float, int, str]] = []
        self.outputs: list[int] = []
        self.abs_ids: list[int] = []  # instruction index of each abs node
        self.div_ids: list[int] = []
        for comp in components:
            self.outputs.append(self._emit(comp))

    def _emit(self, root: Node) -> int:
        # iterative postorder so deep trees do not hit the recursion limit
        stack: list[tuple[Node, bool]] = [(root, False)]
        result: list[int] = []
        while stack:
            node, done = stack.pop()
            if not done:
                stack.append((node, True))
                for child in reversed(node.children):
                    stack.append((child, False))
                continue
            nargs = len(node.children)
            args = tuple(result[len(result) - nargs :]) if nargs else ()
            if nargs:
                del result[len(result) - nargs :]
            idx = len(self.code)
            self.code.append((node.kind, args, node.value, node.index, node.block))
            self.nodes.append(node)
            if node.kind == "abs":
                self.abs_ids.append(idx)
            elif node.kind == "div":
                self.div_ids.append(idx)
            result.append(idx)
        return result[0]


# ---------------------------------------------------------------------------
# tokenizer and parser

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),=\[\]])"
)


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    line: int
    col: int


def _tokenize(stmt: str, line: int, col0: int) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(stmt):
        mt = _TOKEN.match(stmt, pos)
        if mt is None:
            raise ProblemSyntaxError(f"unexpected character {stmt[pos]!r}", line, col0 + pos)
        kind = mt.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, mt.group(), line, col0 + pos))
        pos = mt.end()
    toks.append(_Tok("end", "", line, col0 + len(stmt)))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], resolve):
        self.toks = toks
        self.pos = 0
        self.resolve = resolve  # name token -> Node

    # helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None) -> ProblemSyntaxError:
        t = tok or self.tok
        return ProblemSyntaxError(msg, t.line, t.col)

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "end":
            got = self.tok.text or "end of statement"
            raise self.error(f"expected {text!r}, got {got!r}")
        return self.advance()

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    # grammar
    def expr(self) -> Node:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self) -> Node:
        if self.at_op("-"):
            self.advance()
            nxt = self.peek()
            if self.tok.kind == "num" and not (nxt.kind == "op" and nxt.text == "^"):
                return const(-self._number(self.advance()))
            return neg(self.unary())
        if self.at_op("+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        while self.at_op("^"):
            self.advance()
            paren = self.at_op("(")
            if paren:
                self.advance()
            if self.at_op("-"):
                raise self.error("negative exponents are not supported")
            t = self.tok
            if t.kind != "num":
                raise self.error("exponent must be a non-negative integer literal")
            v = self._number(self.advance())
            if v != int(v):
                raise self.error("exponent must be an integer", t)
            if paren:
                self.expect(")")
            node = power(node, int(v))
        return node

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            return const(self._number(self.advance()))
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "name":
            if self.peek().kind == "op" and self.peek().text == "(" and t.text in ("abs", "min", "max"):
                self.advance()
                self.advance()
                a = self.expr()
                if t.text == "abs":
                    self.expect(")")
                    return absolute(a)
                self.expect(",")
                b = self.expr()
                self.expect(")")
                return node_min(a, b) if t.text == "min" else node_max(a, b)
            self.advance()
            return self.resolve(t)
        got = t.text or "end of statement"
        raise self.error(f"unexpected {got!r} in expression")

    def _number(self, t: _Tok) -> float:
        v = float(t.text)
        if not math.isfinite(v):
            raise self.error("numeric literal out of range", t)
        return v


def _const_value(node: Node, tok: _Tok) -> float:
    if any(n.kind == "var" for n in node.walk()):
        raise ProblemSyntaxError("expected a constant expression", tok.line, tok.col)
    prog = _Program([node], 1, 0)
    vals, _, _ = _run(prog, np.zeros((1, 1)), np.zeros((1, 0)), jac=False)
    return float(vals[0, 0])


_VAR = re.compile(r"^([xy])(\d+)$")
_COMP = re.compile(r"^F(\d+)$")


def _split_statements(text: str) -> list[tuple[str, int, int]]:
    out = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        col = 1
        for piece in body.split(";"):
            if piece.strip():
                out.append((piece, ln, col))
            col += len(piece) + 1
    return out


def parse_problem(text: str, params: dict[str, float] | None = None, name: str | None = None) -> ProblemDef:
    """Parse problem-file text; ``params`` override ``param`` declarations in the file."""
    overrides = dict(params or {})
    header: dict[str, object] = {}
    comps: dict[int, tuple[list[_Tok], int]] = {}
    declared: dict[str, float] = {}
    pending: list[tuple[str, list[_Tok]]] = []

    # first pass: split each statement into assignments
    for stmt, ln, col in _split_statements(text):
        toks = _tokenize(stmt, ln, col)
        i = 0
        while toks[i].kind != "end":
            t = toks[i]
            if t.kind != "name":
                raise ProblemSyntaxError(f"expected an assignment, got {t.text!r}", t.line, t.col)
            key = t.text
            j = i + 1
            if key == "param":
                if toks[j].kind != "name":
                    raise ProblemSyntaxError("expected a parameter name after 'param'", toks[j].line, toks[j].col)
                key = "param:" + toks[j].text
                j += 1
            if not (toks[j].kind == "op" and toks[j].text == "="):
                raise ProblemSyntaxError(f"expected '=' after {t.text!r}", toks[j].line, toks[j].col)
            j += 1
            # the value runs until the next `name =` pair at bracket depth 0
            k = j
            depth = 0
            while toks[k].kind != "end":
                tk = toks[k]
                if tk.kind == "op" and tk.text in "([":
                    depth += 1
                elif tk.kind == "op" and tk.text in ")]":
                    depth -= 1
                elif depth == 0 and k > j and tk.kind == "name" and toks[k + 1].text == "=":
                    break
                elif (
                    depth == 0
                    and k > j
                    and tk.kind == "name"
                    and tk.text == "param"
                    and toks[k + 1].kind == "name"
                ):
                    break
                k += 1
            value = toks[j:k] + [_Tok("end", "", toks[k].line, toks[k].col)]
            if len(value) == 1:
                raise ProblemSyntaxError(f"missing value for {t.text!r}", t.line, t.col)
            pending.append((key, value))
            i = k

    def bad_name(t: _Tok) -> Node:
        raise UnknownVariableError(f"unknown name {t.text!r}", t.line, t.col)

    # parameters first so expressions can use them
    for key, value in pending:
        if key.startswith("param:"):
            pname = key[6:]
            p = _Parser(value, lambda t: _resolve_param(t, declared))
            v = _const_value(p.expr(), value[0])
            if p.tok.kind != "end":
                raise p.error(f"unexpected {p.tok.text!r}")
            declared[pname] = overrides.pop(pname, v)
    if overrides:
        raise UnknownVariableError(f"unknown parameter(s) {sorted(overrides)}")

    const_parser = lambda toks: _Parser(toks, lambda t: _resolve_param(t, declared))  # noqa: E731

    for key, value in pending:
        if key.startswith("param:"):
            continue
        mc = _COMP.match(key)
        if mc:
            k = int(mc.group(1))
            if k in comps:
                raise ProblemSyntaxError(f"component F{k} defined twice", value[0].line, value[0].col)
            comps[k] = (value, value[0].line)
            continue
        if key in header:
            raise ProblemSyntaxError(f"duplicate header {key!r}", value[0].line, value[0].col)
        if key in ("n", "m"):
            t = value[0]
            if t.kind != "num" or value[1].kind != "end" or float(t.text) != int(float(t.text)):
                raise ProblemSyntaxError(f"{key} must be a non-negative integer", t.line, t.col)
            header[key] = int(float(t.text))
        elif key == "name":
            header[key] = " ".join(t.text for t in value[:-1])
        elif key == "A":
            header[key] = _parse_matrix(const_parser(value))
        elif key == "xi":
            header[key] = _parse_vector(const_parser(value))
        elif key == "box":
            header[key] = _parse_box(const_parser(value))
        else:
            raise ProblemSyntaxError(f"unknown header {key!r}", value[0].line, value[0].col)

    if "n" not in header:
        raise ProblemSyntaxError("missing header 'n'")
    n = int(header["n"])
    m = int(header.get("m", 0))
    if n < 1:
        raise DimensionError("n must be at least 1")

    def resolve(t: _Tok) -> Node:
        mv = _VAR.match(t.text)
        if mv:
            block, idx = mv.group(1), int(mv.group(2))
            lim = n if block == "x" else m
            if not 1 <= idx <= lim:
                raise DimensionError(f"{t.text} out of range ({block}-dimension is {lim})", t.line, t.col)
            return xvar(idx - 1) if block == "x" else yvar(idx - 1)
        if t.text in declared:
            return const(declared[t.text])
        return bad_name(t)

    components = []
    for k in range(1, n + 1):
        if k not in comps:
            raise DimensionError(f"missing component F{k} (n={n})")
        toks, _ = comps[k]
        p = _Parser(toks, resolve)
        node = p.expr()
        if p.tok.kind != "end":
            raise p.error(f"unexpected {p.tok.text!r} after expression")
        components.append(node)
    extra = sorted(set(comps) - set(range(1, n + 1)))
    if extra:
        toks, ln = comps[extra[0]]
        raise DimensionError(f"component F{extra[0]} exceeds n={n}", ln, toks[0].col)

    A = header.get("A")
    if A is not None:
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape != (n, n):
            raise DimensionError(f"A must be {n}x{n}")
    xi = header.get("xi")
    if xi is not None and A is None:
        raise DimensionError("xi given without A")
    if A is not None and xi is None:
        xi = np.zeros(n)
    return ProblemDef(
        n=n,
        m=m,
        components=tuple(components),
        A=A,
        xi=xi,
        name=str(header.get("name", name or "problem")),
        box=header.get("box"),  # type: ignore[arg-type]
        params=tuple(sorted(declared.items())),
    )


def _resolve_param(t: _Tok, declared: dict[str, float]) -> Node:
    if t.text in declared:
        return const(declared[t.text])
    raise UnknownVariableError(f"unknown name {t.text!r} in constant expression", t.line, t.col)


def _parse_vector(p: _Parser) -> list[float]:
    vals = _vector_body(p)
    if p.tok.kind != "end":
        raise p.error(f"unexpected {p.tok.text!r}")
    return vals


def _vector_body(p: _Parser) -> list[float]:
    p.expect("[")
    vals = []
    if not p.at_op("]"):
        while True:
            t = p.tok
            vals.append(_const_value(p.expr(), t))
            if p.at_op(","):
                p.advance()
                continue
            break
    p.expect("]")
    return vals


def _parse_matrix(p: _Parser) -> list[list[float]]:
    p.expect("[")
    rows = []
    while True:
        rows.append(_vector_body(p))
        if p.at_op(","):
            p.advance()
            continue
        break
    p.expect("]")
    if p.tok.kind != "end":
        raise p.error(f"unexpected {p.tok.text!r}")
    if len({len(r) for r in rows}) != 1:
        raise p.error("ragged matrix rows")
    return rows


def _const_tokens(text: str) -> _Parser:
    return _Parser(_tokenize(text, 1, 1), lambda t: _resolve_param(t, {}))


def parse_box(text: str) -> tuple[tuple[float, float], ...]:
    """Parse a box literal such as ``[-5, 5] x [-5, 5]``."""
    return _parse_box(_const_tokens(text))


def parse_vector(text: str) -> list[float]:
    """Parse a vector literal such as ``[1, -2/3]``."""
    return _parse_vector(_const_tokens(text))


def _parse_box(p: _Parser) -> tuple[tuple[float, float], ...]:
    box = []
    while True:
        t = p.tok
        iv = _vector_body(p)
        if len(iv) != 2:
            raise ProblemSyntaxError("box intervals need exactly two endpoints", t.line, t.col)
        box.append((iv[0], iv[1]))
        if p.tok.kind == "name" and p.tok.text == "x":
            p.advance()
            continue
        break
    if p.tok.kind != "end":
        raise p.error(f"unexpected {p.tok.text!r} in box")
    return tuple(box)


def load_problem(path, params: dict[str, float] | None = None) -> ProblemDef:
    from pathlib import Path

    path = Path(path)
    return parse_problem(path.read_text(encoding="utf-8"), params=params, name=path.stem)


def print_problem(p: ProblemDef) -> str:
    """Canonical problem-file text for ``p``."""
    lines = [f"name = {p.name}", f"n = {p.n}", f"m = {p.m}"]
    if p.A is not None:
        rows = ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]" for row in p.A)
        lines.append(f"A = [{rows}]")
    if p.xi is not None:
        lines.append("xi = [" + ", ".join(repr(float(v)) for v in p.xi) + "]")
    if p.box is not None:
        lines.append("box = " + " x ".join(f"[{lo!r}, {hi!r}]" for lo, hi in p.box))
    for k, c in enumerate(p.components, start=1):
        lines.append(f"F{k} = {format_expr(c)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# numeric evaluation


def _run(prog: _Program, X: np.ndarray, Y: np.ndarray, *, jac: bool, signs=None):
    """Vectorized forward pass over k points.

    Returns values (k, n_out), Jacobian w.r.t. x (k, n_out, n) or None, and
    abs-argument values (k, n_abs). ``signs`` (length n_abs) replaces each
    |u| by s*u; by default s = sign(u) with sign(0) = +1.
    """
    k = X.shape[0]
    n = prog.n
    vals: list = [None] * len(prog.code)
    ders: list = [None] * len(prog.code)  # None means identically zero
    absvals = np.empty((k, len(prog.abs_ids)))
    abs_pos = {idx: j for j, idx in enumerate(prog.abs_ids)}
    for i, (kind, args, value, index, block) in enumerate(prog.code):
        if kind == "const":
            vals[i] = value
        elif kind == "var":
            if block == "x":
                vals[i] = X[:, index]
                if jac:
                    d = np.zeros((k, n))
                    d[:, index] = 1.0
                    ders[i] = d
            else:
                vals[i] = Y[:, index]
        elif kind == "add" or kind == "sub":
            a, b = args
            vals[i] = vals[a] + vals[b] if kind == "add" else vals[a] - vals[b]
            if jac:
                da, db = ders[a], ders[b]
                if db is None:
                    ders[i] = da
                elif da is None:
                    ders[i] = db if kind == "add" else -db
                else:
                    ders[i] = da + db if kind == "add" else da - db
        elif kind == "mul":
            a, b = args
            va, vb = vals[a], vals[b]
            vals[i] = va * vb
            if jac:
                da, db = ders[a], ders[b]
                d = None
                if da is not None:
                    d = da * np.reshape(vb, (-1, 1)) if np.ndim(vb) else da * vb
                if db is not None:
                    t = db * np.reshape(va, (-1, 1)) if np.ndim(va) else db * va
                    d = t if d is None else d + t
                ders[i] = d
        elif kind == "div":
            a, b = args
            va, vb = vals[a], vals[b]
            if np.any(np.asarray(vb) == 0.0):
                raise EvaluationError(f"division by zero at node {i} ({format_expr(prog.nodes[i])})", i)
            q = va / vb
            vals[i] = q
            if jac:
                da, db = ders[a], ders[b]
                vbc = np.reshape(vb, (-1, 1)) if np.ndim(vb) else vb
                qc = np.reshape(q, (-1, 1)) if np.ndim(q) else q
                d = None
                if da is not None:
                    d = da / vbc
                if db is not None:
                    t = -db * (qc / vbc)
                    d = t if d is None else d + t
                ders[i] = d
        elif kind == "pow":
            (a,) = args
            e = int(value)
            va = vals[a]
            vals[i] = va**e if e else np.ones_like(va) if np.ndim(va) else 1.0
            if jac:
                da = ders[a]
                if da is None or e == 0:
                    ders[i] = None
                else:
                    f = e * va ** (e - 1)
                    ders[i] = da * (np.reshape(f, (-1, 1)) if np.ndim(f) else f)
        elif kind == "neg":
            (a,) = args
            vals[i] = -vals[a]
            if jac and ders[a] is not None:
                ders[i] = -ders[a]
        elif kind == "abs":
            (a,) = args
            va = vals[a]
            j = abs_pos[i]
            absvals[:, j] = va
            if signs is None:
                s = np.where(np.asarray(va) >= 0.0, 1.0, -1.0)
            else:
                s = float(signs[j])
            vals[i] = s * va
            if jac and ders[a] is not None:
                ders[i] = ders[a] * (np.reshape(s, (-1, 1)) if np.ndim(s) else s)
    out = np.empty((k, len(prog.outputs)))
    J = np.zeros((k, len(prog.outputs), n)) if jac else None
    for c, idx in enumerate(prog.outputs):
        out[:, c] = vals[idx]
        if jac and ders[idx] is not None:
            J[:, c, :] = ders[idx]
    return out, J, absvals


def _as_points(p: ProblemDef, x, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[1] != p.n:
        raise DimensionError(f"x has dimension {X.shape[1]}, expected {p.n}")
    if y is None:
        y = np.zeros(p.m)
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if p.m == 0:
        Y = np.zeros((X.shape[0], 0))
    if Y.shape[1] != p.m:
        raise DimensionError(f"y has dimension {Y.shape[1]}, expected {p.m}")
    if Y.shape[0] == 1 and X.shape[0] > 1:
        Y = np.broadcast_to(Y, (X.shape[0], p.m))
    return X, Y


def evaluate(p: ProblemDef, x, y=None) -> np.ndarray:
    """F(x, y) at a single point."""
    X, Y = _as_points(p, x, y)
    return _run(p._program, X, Y, jac=False)[0][0]


def evaluate_many(p: ProblemDef, X, Y=None) -> np.ndarray:
    """F at k points: X is (k, n), Y is (k, m) or a single y broadcast over rows."""
    X, Y = _as_points(p, X, Y)
    return _run(p._program, X, Y, jac=False)[0]


def eval_selection_jacobian(p: ProblemDef, x, y=None, signs=None) -> np.ndarray:
    """x-Jacobian of the smooth selection where each |u| is replaced by s*u.

    With ``signs=None`` the sign of each abs argument is used (sign(0)=+1),
    which gives the classical Jacobian wherever no abs argument vanishes.
    """
    X, Y = _as_points(p, x, y)
    if signs is not None and len(signs) != p.abs_count:
        raise ValueError(f"expected {p.abs_count} signs, got {len(signs)}")
    return _run(p._program, X, Y, jac=True, signs=signs)[1][0]


def selection_jacobians(p: ProblemDef, X, Y=None):
    """Values, natural-sign selection Jacobians and abs arguments at k points."""
    X, Y = _as_points(p, X, Y)
    return _run(p._program, X, Y, jac=True)


def default_eta(x, y=None) -> float:
    parts = [np.ravel(np.asarray(x, dtype=float))]
    if y is not None:
        parts.append(np.ravel(np.asarray(y, dtype=float)))
    v = np.concatenate(parts)
    return 1e-10 * (1.0 + (float(np.max(np.abs(v))) if v.size else 0.0))


def activity(p: ProblemDef, x, y=None, eta: float | None = None) -> list[ActivityRecord]:
    """One record per abs node: its argument at (x, y) and whether |arg| <= eta."""
    if eta is None:
        eta = default_eta(x, y)
    if eta < 0:
        raise ValueError("eta must be non-negative")
    X, Y = _as_points(p, x, y)
    _, _, absvals = _run(p._program, X, Y, jac=False)
    prog = p._program
    return [
        ActivityRecord(j, float(absvals[0, j]), bool(abs(absvals[0, j]) <= eta), format_expr(prog.nodes[idx]))
        for j, idx in enumerate(prog.abs_ids)
    ]


# ---------------------------------------------------------------------------
# interval extension


def _as_boxes(p: ProblemDef, xbox, ybox):
    xb = [Interval.coerce(v) if isinstance(v, Interval) else Interval(*map(float, v)) for v in xbox]
    yb = [Interval.coerce(v) if isinstance(v, Interval) else Interval(*map(float, v)) for v in (ybox or [])]
    if len(xb) != p.n or len(yb) != p.m:
        raise DimensionError("box dimensions do not match the problem")
    return xb, yb


def interval_jacobian(p: ProblemDef, xbox, ybox=None, *, mode: str = "pointwise", jac: bool = True):
    """Interval values of F and an interval enclosure of its x-Jacobian family.

    Every abs node whose argument range touches 0 (or every abs node when
    ``mode == "outer-global"``) contributes the factor [-1, 1], so the result
    encloses the Clarke generalized Jacobian at every point of the box.
    """
    if mode not in ("pointwise", "outer-global"):
        raise ValueError(f"unknown mode {mode!r}")
    xb, yb = _as_boxes(p, xbox, ybox)
    prog = p._program
    n = p.n
    zero = Interval(0.0, 0.0)
    vals: list = [None] * len(prog.code)
    ders: list = [None] * len(prog.code)
    for i, (kind, args, value, index, block) in enumerate(prog.code):
        if kind == "const":
            vals[i] = Interval.point(value)
        elif kind == "var":
            if block == "x":
                vals[i] = xb[index]
                if jac:
                    d = [zero] * n
                    d[index] = Interval(1.0, 1.0)
                    ders[i] = d
            else:
                vals[i] = yb[index]
        elif kind in ("add", "sub"):
            a, b = args
            vals[i] = vals[a] + vals[b] if kind == "add" else vals[a] - vals[b]
            if jac:
                da, db = ders[a], ders[b]
                if db is None:
                    ders[i] = da
                elif da is None:
                    ders[i] = db if kind == "add" else [-v for v in db]
                elif kind == "add":
                    ders[i] = [u + v for u, v in zip(da, db)]
                else:
                    ders[i] = [u - v for u, v in zip(da, db)]
        elif kind == "mul":
            a, b = args
            va, vb = vals[a], vals[b]
            vals[i] = va * vb
            if jac:
                da, db = ders[a], ders[b]
                d = None
                if da is not None:
                    d = [u * vb for u in da]
                if db is not None:
                    t = [va * v for v in db]
                    d = t if d is None else [u + v for u, v in zip(d, t)]
                ders[i] = d
        elif kind == "div":
            a, b = args
            va, vb = vals[a], vals[b]
            if vb.is_zero():
                raise EvaluationError(f"division by zero at node {i}", i)
            q = va / vb
            vals[i] = q
            if jac:
                da, db = ders[a], ders[b]
                d = None
                if da is not None:
                    d = [u / vb for u in da]
                if db is not None:
                    t = [-(v * q) / vb for v in db]
                    d = t if d is None else [u + v for u, v in zip(d, t)]
                ders[i] = d
        elif kind == "pow":
            (a,) = args
            e = int(value)
            va = vals[a]
            vals[i] = va**e
            if jac:
                da = ders[a]
                if da is None or e == 0:
                    ders[i] = None
                else:
                    f = Interval.point(float(e)) * va ** (e - 1)
                    ders[i] = [u * f for u in da]
        elif kind == "neg":
            (a,) = args
            vals[i] = -vals[a]
            if jac and ders[a] is not None:
                ders[i] = [-u for u in ders[a]]
        elif kind == "abs":
            (a,) = args
            va = vals[a]
            vals[i] = abs(va)
            if jac and ders[a] is not None:
                if mode == "outer-global" or va.contains_zero():
                    ders[i] = [UNIT * u for u in ders[a]]
                elif va.lo > 0:
                    ders[i] = ders[a]
                else:
                    ders[i] = [-u for u in ders[a]]
    values = [vals[idx] for idx in prog.outputs]
    if not jac:
        return values, None
    J = [[zero] * n if ders[idx] is None else list(ders[idx]) for idx in prog.outputs]
    return values, J


def interval_eval(p: ProblemDef, xbox, ybox=None) -> list[Interval]:
    """Interval extension of F over a box (natural extension)."""
    return interval_jacobian(p, xbox, ybox, jac=False)[0]


# ---------------------------------------------------------------------------
# derived problems


def _linear_term(A: np.ndarray, row: int) -> Node | None:
    node = None
    for j, a in enumerate(A[row]):
        if a == 0.0:
            continue
        term = mul(const(a), xvar(j))
        node = term if node is None else add(node, term)
    return node


def algebraic_map(p: ProblemDef, route: str = "ax-minus-f") -> ProblemDef:
    """The map x -> Ax - F(x) (or F(x) - Ax) of an algebraic problem, with m = 0."""
    if p.A is None:
        raise ValueError("problem has no matrix A")
    if p.m != 0:
        raise DimensionError("algebraic problems must have m = 0")
    comps = []
    for k, f in enumerate(p.components):
        ax = _linear_term(p.A, k) or const(0.0)
        comps.append(sub(ax, f) if route == "ax-minus-f" else sub(f, ax))
    return ProblemDef(p.n, 0, tuple(comps), name=f"{p.name}:{route}", box=p.x_box(), params=p.params)


def algebraic_system(p: ProblemDef, route: str = "ax-minus-f") -> ProblemDef:
    """G(x, xi) = Ax - F(x) - xi (or F(x) - Ax + xi); xi is the y-block."""
    g = algebraic_map(p, route)
    comps = []
    for k, c in enumerate(g.components):
        comps.append(sub(c, yvar(k)) if route == "ax-minus-f" else add(c, yvar(k)))
    return ProblemDef(p.n, p.n, tuple(comps), name=g.name, box=p.x_box(), params=p.params)


def inverse_problem(p: ProblemDef) -> ProblemDef:
    """F(x, y) = f(x) - y for a pure map f (m = 0); y becomes the target."""
    if p.m != 0:
        raise DimensionError("inversion needs a pure map (m = 0)")
    if p.A is not None:
        p = algebraic_map(p)
    comps = tuple(sub(c, yvar(k)) for k, c in enumerate(p.components))
    return ProblemDef(p.n, p.n, comps, name=f"{p.name}:inverse", box=p.x_box(), params=p.params)


def as_system(p: ProblemDef) -> tuple[ProblemDef, np.ndarray | None]:
    """The map whose zeros are solved for, with its default y.

    Algebraic problems become G(x, xi) = Ax - F(x) - xi with xi as y (default
    the file's xi); other problems are returned unchanged.
    """
    if p.A is not None:
        return algebraic_system(p), np.array(p.xi if p.xi is not None else np.zeros(p.n))
    return p, None
