"""Expression trees: parsing, evaluation, reverse-mode differentiation.

Explicit nonlinear constraints are backed by small expression trees so that
exact gradients are available to the refinement phase. The grammar is
deliberately small: arithmetic, powers, and the unary functions exp, ln,
sqrt, sin, cos, abs. Problems are loaded from a JSON document (schema below).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    ExprSyntaxError,
    SchemaError,
    UnknownIdentifier,
)

UNARY_OPS = ("neg", "exp", "ln", "sqrt", "sin", "cos", "abs")
BINARY_OPS = ("+", "-", "*", "/", "^")

_FUNCTIONS = {"exp", "ln", "sqrt", "sin", "cos", "abs"}


class Expr:
    """Base node. Immutable once built; safe to share between threads."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_expr(e: Expr, x) -> float:
    """Evaluate ``e`` at point ``x`` in IEEE doubles.

    Raises DomainError instead of returning NaN/inf on domain violations.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index])
    if isinstance(e, Unary):
        v = eval_expr(e.arg, x)
        return _apply_unary(e.op, v)
    if isinstance(e, Binary):
        a = eval_expr(e.left, x)
        b = eval_expr(e.right, x)
        return _apply_binary(e.op, a, b)
    raise TypeError(f"not an expression node: {e!r}")


def _apply_unary(op: str, v: float) -> float:
    if op == "neg":
        return -v
    if op == "exp":
        out = math.exp(min(v, 700.0))
        return out
    if op == "ln":
        if v <= 0.0:
            raise DomainError(f"ln of nonpositive value {v}")
        return math.log(v)
    if op == "sqrt":
        if v < 0.0:
            raise DomainError(f"sqrt of negative value {v}")
        return math.sqrt(v)
    if op == "sin":
        return math.sin(v)
    if op == "cos":
        return math.cos(v)
    if op == "abs":
        return abs(v)
    raise ValueError(f"unknown unary op {op!r}")


def _apply_binary(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if op == "^":
        if a == 0.0 and b < 0.0:
            raise DomainError("zero raised to a negative power")
        if a < 0.0:
            if b != round(b):
                raise DomainError(f"negative base {a} with non-integer exponent {b}")
            return a ** int(round(b))
        try:
            return a ** b
        except OverflowError as exc:
            raise DomainError(str(exc)) from exc
    raise ValueError(f"unknown binary op {op!r}")


# ---------------------------------------------------------------------------
# Reverse-mode gradient
# ---------------------------------------------------------------------------

def grad_expr(e: Expr, x) -> np.ndarray:
    """Exact gradient of ``e`` at ``x`` via one forward and one backward pass."""
    x = np.asarray(x, dtype=float)
    values: dict[int, float] = {}

    def forward(node: Expr) -> float:
        if isinstance(node, Const):
            v = node.value
        elif isinstance(node, Var):
            v = float(x[node.index])
        elif isinstance(node, Unary):
            v = _apply_unary(node.op, forward(node.arg))
        else:
            v = _apply_binary(node.op, forward(node.left), forward(node.right))
        values[id(node)] = v
        return v

    forward(e)
    out = np.zeros(x.shape[0])

    def backward(node: Expr, adj: float) -> None:
        if adj == 0.0 or isinstance(node, Const):
            return
        if isinstance(node, Var):
            out[node.index] += adj
            return
        if isinstance(node, Unary):
            v = values[id(node.arg)]
            op = node.op
            if op == "neg":
                backward(node.arg, -adj)
            elif op == "exp":
                backward(node.arg, adj * values[id(node)])
            elif op == "ln":
                backward(node.arg, adj / v)
            elif op == "sqrt":
                if v == 0.0:
                    raise DomainError("sqrt not differentiable at 0")
                backward(node.arg, adj / (2.0 * math.sqrt(v)))
            elif op == "sin":
                backward(node.arg, adj * math.cos(v))
            elif op == "cos":
                backward(node.arg, -adj * math.sin(v))
            elif op == "abs":
                if v == 0.0:
                    raise DomainError("abs not differentiable at 0")
                backward(node.arg, adj if v > 0 else -adj)
            return
        a = values[id(node.left)]
        b = values[id(node.right)]
        op = node.op
        if op == "+":
            backward(node.left, adj)
            backward(node.right, adj)
        elif op == "-":
            backward(node.left, adj)
            backward(node.right, -adj)
        elif op == "*":
            backward(node.left, adj * b)
            backward(node.right, adj * a)
        elif op == "/":
            backward(node.left, adj / b)
            backward(node.right, -adj * a / (b * b))
        elif op == "^":
            v = values[id(node)]
            if isinstance(node.right, Const):
                p = node.right.value
                if a == 0.0:
                    backward(node.left, 0.0 if p > 1 else adj * p)
                else:
                    backward(node.left, adj * p * v / a)
            else:
                if a <= 0.0:
                    raise DomainError("power with variable exponent needs positive base")
                backward(node.left, adj * b * v / a)
                backward(node.right, adj * v * math.log(a))

    backward(e, 1.0)
    return out


def expr_support(e: Expr) -> frozenset[int]:
    """Indices of all variables appearing in the tree."""
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.index,))
    if isinstance(e, Unary):
        return expr_support(e.arg)
    return expr_support(e.left) | expr_support(e.right)


def affine_parts(e: Expr, n: int):
    """Return (coeffs, constant) when ``e`` is affine in x, else None."""
    if isinstance(e, Const):
        return np.zeros(n), e.value
    if isinstance(e, Var):
        c = np.zeros(n)
        c[e.index] = 1.0
        return c, 0.0
    if isinstance(e, Unary):
        if e.op != "neg":
            inner = affine_parts(e.arg, n)
            if inner is not None and not inner[0].any():
                try:
                    return np.zeros(n), _apply_unary(e.op, inner[1])
                except DomainError:
                    return None
            return None
        inner = affine_parts(e.arg, n)
        if inner is None:
            return None
        return -inner[0], -inner[1]
    left = affine_parts(e.left, n)
    right = affine_parts(e.right, n)
    if left is None or right is None:
        return None
    cl, kl = left
    cr, kr = right
    if e.op == "+":
        return cl + cr, kl + kr
    if e.op == "-":
        return cl - cr, kl - kr
    if e.op == "*":
        if not cl.any():
            return kl * cr, kl * kr
        if not cr.any():
            return kr * cl, kr * kl
        return None
    if e.op == "/":
        if not cr.any() and kr != 0.0:
            return cl / kr, kl / kr
        return None
    if e.op == "^":
        if not cl.any() and not cr.any():
            try:
                return np.zeros(n), _apply_binary("^", kl, kr)
            except DomainError:
                return None
        return None
    return None


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            off = len(text) - len(stripped)
            raise ExprSyntaxError(f"unexpected character {stripped[0]!r}", off)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, var_indices: dict[str, int]):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.vars = var_indices

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of expression", len(self.text))
        self.pos += 1
        return tok

    def expect_op(self, symbol):
        tok = self.next()
        if tok[0] != "op" or tok[1] != symbol:
            raise ExprSyntaxError(f"expected {symbol!r}", tok[2])

    def parse(self) -> Expr:
        e = self.parse_sum()
        tok = self.peek()
        if tok is not None:
            raise ExprSyntaxError(f"trailing input {tok[1]!r}", tok[2])
        return e

    def parse_sum(self) -> Expr:
        node = self.parse_term()
        while True:
            tok = self.peek()
            if tok is not None and tok[0] == "op" and tok[1] in "+-":
                self.pos += 1
                rhs = self.parse_term()
                node = _fold(Binary(tok[1], node, rhs))
            else:
                return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while True:
            tok = self.peek()
            if tok is not None and tok[0] == "op" and tok[1] in "*/":
                self.pos += 1
                rhs = self.parse_factor()
                node = _fold(Binary(tok[1], node, rhs))
            else:
                return node

    def parse_factor(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "-":
            self.pos += 1
            return _fold(Unary("neg", self.parse_factor()))
        if tok is not None and tok[0] == "op" and tok[1] == "+":
            self.pos += 1
            return self.parse_factor()
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.pos += 1
            exponent = self.parse_factor()  # right associative, allows 2^-3
            return _fold(Binary("^", base, exponent))
        return base

    def parse_atom(self) -> Expr:
        tok = self.next()
        kind, value, offset = tok
        if kind == "num":
            return Const(value)
        if kind == "ident":
            nxt = self.peek()
            if nxt is not None and nxt[0] == "op" and nxt[1] == "(":
                if value not in _FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {value!r}", offset)
                self.pos += 1
                arg = self.parse_sum()
                self.expect_op(")")
                return _fold(Unary(value, arg))
            if value not in self.vars:
                raise UnknownIdentifier(f"unknown variable {value!r}", offset)
            return Var(self.vars[value])
        if kind == "op" and value == "(":
            inner = self.parse_sum()
            self.expect_op(")")
            return inner
        raise ExprSyntaxError(f"unexpected token {value!r}", offset)


def _fold(e: Expr) -> Expr:
    """Collapse constant subtrees eagerly; keep nodes whose folding would raise."""
    if isinstance(e, Unary) and isinstance(e.arg, Const):
        try:
            return Const(_apply_unary(e.op, e.arg.value))
        except DomainError:
            return e
    if isinstance(e, Binary) and isinstance(e.left, Const) and isinstance(e.right, Const):
        try:
            return Const(_apply_binary(e.op, e.left.value, e.right.value))
        except DomainError:
            return e
    return e


def parse_expr(text: str, variables) -> Expr:
    """Parse ``text`` into an expression tree.

    ``variables`` is either a name->index mapping or an ordered sequence of
    names. Precedence: ^ over unary minus over * and / over + and -.
    """
    if not isinstance(variables, dict):
        variables = {name: i for i, name in enumerate(variables)}
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def print_expr(e: Expr, names=None) -> str:
    """Render a tree back to parseable text. Round-trips structurally."""

    def name(i: int) -> str:
        return names[i] if names is not None else f"x{i}"

    def render(node: Expr, parent_prec: int, right_side: bool) -> str:
        if isinstance(node, Const):
            v = node.value
            if v < 0:
                s = repr(v)
                return f"({s})" if parent_prec > 1 else s
            return repr(v)
        if isinstance(node, Var):
            return name(node.index)
        if isinstance(node, Unary):
            if node.op == "neg":
                inner = render(node.arg, _PREC["neg"], False)
                s = f"-{inner}"
                return f"({s})" if parent_prec > _PREC["neg"] or (parent_prec == _PREC["neg"] and right_side) else s
            return f"{node.op}({render(node.arg, 0, False)})"
        prec = _PREC[node.op]
        left = render(node.left, prec, False)
        # left-associative ops need parens around a right child of equal precedence
        right = render(node.right, prec + (0 if node.op == "^" else 1), True)
        s = f"{left}{node.op}{right}"
        if parent_prec > prec or (parent_prec == prec and right_side):
            return f"({s})"
        return s

    return render(e, 0, False)


# ---------------------------------------------------------------------------
# Problem documents
# ---------------------------------------------------------------------------

PROBLEM_SCHEMA_VERSION = 1


def load_problem(document, blackbox_registry=None):
    """Build a Problem from a JSON document, path, or already-parsed dict.

    Document layout (schema version 1)::

        {
          "schema": 1,
          "name": "...",                      # optional
          "variables": [
            {"name": "x1", "lower": 0.5, "upper": 1.5, "integral": false},
            ...
          ],
          "objective": {"expression": "..."}  # or {"linear": [...], "constant": 0.0}
          "constraints": [
            {"expression": "...", "sense": "<=0" | ">=0" | "=0", "name": "..."},
            ...
          ],
          "blackbox": [                        # optional, resolved via registry
            {"name": "...", "sense": "<=0", "support": ["x1", "x2"]}
          ],
          "known_optimum": -1.0                # optional metadata
        }

    Expressions with affine trees become linear rows; everything else becomes
    a nonlinear constraint with an exact-gradient evaluator.
    """
    from .model import (
        LinearConstraint,
        LinearObjective,
        NonlinearConstraint,
        NonlinearObjective,
        Problem,
        VarSpec,
    )

    if isinstance(document, (str, bytes)):
        with open(document, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    if not isinstance(document, dict):
        raise SchemaError("problem document must be a JSON object")
    if document.get("schema") != PROBLEM_SCHEMA_VERSION:
        raise SchemaError(
            f"missing or unsupported schema version {document.get('schema')!r}"
        )
    raw_vars = document.get("variables")
    if not raw_vars or not isinstance(raw_vars, list):
        raise SchemaError("document needs a nonempty 'variables' list")

    specs = []
    names = {}
    for i, rv in enumerate(raw_vars):
        if "name" not in rv:
            raise SchemaError(f"variable {i} has no name")
        nm = rv["name"]
        if nm in names:
            raise SchemaError(f"duplicate variable name {nm!r}")
        names[nm] = i
        lower = rv.get("lower")
        upper = rv.get("upper")
        specs.append(
            VarSpec(
                name=nm,
                index=i,
                lower=-math.inf if lower is None else float(lower),
                upper=math.inf if upper is None else float(upper),
                integral=bool(rv.get("integral", False)),
            )
        )
    n = len(specs)

    def constraint_from_expression(text, sense, label):
        tree = parse_expr(text, names)
        if sense not in ("<=0", ">=0", "=0"):
            raise SchemaError(f"constraint {label}: bad sense {sense!r}")
        if sense == ">=0":
            tree = _fold(Unary("neg", tree))
            sense = "<=0"
        parts = affine_parts(tree, n)
        if parts is not None:
            coeffs, const = parts
            row_sense = "=" if sense == "=0" else "<="
            return LinearConstraint(coeffs=coeffs, sense=row_sense, rhs=-const, name=label)
        return NonlinearConstraint(
            evaluator=lambda x, _t=tree: eval_expr(_t, x),
            sense="=0" if sense == "=0" else "<=0",
            support=expr_support(tree),
            expr=tree,
            name=label,
        )

    linear = []
    nonlinear = []
    for i, rc in enumerate(document.get("constraints", [])):
        if "expression" not in rc:
            raise SchemaError(f"constraint {i} has no expression")
        label = rc.get("name", f"c{i}")
        built = constraint_from_expression(rc["expression"], rc.get("sense", "<=0"), label)
        if isinstance(built, LinearConstraint):
            linear.append(built)
        else:
            nonlinear.append(built)

    for i, rb in enumerate(document.get("blackbox", [])):
        nm = rb.get("name")
        if blackbox_registry is None or nm not in blackbox_registry:
            raise SchemaError(f"black-box constraint {nm!r} has no registered evaluator")
        support_names = rb.get("support")
        if not support_names:
            raise SchemaError(f"black-box constraint {nm!r} needs a support list")
        for sn in support_names:
            if sn not in names:
                raise UnknownIdentifier(f"unknown variable {sn!r}")
        sense = rb.get("sense", "<=0")
        if sense == ">=0":
            fn = blackbox_registry[nm]
            evaluator = lambda x, _f=fn: -_f(x)
            sense = "<=0"
        else:
            evaluator = blackbox_registry[nm]
        nonlinear.append(
            NonlinearConstraint(
                evaluator=evaluator,
                sense="=0" if sense == "=0" else "<=0",
                support=frozenset(names[sn] for sn in support_names),
                name=nm,
            )
        )

    raw_obj = document.get("objective")
    if raw_obj is None:
        objective = LinearObjective(coeffs=np.zeros(n), constant=0.0)
    elif "linear" in raw_obj:
        coeffs = np.asarray(raw_obj["linear"], dtype=float)
        if coeffs.shape != (n,):
            raise SchemaError("linear objective length must match variable count")
        objective = LinearObjective(coeffs=coeffs, constant=float(raw_obj.get("constant", 0.0)))
    elif "expression" in raw_obj:
        tree = parse_expr(raw_obj["expression"], names)
        parts = affine_parts(tree, n)
        if parts is not None:
            objective = LinearObjective(coeffs=parts[0], constant=parts[1])
        else:
            objective = NonlinearObjective(
                evaluator=lambda x, _t=tree: eval_expr(_t, x),
                support=expr_support(tree),
                expr=tree,
            )
    else:
        raise SchemaError("objective must carry 'expression' or 'linear'")

    return Problem(
        vars=tuple(specs),
        objective=objective,
        linear=tuple(linear),
        nonlinear=tuple(nonlinear),
        name=document.get("name", ""),
        known_optimum=document.get("known_optimum"),
    )
