"""Small arithmetic expression language for coefficients and source terms.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary ('^' power)?            # right-associative
    unary   := '-' unary | '+' unary | primary
    primary := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

Unary minus binds tighter than ``^``, so ``-2^2`` is ``(-2)^2 = 4``.
``pi`` and ``e`` are builtin constants.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Node",
    "ExprError",
    "ExprSyntaxError",
    "ExprNameError",
    "ExprArityError",
    "ExprDomainError",
    "ExprNonFiniteError",
    "Program",
    "parse",
    "evaluate",
    "evaluate_array",
    "pretty",
    "compile_program",
    "free_variables",
    "FUNCTIONS",
    "CONSTANTS",
]

FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "abs": 1,
    "atan": 1,
    "pow": 2,
    "min": 2,
    "max": 2,
}
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Base class of expression errors; carries an optional source span."""

    def __init__(self, message, span=None, source=None):
        self.span = span
        self.source = source
        self.line, self.column = _line_col(source, span[0]) if span and source else (None, None)
        if self.line is not None:
            message = f"{message} (line {self.line}, column {self.column})"
        super().__init__(message)


class ExprSyntaxError(ExprError):
    pass


class ExprNameError(ExprError):
    pass


class ExprArityError(ExprError):
    pass


class ExprDomainError(ExprError, ArithmeticError):
    pass


class ExprNonFiniteError(ExprError, ArithmeticError):
    pass


def _line_col(source, offset):
    line = source.count("\n", 0, offset) + 1
    column = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, column


@dataclass(frozen=True)
class Node:
    """Immutable AST node.

    ``kind`` is one of ``const``, ``var``, ``neg``, ``add``, ``sub``, ``mul``,
    ``div``, ``pow`` or ``call``.  ``value`` holds the float of a constant,
    the name of a variable or builtin constant, or the function name of a call.
    Spans are excluded from equality so structurally identical trees compare
    equal regardless of where they came from.
    """

    kind: str
    value: object = None
    children: tuple = ()
    span: tuple = field(default=(0, 0), compare=False)
    source: str = field(default="", compare=False, repr=False)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source):
    pos = 0
    toks = []
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", (pos, pos + 1), source)
        kind = m.lastgroup
        if kind != "ws":
            toks.append((kind, m.group(), m.start(), m.end()))
        pos = m.end()
    toks.append(("eof", "", len(source), len(source)))
    return toks


class _Parser:
    def __init__(self, source, allowed):
        self.source = source
        self.allowed = allowed
        self.toks = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def advance(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text:
            shown = tok[1] or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {shown!r}", (tok[2], tok[3]), self.source)
        return self.advance()

    def node(self, kind, value, children, start, end):
        return Node(kind, value, tuple(children), (start, end), self.source)

    def parse(self):
        tree = self.expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", (tok[2], tok[3]), self.source)
        return tree

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            right = self.term()
            left = self.node("add" if op == "+" else "sub", None, (left, right), left.span[0], right.span[1])
        return left

    def term(self):
        left = self.power()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            right = self.power()
            left = self.node("mul" if op == "*" else "div", None, (left, right), left.span[0], right.span[1])
        return left

    def power(self):
        base = self.unary()
        if self.peek()[1] == "^":
            self.advance()
            exponent = self.power()
            return self.node("pow", None, (base, exponent), base.span[0], exponent.span[1])
        return base

    def unary(self):
        tok = self.peek()
        if tok[1] == "-":
            self.advance()
            operand = self.unary()
            return self.node("neg", None, (operand,), tok[2], operand.span[1])
        if tok[1] == "+":
            self.advance()
            return self.unary()
        return self.primary()

    def primary(self):
        tok = self.advance()
        kind, text, start, end = tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"numeric literal {text} overflows", (start, end), self.source)
            return self.node("const", value, (), start, end)
        if kind == "name":
            if self.peek()[1] == "(":
                return self.call(text, start)
            if text in CONSTANTS:
                return self.node("const", text, (), start, end)
            if text not in self.allowed:
                allowed = ", ".join(sorted(self.allowed)) or "none"
                raise ExprNameError(f"unknown identifier {text!r} (allowed: {allowed})", (start, end), self.source)
            return self.node("var", text, (), start, end)
        if text == "(":
            inner = self.expr()
            close = self.expect(")")
            return Node(inner.kind, inner.value, inner.children, (start, close[3]), self.source)
        shown = text or "end of input"
        raise ExprSyntaxError(f"unexpected {shown!r}", (start, end), self.source)

    def call(self, name, start):
        if name not in FUNCTIONS:
            raise ExprNameError(f"unknown function {name!r}", (start, start + len(name)), self.source)
        self.expect("(")
        args = []
        if self.peek()[1] != ")":
            args.append(self.expr())
            while self.peek()[1] == ",":
                self.advance()
                args.append(self.expr())
        close = self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ExprArityError(
                f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}", (start, close[3]), self.source
            )
        return self.node("call", name, args, start, close[3])


def parse(source: str, allowed_vars: Iterable[str] = ()) -> Node:
    """Parse ``source`` into an AST; identifiers outside ``allowed_vars`` are errors."""
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression")
    return _Parser(source, frozenset(allowed_vars)).parse()


def free_variables(node: Node) -> set:
    return {n.value for n in node.walk() if n.kind == "var"}


# --------------------------------------------------------------- evaluation


def _const_value(node):
    return CONSTANTS[node.value] if isinstance(node.value, str) else node.value


def _domain(msg, node):
    return ExprDomainError(msg, node.span, node.source or None)


def _check_pow(base, exponent, node):
    if base < 0 and exponent != math.floor(exponent):
        raise _domain(f"pow of negative base {base!r} with non-integer exponent {exponent!r}", node)
    if base == 0 and exponent < 0:
        raise _domain("pow of zero with negative exponent", node)


def _scalar(node, env):
    k = node.kind
    if k == "const":
        return _const_value(node)
    if k == "var":
        return env[node.value]
    args = [_scalar(c, env) for c in node.children]
    try:
        if k == "neg":
            out = -args[0]
        elif k == "add":
            out = args[0] + args[1]
        elif k == "sub":
            out = args[0] - args[1]
        elif k == "mul":
            out = args[0] * args[1]
        elif k == "div":
            if args[1] == 0:
                raise _domain("division by zero", node)
            out = args[0] / args[1]
        elif k == "pow":
            _check_pow(args[0], args[1], node)
            out = math.pow(args[0], args[1])
        else:
            out = _call_scalar(node, args)
    except OverflowError:
        raise ExprNonFiniteError(f"overflow in {k}", node.span, node.source or None) from None
    if not math.isfinite(out):
        raise ExprNonFiniteError(f"non-finite result in {k}", node.span, node.source or None)
    return out


def _call_scalar(node, args):
    name = node.value
    a = args[0]
    if name == "log":
        if a <= 0:
            raise _domain(f"log of non-positive value {a!r}", node)
        return math.log(a)
    if name == "sqrt":
        if a < 0:
            raise _domain(f"sqrt of negative value {a!r}", node)
        return math.sqrt(a)
    if name == "pow":
        _check_pow(args[0], args[1], node)
        return math.pow(args[0], args[1])
    if name == "min":
        return min(args[0], args[1])
    if name == "max":
        return max(args[0], args[1])
    return {"sin": math.sin, "cos": math.cos, "exp": math.exp, "abs": abs, "atan": math.atan}[name](a)


def evaluate(node: Node, bindings: Mapping[str, float]) -> float:
    """Evaluate in IEEE double precision; raises on domain errors or non-finite results."""
    missing = free_variables(node) - set(bindings)
    if missing:
        raise ExprNameError(f"unbound variable(s): {', '.join(sorted(missing))}")
    env = {k: float(v) for k, v in bindings.items()}
    return _scalar(node, env)


def _array(node, env, shape):
    k = node.kind
    if k == "const":
        return np.full(shape, _const_value(node))
    if k == "var":
        return np.broadcast_to(env[node.value], shape).astype(float)
    args = [_array(c, env, shape) for c in node.children]
    with np.errstate(all="ignore"):
        if k == "neg":
            out = -args[0]
        elif k == "add":
            out = args[0] + args[1]
        elif k == "sub":
            out = args[0] - args[1]
        elif k == "mul":
            out = args[0] * args[1]
        elif k == "div":
            bad = args[1] == 0
            if bad.any():
                raise _domain(f"division by zero at index {int(np.flatnonzero(bad)[0])}", node)
            out = args[0] / args[1]
        elif k == "pow" or (k == "call" and node.value == "pow"):
            b, x = args
            bad = ((b < 0) & (x != np.floor(x))) | ((b == 0) & (x < 0))
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise _domain(f"pow domain error: base {b.flat[i]!r}, exponent {x.flat[i]!r} at index {i}", node)
            out = np.power(b, x)
        else:
            name = node.value
            a = args[0]
            if name == "log":
                bad = a <= 0
                if bad.any():
                    i = int(np.flatnonzero(bad)[0])
                    raise _domain(f"log of non-positive value {a.flat[i]!r} at index {i}", node)
                out = np.log(a)
            elif name == "sqrt":
                bad = a < 0
                if bad.any():
                    i = int(np.flatnonzero(bad)[0])
                    raise _domain(f"sqrt of negative value {a.flat[i]!r} at index {i}", node)
                out = np.sqrt(a)
            elif name == "min":
                out = np.minimum(args[0], args[1])
            elif name == "max":
                out = np.maximum(args[0], args[1])
            else:
                out = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs, "atan": np.arctan}[name](a)
    finite = np.isfinite(out)
    if not finite.all():
        i = int(np.flatnonzero(~finite)[0])
        raise ExprNonFiniteError(f"non-finite result in {k} at index {i}", node.span, node.source or None)
    return out


def evaluate_array(node: Node, bindings: Mapping[str, object]) -> np.ndarray:
    """Vectorized evaluation over broadcast numpy arrays (same error rules as :func:`evaluate`)."""
    missing = free_variables(node) - set(bindings)
    if missing:
        raise ExprNameError(f"unbound variable(s): {', '.join(sorted(missing))}")
    env = {k: np.asarray(v, dtype=float) for k, v in bindings.items()}
    shape = np.broadcast_shapes(*(v.shape for v in env.values())) if env else ()
    return _array(node, env, shape)


# ------------------------------------------------------------ pretty-print

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3, "neg": 4}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def pretty(node: Node) -> str:
    """Render with the minimum parentheses needed to reparse to the same tree."""
    k = node.kind
    if k == "const":
        return node.value if isinstance(node.value, str) else repr(float(node.value))
    if k == "var":
        return node.value
    if k == "call":
        return f"{node.value}({', '.join(pretty(c) for c in node.children)})"
    if k == "neg":
        child = node.children[0]
        inner = pretty(child)
        if child.kind in _PREC and child.kind != "neg":
            inner = f"({inner})"
        return "-" + inner
    left, right = node.children
    p = _PREC[k]
    ls, rs = pretty(left), pretty(right)
    if k == "pow":
        # base must bind tighter than pow (unary/atoms ok); exponent may be another pow
        if left.kind in _PREC and left.kind != "neg":
            ls = f"({ls})"
        if right.kind in _PREC and _PREC[right.kind] < p:
            rs = f"({rs})"
    else:
        if left.kind in _PREC and _PREC[left.kind] < p:
            ls = f"({ls})"
        if right.kind in _PREC and _PREC[right.kind] <= p:
            rs = f"({rs})"
    return f"{ls}{_SYM[k]}{rs}"


# ------------------------------------------------------------- bytecode

# Opcodes shared with the compiled kernels; keep in sync with _kernels.pyx.
OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_SQRT, OP_ABS, OP_ATAN, OP_MIN, OP_MAX = range(8, 17)

_BINOPS = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV, "pow": OP_POW}
_CALLOPS = {
    "sin": OP_SIN,
    "cos": OP_COS,
    "exp": OP_EXP,
    "log": OP_LOG,
    "sqrt": OP_SQRT,
    "abs": OP_ABS,
    "atan": OP_ATAN,
    "pow": OP_POW,
    "min": OP_MIN,
    "max": OP_MAX,
}


class Program:
    """Postfix compilation of an AST for a fixed variable ordering.

    ``ops``/``args`` are int32 arrays and ``consts`` a float64 array, consumed
    by the stack machines in both kernel backends.  ``fn`` is an equivalent
    Python closure used by the pure-Python backend.
    """

    def __init__(self, node: Node, variables):
        self.node = node
        self.variables = tuple(variables)
        ops, args, consts = [], [], []
        self._emit(node, ops, args, consts)
        self.ops = np.asarray(ops, dtype=np.int32)
        self.args = np.asarray(args, dtype=np.int32)
        self.consts = np.asarray(consts if consts else [0.0], dtype=np.float64)
        self.stack_size = self._depth(node)
        self.fn = _closure(node, self.variables)

    def _emit(self, node, ops, args, consts):
        k = node.kind
        if k == "const":
            consts.append(_const_value(node))
            ops.append(OP_CONST)
            args.append(len(consts) - 1)
            return
        if k == "var":
            ops.append(OP_VAR)
            args.append(self.variables.index(node.value))
            return
        for c in node.children:
            self._emit(c, ops, args, consts)
        if k == "neg":
            ops.append(OP_NEG)
        elif k == "call":
            ops.append(_CALLOPS[node.value])
        else:
            ops.append(_BINOPS[k])
        args.append(0)

    @staticmethod
    def _depth(node):
        if not node.children:
            return 1
        return max(Program._depth(c) + i for i, c in enumerate(node.children))

    def __call__(self, *values):
        return self.fn(*values)


def compile_program(node: Node, variables) -> Program:
    unknown = free_variables(node) - set(variables)
    if unknown:
        raise ExprNameError(f"variable(s) not in program signature: {', '.join(sorted(unknown))}")
    return Program(node, variables)


def _closure(node, variables):
    """Build a plain-Python callable with the same IEEE semantics as the VM.

    Failures return NaN instead of raising; callers re-run :func:`evaluate`
    for a located error message.
    """
    nan = math.nan

    def build(n):
        k = n.kind
        if k == "const":
            v = _const_value(n)
            return lambda env: v
        if k == "var":
            i = variables.index(n.value)
            return lambda env: env[i]
        fs = [build(c) for c in n.children]
        if k == "neg":
            a = fs[0]
            return lambda env: -a(env)
        if k in ("add", "sub", "mul", "div"):
            a, b = fs
            if k == "add":
                return lambda env: a(env) + b(env)
            if k == "sub":
                return lambda env: a(env) - b(env)
            if k == "mul":
                return lambda env: a(env) * b(env)

            def div(env):
                d = b(env)
                return a(env) / d if d != 0 else nan

            return div
        if k == "pow" or n.value == "pow":
            a, b = fs
            return lambda env: _safe_pow(a(env), b(env))
        name = n.value
        if name in ("min", "max"):
            a, b = fs
            op = min if name == "min" else max

            def minmax(env):
                x, y = a(env), b(env)
                # NaN marks a failed operand; min/max must not swallow it
                return nan if x != x or y != y else op(x, y)

            return minmax
        a = fs[0]
        fn = {
            "sin": math.sin,
            "cos": math.cos,
            "exp": _safe_exp,
            "log": _safe_log,
            "sqrt": _safe_sqrt,
            "abs": abs,
            "atan": math.atan,
        }[name]
        return lambda env: fn(a(env))

    f = build(node)
    return lambda *env: f(env)


def _safe_pow(b, x):
    if (b < 0 and x != math.floor(x)) or (b == 0 and x < 0):
        return math.nan
    try:
        return math.pow(b, x)
    except OverflowError:
        return math.inf
    except ValueError:
        return math.nan


def _safe_exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def _safe_log(a):
    return math.log(a) if a > 0 else math.nan


def _safe_sqrt(a):
    return math.sqrt(a) if a >= 0 else math.nan
