"""Expression language for vector fields and coordinate maps.

Infix grammar with precedence ``^`` > unary ``-`` > ``* /`` > ``+ -``,
right-associative ``^``, parentheses, and call syntax for the unary
functions ``sqrt sin cos exp log abs sign``. Identifiers are
``[A-Za-z_][A-Za-z0-9_]*``; literals are decimal with optional exponent.

Expressions are immutable trees. Evaluation either returns a finite float
or raises :class:`DomainError`; it never leaks NaN/inf. Differentiation is
exact and symbolic, with literal-constant folding so derivatives carry no
``0*x`` / ``x+0`` residue.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

import numpy as np

__all__ = [
    "Expression", "Const", "Name", "Unary", "Binary",
    "ExpressionError", "ExpressionSyntaxError", "UnknownIdentifierError",
    "DomainError", "FUNCTIONS",
    "parse_expression", "evaluate", "differentiate", "free_variables",
    "to_source", "compile_scalar", "compile_array",
    "SystemDefinition",
]

#: unary functions usable with call syntax; their names are reserved.
FUNCTIONS = ("sqrt", "sin", "cos", "exp", "log", "abs", "sign")


class ExpressionError(ValueError):
    """Base class for expression-language errors."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}' (offset {offset})")
        self.name = name
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation left the expression's real domain (sqrt of a negative,
    log of a non-positive, division by zero, overflow)."""


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a FUNCTIONS member
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


Expression = Const | Name | Unary | Binary

_ZERO = Const(0.0)
_ONE = Const(1.0)


# ---------------------------------------------------------------------------
# Scalar kernels. The tree-walking evaluator and the compiled fast path call
# the same kernels so both produce bit-identical results.

def _k_div(a: float, b: float) -> float:
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _k_sqrt(x: float) -> float:
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def _k_log(x: float) -> float:
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


def _k_sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def _k_ipow(base: float, n: int) -> float:
    # integer-literal exponents work for any base, including negatives;
    # small powers multiply out so compiled inline forms match bit for bit
    if n == 2:
        return base * base
    if n == 3:
        return base * base * base
    try:
        return base ** n
    except ZeroDivisionError:
        raise DomainError(f"zero raised to negative power {n}") from None


def _k_gpow(base: float, y: float) -> float:
    # general power via exp(y*log(base)); domain restricted to base > 0
    if base <= 0.0:
        raise DomainError(f"non-integer power of non-positive base {base!r}")
    return math.exp(y * math.log(base))


_SCALAR_FUNCS: dict[str, Callable[[float], float]] = {
    "sqrt": _k_sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": _k_log,
    "abs": abs,
    "sign": _k_sign,
}


def _is_integer_literal(e: Expression) -> bool:
    return isinstance(e, Const) and float(e.value).is_integer() and abs(e.value) < 2 ** 31


# ---------------------------------------------------------------------------
# Smart constructors: fold literal subtrees, prune arithmetic identities.

def _const(v: float) -> Const:
    return Const(float(v))


def e_neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return _const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def e_add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Binary("+", a, b)


def e_sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return e_neg(b)
    return Binary("-", a, b)


def e_mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0.0:
            return _ZERO
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return _ZERO
        if b.value == 1.0:
            return a
    return Binary("*", a, b)


def e_div(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const) and b.value != 0.0:
        if isinstance(a, Const):
            return _const(a.value / b.value)
        if b.value == 1.0:
            return a
    return Binary("/", a, b)


def e_pow(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const):
        if b.value == 1.0:
            return a
        if b.value == 0.0:
            return _ONE
        if isinstance(a, Const):
            try:
                if _is_integer_literal(b):
                    return _const(_k_ipow(a.value, int(b.value)))
                return _const(_k_gpow(a.value, b.value))
            except DomainError:
                pass
    return Binary("^", a, b)


def e_func(op: str, a: Expression) -> Expression:
    if isinstance(a, Const):
        try:
            return _const(_SCALAR_FUNCS[op](a.value))
        except (DomainError, OverflowError, ValueError):
            pass
    return Unary(op, a)


_BINARY_BUILDERS = {"+": e_add, "-": e_sub, "*": e_mul, "/": e_div, "^": e_pow}


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(source: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            yield m.lastgroup, m.group(), pos
        pos = m.end()
    yield "eof", "", len(source)


class _Parser:
    def __init__(self, source: str, allowed_names: frozenset[str]):
        self.tokens = list(_tokenize(source))
        self.allowed = allowed_names
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol: str) -> None:
        kind, text, offset = self.take()
        if kind != "op" or text != symbol:
            raise ExpressionSyntaxError(f"expected '{symbol}', got {text or 'end of input'!r}", offset)

    def parse(self) -> Expression:
        e = self.additive()
        kind, text, offset = self.peek()
        if kind != "eof":
            raise ExpressionSyntaxError(f"unexpected trailing input {text!r}", offset)
        return e

    def additive(self) -> Expression:
        left = self.multiplicative()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                left = Binary(text, left, self.multiplicative())
            else:
                return left

    def multiplicative(self) -> Expression:
        left = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                left = Binary(text, left, self.unary())
            else:
                return left

    def unary(self) -> Expression:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, text, offset = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "op" and text == "(":
            e = self.additive()
            self.expect_op(")")
            return e
        if kind == "ident":
            nk, nt, _ = self.peek()
            if nk == "op" and nt == "(":
                if text not in FUNCTIONS:
                    raise ExpressionSyntaxError(f"unknown function '{text}'", offset)
                self.take()
                arg = self.additive()
                self.expect_op(")")
                return Unary(text, arg)
            if text in FUNCTIONS:
                raise ExpressionSyntaxError(f"function name '{text}' used without arguments", offset)
            if text not in self.allowed:
                raise UnknownIdentifierError(text, offset)
            return Name(text)
        raise ExpressionSyntaxError(f"unexpected {text or 'end of input'!r}", offset)


def parse_expression(source: str, allowed_names) -> Expression:
    """Parse ``source`` into an expression tree.

    Free identifiers must be members of ``allowed_names``; violations raise
    :class:`UnknownIdentifierError` with the byte offset of the offender.
    """
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(source, frozenset(allowed_names)).parse()


# ---------------------------------------------------------------------------
# Printing. Parenthesization is chosen so that re-parsing the printed form
# reconstructs the same tree shape (hence bit-identical evaluation).

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expression) -> int:
    if isinstance(e, Binary):
        return _PRECEDENCE[e.op]
    if isinstance(e, Unary):
        return 3 if e.op == "neg" else 5
    return 5


def _fmt_const(v: float) -> str:
    return repr(float(v))


def to_source(e: Expression) -> str:
    """Render the tree back to grammar-conformant source text."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_source(e.arg)
            if _prec(e.arg) < 3:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_source(e.arg)})"
    left, right = to_source(e.left), to_source(e.right)
    p = _PRECEDENCE[e.op]
    if e.op == "^":
        # right-associative; unary minus is allowed bare in the exponent
        if _prec(e.left) <= p:
            left = f"({left})"
        if isinstance(e.right, Binary) and _PRECEDENCE[e.right.op] < 3:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# Evaluation

def evaluate(e: Expression, env: Mapping[str, float]) -> float:
    """Evaluate at the point described by ``env`` (name -> value).

    Raises :class:`DomainError` when the point is outside the expression's
    real domain or the result is not finite.
    """
    result = _eval(e, env)
    if not math.isfinite(result):
        raise DomainError(f"non-finite result {result!r}")
    return result


def _eval(e: Expression, env: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Name):
        try:
            return env[e.ident]
        except KeyError:
            raise UnknownIdentifierError(e.ident, 0) from None
    try:
        if isinstance(e, Unary):
            if e.op == "neg":
                return -_eval(e.arg, env)
            return _SCALAR_FUNCS[e.op](_eval(e.arg, env))
        left = _eval(e.left, env)
        if e.op == "^":
            if _is_integer_literal(e.right):
                return _k_ipow(left, int(e.right.value))
            return _k_gpow(left, _eval(e.right, env))
        right = _eval(e.right, env)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        return _k_div(left, right)
    except OverflowError:
        raise DomainError("overflow during evaluation") from None


def free_variables(e: Expression) -> frozenset[str]:
    """The set of identifiers appearing in the tree."""
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Name):
            out.add(node.ident)
        elif isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.append(node.left)
            stack.append(node.right)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Differentiation

def differentiate(e: Expression, wrt: str) -> Expression:
    """Exact symbolic partial derivative with respect to ``wrt``.

    Integer-literal powers use the power rule; general powers follow the
    exp/log form. ``abs`` differentiates to ``sign`` (0 at 0) and ``sign``
    to 0. Results are constant-folded.
    """
    if isinstance(e, Const):
        return _ZERO
    if isinstance(e, Name):
        return _ONE if e.ident == wrt else _ZERO
    if isinstance(e, Unary):
        du = differentiate(e.arg, wrt)
        u = e.arg
        if e.op == "neg":
            return e_neg(du)
        if e.op == "sqrt":
            return e_div(du, e_mul(_const(2.0), e_func("sqrt", u)))
        if e.op == "sin":
            return e_mul(e_func("cos", u), du)
        if e.op == "cos":
            return e_neg(e_mul(e_func("sin", u), du))
        if e.op == "exp":
            return e_mul(e_func("exp", u), du)
        if e.op == "log":
            return e_div(du, u)
        if e.op == "abs":
            return e_mul(e_func("sign", u), du)
        if e.op == "sign":
            return _ZERO
        raise ExpressionError(f"cannot differentiate '{e.op}'")
    if e.op in "+-":
        return _BINARY_BUILDERS[e.op](differentiate(e.left, wrt), differentiate(e.right, wrt))
    if e.op == "*":
        return e_add(e_mul(differentiate(e.left, wrt), e.right),
                     e_mul(e.left, differentiate(e.right, wrt)))
    if e.op == "/":
        num = e_sub(e_mul(differentiate(e.left, wrt), e.right),
                    e_mul(e.left, differentiate(e.right, wrt)))
        return e_div(num, e_pow(e.right, _const(2.0)))
    # power
    base, expo = e.left, e.right
    db = differentiate(base, wrt)
    if _is_integer_literal(expo):
        n = expo.value
        return e_mul(e_mul(_const(n), e_pow(base, _const(n - 1))), db)
    # d/dx exp(y*log(b)) = b^y * (dy*log(b) + y*db/b)
    dy = differentiate(expo, wrt)
    inner = e_add(e_mul(dy, e_func("log", base)), e_div(e_mul(expo, db), base))
    return e_mul(e, inner)


# ---------------------------------------------------------------------------
# Compilation to Python callables

_ARRAY_FUNCS = {}


def _make_array_funcs():
    def wrap(fn):
        def call(*args):
            with np.errstate(all="ignore"):
                return fn(*args)
        return call

    _ARRAY_FUNCS.update({
        "sqrt": wrap(np.sqrt),
        "sin": np.sin,
        "cos": np.cos,
        "exp": wrap(np.exp),
        "log": wrap(np.log),
        "abs": np.abs,
        "sign": np.sign,
        "_div": wrap(np.divide),
        "_ipow": wrap(lambda b, n: np.asarray(b, dtype=float) ** n),
        "_gpow": wrap(lambda b, y: np.exp(y * np.log(b))),
    })


_make_array_funcs()

_SCALAR_NAMESPACE = dict(_SCALAR_FUNCS)
_SCALAR_NAMESPACE.update({"_div": _k_div, "_ipow": _k_ipow, "_gpow": _k_gpow})


def _emit(e: Expression, slot: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Name):
        return slot[e.ident]
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_emit(e.arg, slot)})"
        return f"{e.op}({_emit(e.arg, slot)})"
    left = _emit(e.left, slot)
    if e.op == "^":
        if _is_integer_literal(e.right):
            n = int(e.right.value)
            # cheap bases inline without recomputation concerns
            if n in (2, 3) and isinstance(e.left, (Name, Const)):
                return "(" + " * ".join([left] * n) + ")"
            return f"_ipow({left}, {n})"
        return f"_gpow({left}, {_emit(e.right, slot)})"
    right = _emit(e.right, slot)
    if e.op == "/":
        return f"_div({left}, {right})"
    return f"({left} {e.op} {right})"


def _compile(e: Expression, arg_names, namespace: dict) -> Callable:
    # positional slots sidestep collisions with kernel names and keywords
    slot = {name: f"v{i}" for i, name in enumerate(arg_names)}
    missing = free_variables(e) - set(slot)
    if missing:
        raise ExpressionError(f"unbound identifiers: {sorted(missing)}")
    src = f"def _compiled({', '.join(slot[n] for n in arg_names)}):\n    return {_emit(e, slot)}\n"
    scope = dict(namespace)
    exec(compile(src, "<critflow-expr>", "exec"), scope)
    return scope["_compiled"]


def compile_scalar(e: Expression, arg_names) -> Callable[..., float]:
    """Compile to a positional-argument float function.

    Produces bit-identical results to :func:`evaluate` (same kernels, same
    operation order) and raises :class:`DomainError` on domain violations.
    """
    return _compile(e, tuple(arg_names), _SCALAR_NAMESPACE)


def compile_array(e: Expression, arg_names) -> Callable[..., np.ndarray]:
    """Compile to a numpy-broadcasting function; out-of-domain entries come
    back as NaN/inf instead of raising."""
    return _compile(e, tuple(arg_names), dict(_ARRAY_FUNCS))


# ---------------------------------------------------------------------------
# System definitions

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _check_names(names, what: str) -> None:
    for n in names:
        if not _IDENT_RE.match(n):
            raise ExpressionError(f"invalid {what} name {n!r}")
        if n in FUNCTIONS:
            raise ExpressionError(f"{what} name {n!r} shadows a reserved function")


@dataclass(frozen=True, eq=True)
class SystemDefinition:
    """An autonomous system: n named state variables, fixed parameter
    values, and one right-hand-side expression per state variable."""

    name: str
    state_names: tuple[str, ...]
    parameters: dict[str, float]
    components: tuple[Expression, ...]

    def __post_init__(self):
        n = len(self.state_names)
        if n < 1:
            raise ExpressionError("system needs at least one state variable")
        if len(set(self.state_names)) != n:
            raise ExpressionError("state names must be pairwise distinct")
        if len(self.components) != n:
            raise ExpressionError(
                f"{len(self.components)} components for {n} state variables")
        _check_names(self.state_names, "state")
        _check_names(self.parameters, "parameter")
        overlap = set(self.state_names) & set(self.parameters)
        if overlap:
            raise ExpressionError(f"names declared as both state and parameter: {sorted(overlap)}")
        declared = set(self.state_names) | set(self.parameters)
        for i, comp in enumerate(self.components):
            undeclared = free_variables(comp) - declared
            if undeclared:
                raise ExpressionError(
                    f"component {i} references undeclared names {sorted(undeclared)}")

    @classmethod
    def from_sources(cls, name: str, state_names, parameters: Mapping[str, float],
                     sources) -> "SystemDefinition":
        state_names = tuple(state_names)
        parameters = {k: float(v) for k, v in sorted(parameters.items())}
        allowed = set(state_names) | set(parameters)
        components = tuple(parse_expression(s, allowed) for s in sources)
        return cls(name=name, state_names=state_names, parameters=parameters,
                   components=components)

    @property
    def dimension(self) -> int:
        return len(self.state_names)

    def component_sources(self) -> tuple[str, ...]:
        return tuple(to_source(c) for c in self.components)
