"""Scalar reverse-mode automatic differentiation.

Every primitive evaluation is appended to a :class:`Tape` together with its
local partial derivatives; :meth:`Tape.backward` sweeps the tape in reverse
and accumulates adjoints. The module-level math functions (``exp``, ``sqrt``,
``sigmoid`` ...) dispatch on their argument, so the same code path evaluates
plain floats, numpy arrays and :class:`Variable` objects.

Conventions at non-smooth points:

* ``abs`` has subgradient 0 at 0.
* ``sqrt`` evaluates its derivative at ``max(z, 1e-30)`` so a vanishing
  argument cannot produce an infinite partial.
* ``minimum``/``maximum`` route the whole adjoint to the first operand on ties.
* sorting a list of variables only permutes references, so adjoints follow the
  forward permutation; ties keep their original order (stable sort).
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, UsageError

SQRT_GUARD = 1e-30


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _sign(x):
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


# kind -> (arity, forward(values, const), partials(values, result, const))
PRIMITIVES: dict[str, tuple[int, Callable, Callable]] = {
    "add": (2, lambda v, c: v[0] + v[1], lambda v, r, c: (1.0, 1.0)),
    "sub": (2, lambda v, c: v[0] - v[1], lambda v, r, c: (1.0, -1.0)),
    "mul": (2, lambda v, c: v[0] * v[1], lambda v, r, c: (v[1], v[0])),
    "div": (2, lambda v, c: v[0] / v[1], lambda v, r, c: (1.0 / v[1], -r / v[1])),
    "neg": (1, lambda v, c: -v[0], lambda v, r, c: (-1.0,)),
    "add_const": (1, lambda v, c: v[0] + c, lambda v, r, c: (1.0,)),
    "mul_const": (1, lambda v, c: v[0] * c, lambda v, r, c: (c,)),
    "rsub_const": (1, lambda v, c: c - v[0], lambda v, r, c: (-1.0,)),
    "rdiv_const": (1, lambda v, c: c / v[0], lambda v, r, c: (-r / v[0],)),
    "pow_const": (1, lambda v, c: v[0] ** c, lambda v, r, c: (c * v[0] ** (c - 1.0),)),
    "square": (1, lambda v, c: v[0] * v[0], lambda v, r, c: (2.0 * v[0],)),
    "exp": (1, lambda v, c: math.exp(v[0]), lambda v, r, c: (r,)),
    "log": (1, lambda v, c: math.log(v[0]), lambda v, r, c: (1.0 / v[0],)),
    "sin": (1, lambda v, c: math.sin(v[0]), lambda v, r, c: (math.cos(v[0]),)),
    "cos": (1, lambda v, c: math.cos(v[0]), lambda v, r, c: (-math.sin(v[0]),)),
    "atan": (1, lambda v, c: math.atan(v[0]), lambda v, r, c: (1.0 / (1.0 + v[0] * v[0]),)),
    "sqrt": (
        1,
        lambda v, c: math.sqrt(v[0]),
        lambda v, r, c: (0.5 / math.sqrt(max(v[0], SQRT_GUARD)),),
    ),
    "abs": (1, lambda v, c: abs(v[0]), lambda v, r, c: (_sign(v[0]),)),
    "sigmoid": (1, lambda v, c: _sigmoid(v[0]), lambda v, r, c: (r * (1.0 - r),)),
    "atan2": (
        2,
        lambda v, c: math.atan2(v[0], v[1]),
        lambda v, r, c: (
            (v[1] / (v[0] ** 2 + v[1] ** 2), -v[0] / (v[0] ** 2 + v[1] ** 2))
            if (v[0] or v[1])
            else (0.0, 0.0)
        ),
    ),
    "minimum": (
        2,
        lambda v, c: v[0] if v[0] <= v[1] else v[1],
        lambda v, r, c: (1.0, 0.0) if v[0] <= v[1] else (0.0, 1.0),
    ),
    "maximum": (
        2,
        lambda v, c: v[0] if v[0] >= v[1] else v[1],
        lambda v, r, c: (1.0, 0.0) if v[0] >= v[1] else (0.0, 1.0),
    ),
}


class Tape:
    """Append-only record of primitive evaluations."""

    def __init__(self):
        self.kinds: list[str] = []
        self.operands: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.consts: list = []
        self.values: list[float] = []

    def __len__(self):
        return len(self.values)

    def _append(self, kind, operands, partials, const, value):
        self.kinds.append(kind)
        self.operands.append(operands)
        self.partials.append(partials)
        self.consts.append(const)
        self.values.append(value)
        return Variable(self, len(self.values) - 1)

    def variable(self, value: float) -> "Variable":
        """New independent input."""
        return self._append("input", (), (), None, float(value))

    def constant(self, value: float) -> "Variable":
        """A leaf that is never differentiated against but lives on the tape."""
        return self._append("const", (), (), None, float(value))

    def record(self, kind: str, operands: Sequence["Variable"], const=None) -> "Variable":
        try:
            arity, forward, partials = PRIMITIVES[kind]
        except KeyError:
            raise UsageError(f"unknown primitive {kind!r}") from None
        if len(operands) != arity:
            raise UsageError(f"{kind} takes {arity} operands, got {len(operands)}")
        for v in operands:
            if not isinstance(v, Variable) or v.tape is not self:
                raise UsageError("operands must be Variables on this tape")
        vals = [self.values[v.index] for v in operands]
        try:
            result = forward(vals, const)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise NumericalError(f"{kind}{tuple(vals)}: {exc}") from None
        return self._append(
            kind,
            tuple(v.index for v in operands),
            tuple(float(p) for p in partials(vals, result, const)),
            const,
            result,
        )

    def replay(self) -> list[float]:
        """Recompute every node value from the leaves in tape order."""
        out: list[float] = []
        for kind, ops, const, value in zip(self.kinds, self.operands, self.consts, self.values):
            if kind in ("input", "const"):
                out.append(value)
            else:
                out.append(PRIMITIVES[kind][1]([out[i] for i in ops], const))
        return out

    def backward(self, output: "Variable") -> "Gradient":
        if not isinstance(output, Variable) or output.tape is not self:
            raise UsageError("output must be a Variable on this tape")
        adj = [0.0] * (output.index + 1)
        adj[output.index] = 1.0
        operands, partials = self.operands, self.partials
        for i in range(output.index, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            for j, p in zip(operands[i], partials[i]):
                adj[j] += a * p
        adj.extend([0.0] * (len(self.values) - len(adj)))
        return Gradient(self, np.asarray(adj))


class Gradient:
    """Adjoints of one output with respect to every node of a tape."""

    def __init__(self, tape: Tape, adjoints: np.ndarray):
        self.tape = tape
        self.adjoints = adjoints

    def __getitem__(self, var: "Variable") -> float:
        if not isinstance(var, Variable):
            return 0.0
        if var.tape is not self.tape:
            raise UsageError("Variable belongs to a different tape")
        return float(self.adjoints[var.index])

    def wrt(self, variables) -> np.ndarray:
        return np.array([self[v] for v in variables], dtype=float)


class Variable:
    """Handle to one tape node."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None  # make numpy scalars defer to our reflected operators

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> float:
        return self.tape.values[self.index]

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Variable({self.value!r}, index={self.index})"

    def _binary(self, other, kind, const_kind):
        if isinstance(other, Variable):
            return self.tape.record(kind, (self, other))
        return self.tape.record(const_kind, (self,), float(other))

    def __add__(self, other):
        return self._binary(other, "add", "add_const")

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Variable):
            return self.tape.record("sub", (self, other))
        return self.tape.record("add_const", (self,), -float(other))

    def __rsub__(self, other):
        return self.tape.record("rsub_const", (self,), float(other))

    def __mul__(self, other):
        return self._binary(other, "mul", "mul_const")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Variable):
            return self.tape.record("div", (self, other))
        return self.tape.record("mul_const", (self,), 1.0 / float(other))

    def __rtruediv__(self, other):
        return self.tape.record("rdiv_const", (self,), float(other))

    def __neg__(self):
        return self.tape.record("neg", (self,))

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Variable):
            raise UsageError("only constant exponents are supported")
        if exponent == 2:
            return self.tape.record("square", (self,))
        return self.tape.record("pow_const", (self,), float(exponent))

    def __abs__(self):
        return self.tape.record("abs", (self,))

    def __lt__(self, other):
        return self.value < _value(other)

    def __le__(self, other):
        return self.value <= _value(other)

    def __gt__(self, other):
        return self.value > _value(other)

    def __ge__(self, other):
        return self.value >= _value(other)


def _value(x):
    return x.value if isinstance(x, Variable) else x


def value(x):
    """Forward value of a Variable, or ``x`` itself."""
    if isinstance(x, Variable):
        return x.value
    if isinstance(x, (list, tuple)):
        return np.array([_value(v) for v in x], dtype=float)
    return x


def _unary(kind, fallback):
    def fn(x):
        if isinstance(x, Variable):
            return x.tape.record(kind, (x,))
        return fallback(x)

    fn.__name__ = kind
    return fn


def _np_sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


exp = _unary("exp", np.exp)
log = _unary("log", np.log)
sin = _unary("sin", np.sin)
cos = _unary("cos", np.cos)
atan = _unary("atan", np.arctan)
sqrt = _unary("sqrt", np.sqrt)
sigmoid = _unary("sigmoid", _np_sigmoid)


def _binary(kind, fallback):
    def fn(a, b):
        if isinstance(a, Variable) or isinstance(b, Variable):
            tape = a.tape if isinstance(a, Variable) else b.tape
            a = a if isinstance(a, Variable) else tape.constant(a)
            b = b if isinstance(b, Variable) else tape.constant(b)
            return tape.record(kind, (a, b))
        return fallback(a, b)

    fn.__name__ = kind
    return fn


atan2 = _binary("atan2", np.arctan2)
minimum = _binary("minimum", np.minimum)
maximum = _binary("maximum", np.maximum)


def where(cond, a, b):
    """Branch select that works for both array and scalar (Variable) paths."""
    if isinstance(cond, np.ndarray):
        return np.where(cond, a, b)
    return a if cond else b


def sort(values):
    """Stable sort of a sequence by forward value.

    For Variables the result holds the same handles, so backward routes
    adjoints through the forward permutation.
    """
    return sorted(values, key=_value)


def value_and_grad(f: Callable, params) -> tuple[float, np.ndarray]:
    """Evaluate ``f`` on a fresh tape and return its value and gradient."""
    tape = Tape()
    xs = [tape.variable(p) for p in np.asarray(params, dtype=float)]
    out = f(xs)
    if not isinstance(out, Variable):
        return float(out), np.zeros(len(xs))
    return out.value, tape.backward(out).wrt(xs)


def grad_check(f: Callable, params, h: float = 1e-5) -> float:
    """Max relative deviation between tape gradients and central differences.

    ``f`` receives a list of Variables and returns a scalar Variable. The
    deviation per parameter is ``|ad - fd| / max(1, |fd|)``.
    """
    p = np.asarray(params, dtype=float)
    val, grad = value_and_grad(f, p)
    if not math.isfinite(val):
        raise NumericalError(f"non-finite forward value {val}")
    worst = 0.0
    for i in range(p.size):
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        fd = (value_and_grad(f, up)[0] - value_and_grad(f, dn)[0]) / (2.0 * h)
        worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst
