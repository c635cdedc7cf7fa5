"""Reverse-mode automatic differentiation over numpy arrays, plus Adam.

Every op accepts either plain ``numpy`` values or :class:`Var` nodes. When no
operand is a ``Var`` the op simply returns the numeric result, so the same
episode code runs untaped for evaluation and taped for training.

Values are kept in float64 throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit as _expit

logger = logging.getLogger(__name__)


class TapeError(RuntimeError):
    """Structural misuse of a tape (foreign node, non-scalar output...)."""


class Var:
    """A node on a :class:`Tape` holding a float64 array value."""

    __slots__ = ("value", "tape", "index")
    __array_priority__ = 1000

    def __init__(self, value, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=float))

    def __neg__(self):
        return neg(self)

    def __getitem__(self, item):
        return take(self, item)


class Tape:
    """Linear record of the forward pass.

    Each node stores the indices of its ``Var`` parents and a vector-Jacobian
    closure mapping the node's cotangent to one cotangent per parent. Nodes are
    appended in evaluation order, which is a topological order by construction.
    """

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Callable | None] = []

    def __len__(self):
        return len(self._parents)

    def var(self, value) -> Var:
        """Register a leaf (a parameter or any input to differentiate by)."""
        return self._push(np.array(value, dtype=float), (), None)

    def _push(self, value, parents, vjp) -> Var:
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Var(value, self, len(self._parents) - 1)

    def backward(self, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        """Gradient of the scalar ``output`` with respect to each of ``wrt``."""
        if not isinstance(output, Var) or output.tape is not self:
            raise TapeError("output is not a node of this tape")
        if np.size(output.value) != 1:
            raise TapeError(f"backward needs a scalar output, got shape {output.shape}")
        for w in wrt:
            if not isinstance(w, Var) or w.tape is not self or w.index > output.index:
                raise TapeError(f"{w!r} is not an ancestor candidate on this tape")

        grads: list = [None] * (output.index + 1)
        grads[output.index] = np.ones_like(output.value)
        for i in range(output.index, -1, -1):
            g = grads[i]
            vjp = self._vjps[i]
            if g is None or vjp is None:
                continue
            for p, gp in zip(self._parents[i], vjp(g)):
                if gp is None:
                    continue
                grads[p] = gp if grads[p] is None else grads[p] + gp
        out = []
        for w in wrt:
            g = grads[w.index]
            out.append(np.zeros_like(w.value) if g is None else np.asarray(g, dtype=float))
        return out


def value(x):
    """Numeric value of a Var or a plain operand."""
    return x.value if type(x) is Var else x


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _unary(out, x, vjp):
    if type(x) is Var:
        return x.tape._push(out, (x.index,), lambda g: (vjp(g),))
    return out


def _binary(out, a, b, vjp_a, vjp_b):
    """Record ``out`` with the Var operands among ``a`` and ``b`` as parents.

    ``vjp_a`` / ``vjp_b`` map the output cotangent to each operand's cotangent
    and are only called for Var operands.
    """
    if type(a) is Var:
        if type(b) is Var:
            if a.tape is not b.tape:
                raise TapeError("operands live on different tapes")
            return a.tape._push(out, (a.index, b.index), lambda g: (vjp_a(g), vjp_b(g)))
        return a.tape._push(out, (a.index,), lambda g: (vjp_a(g),))
    if type(b) is Var:
        return b.tape._push(out, (b.index,), lambda g: (vjp_b(g),))
    return out


def _shape(x):
    return x.shape if type(x) is np.ndarray else np.shape(x)


def add(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(av), _shape(bv)
    return _binary(av + bv, a, b, lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb))


def sub(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(av), _shape(bv)
    return _binary(av - bv, a, b, lambda g: _unbroadcast(g, sa), lambda g: -_unbroadcast(g, sb))


def neg(a):
    return _unary(-value(a), a, lambda g: -g)


def mul(a, b):
    av, bv = value(a), value(b)
    sa, sb = _shape(av), _shape(bv)
    return _binary(
        av * bv, a, b, lambda g: _unbroadcast(g * bv, sa), lambda g: _unbroadcast(g * av, sb)
    )


def affine(x, weight, bias):
    """``x @ weight + bias`` for a batch ``x`` of shape (B, d_in)."""
    xv, wv, bv = value(x), value(weight), value(bias)
    out = xv @ wv + bv
    fns = []
    parents = []
    tape = None
    for operand, fn in (
        (x, lambda g: g @ wv.T),
        (weight, lambda g: xv.T @ g),
        (bias, lambda g: g.sum(axis=0)),
    ):
        if type(operand) is Var:
            if tape is None:
                tape = operand.tape
            elif operand.tape is not tape:
                raise TapeError("operands live on different tapes")
            parents.append(operand.index)
            fns.append(fn)
    if tape is None:
        return out
    return tape._push(out, tuple(parents), lambda g: tuple(f(g) for f in fns))


def sigmoid(x):
    s = _expit(value(x))
    return _unary(s, x, lambda g: g * s * (1.0 - s))


def exp(x):
    ex = np.exp(value(x))
    return _unary(ex, x, lambda g: g * ex)


def absolute(x):
    """|x| with derivative sign(x), which is 0 at 0."""
    xv = value(x)
    return _unary(np.abs(xv), x, lambda g: g * np.sign(xv))


def maximum(a, b):
    """Elementwise max; at ties the gradient flows to ``a``."""
    av, bv = value(a), value(b)
    pick_a = av >= bv
    sa, sb = _shape(av), _shape(bv)
    return _binary(
        np.where(pick_a, av, bv),
        a,
        b,
        lambda g: _unbroadcast(g * pick_a, sa),
        lambda g: _unbroadcast(g * ~pick_a, sb),
    )


def minimum(a, b):
    """Elementwise min; at ties the gradient flows to ``a``."""
    av, bv = value(a), value(b)
    pick_a = av <= bv
    sa, sb = _shape(av), _shape(bv)
    return _binary(
        np.where(pick_a, av, bv),
        a,
        b,
        lambda g: _unbroadcast(g * pick_a, sa),
        lambda g: _unbroadcast(g * ~pick_a, sb),
    )


def where(mask, a, b):
    """Select with a constant boolean mask (no gradient through the mask)."""
    mask = np.asarray(value(mask), dtype=bool)
    av, bv = value(a), value(b)
    sa, sb = _shape(av), _shape(bv)
    return _binary(
        np.where(mask, av, bv),
        a,
        b,
        lambda g: _unbroadcast(g * mask, sa),
        lambda g: _unbroadcast(g * ~mask, sb),
    )


def total(x, axis=None):
    xv = value(x)
    shape = _shape(xv)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _unary(np.sum(xv, axis=axis), x, vjp)


def mean(x):
    xv = value(x)
    n = np.size(xv)
    shape = _shape(xv)
    return _unary(np.mean(xv), x, lambda g: np.full(shape, g / n))


def stack_columns(columns):
    """Stack 1-d batch vectors or scalars (Vars or constants) into (B, n)."""
    vals = [value(c) for c in columns]
    n = max(np.size(v) for v in vals)
    out = np.empty((n, len(vals)))
    parents = []
    fns = []
    tape = None
    for j, (c, v) in enumerate(zip(columns, vals)):
        out[:, j] = v
        if type(c) is Var:
            if tape is None:
                tape = c.tape
            elif c.tape is not tape:
                raise TapeError("operands live on different tapes")
            parents.append(c.index)
            if np.ndim(v) == 0:
                fns.append(lambda g, j=j: np.sum(g[:, j]))
            else:
                fns.append(lambda g, j=j: g[:, j])
    if tape is None:
        return out
    return tape._push(out, tuple(parents), lambda g: tuple(f(g) for f in fns))


def take(x, item):
    xv = value(x)
    shape = _shape(xv)

    def vjp(g):
        out = np.zeros(shape)
        out[item] = g
        return out

    return _unary(xv[item], x, vjp)


@dataclass
class AdamState:
    """Moment estimates for a list of parameter arrays."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped_steps: int = 0
    incidents: list[str] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            [np.zeros_like(p, dtype=float) for p in params],
            [np.zeros_like(p, dtype=float) for p in params],
            **hyper,
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    learning_rate: float,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new params and a new state.

    A non-finite gradient leaves both unchanged apart from an incident record.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and Adam state differ in length")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)}")

    if not all(np.all(np.isfinite(g)) for g in grads):
        msg = f"non-finite gradient at Adam step {state.step + 1}; update skipped"
        logger.warning(msg)
        return list(params), AdamState(
            state.first_moment,
            state.second_moment,
            state.step,
            state.beta1,
            state.beta2,
            state.eps,
            state.skipped_steps + 1,
            state.incidents + [msg],
        )

    b1, b2, eps = state.beta1, state.beta2, state.eps
    t = state.step + 1
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(
        new_m, new_v, t, b1, b2, eps, state.skipped_steps, list(state.incidents)
    )
