"""Derivative engine: reverse-mode tape over numpy arrays + forward-mode jets.

Two layers that compose:

* ``Tensor`` -- a node in a reverse-mode tape.  Arithmetic on Tensors records
  vector-Jacobian callbacks; ``backward()`` accumulates gradients with respect
  to every leaf.  Used for gradients of scalar losses w.r.t. network
  parameters.

* ``Jet`` -- forward-mode carrier of a value plus first and second directional
  derivatives along named directions (no cross terms; the residuals here only
  ever need d/dt, d/dx and d2/dx2).  Jet components may be plain numpy arrays
  *or* Tensors, so input-derivatives stay parameter-differentiable: running a
  Jet whose components are tape nodes is forward-over-reverse.

Supported primitives: +, -, *, /, exp, tanh, integer power, matmul and
sum/mean reductions.  Everything the benchmark residuals need reduces to
these.  All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AutodiffError",
    "UnsupportedOrderError",
    "NumericOverflowError",
    "Tensor",
    "Jet",
    "DerivativeRequest",
    "as_tensor",
    "exp",
    "tanh",
    "eval_with_input_derivatives",
    "gradient_wrt_parameters",
    "value_and_grad",
]


class AutodiffError(Exception):
    """Base class for derivative-engine failures."""


class UnsupportedOrderError(AutodiffError):
    """A derivative of order > 2 (or < 1) was requested."""


class NumericOverflowError(AutodiffError):
    """A non-finite value appeared during evaluation."""

    def __init__(self, message, request=None):
        super().__init__(message)
        self.request = request


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # sum out prepended axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Reverse-mode tape node holding a float64 numpy array."""

    # keep numpy from hijacking ndarray <op> Tensor
    __array_ufunc__ = None
    __slots__ = ("value", "grad", "_parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        # sequence of (parent Tensor, vjp callable grad -> parent-grad)
        self._parents = parents

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.value + other.value,
            parents=(
                (self, lambda g: _unbroadcast(g, self.value.shape)),
                (other, lambda g: _unbroadcast(g, other.value.shape)),
            ),
        )
        return out

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.value, parents=((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.value * other.value,
            parents=(
                (self, lambda g: _unbroadcast(g * other.value, self.value.shape)),
                (other, lambda g: _unbroadcast(g * self.value, other.value.shape)),
            ),
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out_val = self.value / other.value
        out = Tensor(
            out_val,
            parents=(
                (self, lambda g: _unbroadcast(g / other.value, self.value.shape)),
                (
                    other,
                    lambda g: _unbroadcast(
                        -g * self.value / (other.value * other.value),
                        other.value.shape,
                    ),
                ),
            ),
        )
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            raise TypeError("Tensor ** exponent must be a plain number")
        v = self.value
        out = Tensor(
            v**n,
            parents=((self, lambda g: g * n * v ** (n - 1)),),
        )
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(
            self.value @ other.value,
            parents=(
                (self, lambda g: g @ other.value.T),
                (other, lambda g: self.value.T @ g),
            ),
        )
        return out

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    def __getitem__(self, idx):
        def vjp(g):
            full = np.zeros_like(self.value)
            full[idx] = g
            return full

        return Tensor(self.value[idx], parents=((self, vjp),))

    def exp(self):
        out_val = np.exp(self.value)
        return Tensor(out_val, parents=((self, lambda g: g * out_val),))

    def tanh(self):
        out_val = np.tanh(self.value)
        return Tensor(
            out_val, parents=((self, lambda g: g * (1.0 - out_val * out_val)),)
        )

    def sum(self):
        return Tensor(
            np.sum(self.value),
            parents=((self, lambda g: np.broadcast_to(g, self.value.shape)),),
        )

    def mean(self):
        n = self.value.size
        return Tensor(
            np.mean(self.value),
            parents=((self, lambda g: np.broadcast_to(g / n, self.value.shape)),),
        )

    # -- reverse pass -------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this (scalar) node into the whole tape."""
        if self.value.size != 1:
            raise AutodiffError("backward() requires a scalar output")
        order = _toposort(self)
        self.grad = np.ones_like(self.value)
        for node in order:
            g = node.grad
            if g is None:
                continue
            for parent, vjp in node._parents:
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = np.array(contrib, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + contrib

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def _toposort(root):
    """Iterative topological order of the tape, output first."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return list(reversed(order))


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# -- generic elementwise functions (dispatch on numpy / Tensor / Jet) --------


def exp(x):
    if isinstance(x, Jet):
        return x.exp()
    if isinstance(x, Tensor):
        return x.exp()
    return np.exp(x)


def tanh(x):
    if isinstance(x, Jet):
        return x.tanh()
    if isinstance(x, Tensor):
        return x.tanh()
    return np.tanh(x)


# -- forward-mode jets --------------------------------------------------------


def _is_zero(c):
    return isinstance(c, float) and c == 0.0


def _jadd(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _jsub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return -b
    return a - b


def _jmul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return a * b


class Jet:
    """Value with named first/second directional derivatives.

    ``d1[k]`` is the derivative of ``value`` along direction ``k``;
    ``d2[k]`` the second derivative along the same direction.  Components may
    be scalars, numpy arrays or Tensors; exact float ``0.0`` is used as a
    structural zero so constants stay cheap.
    """

    __array_ufunc__ = None
    __slots__ = ("value", "d1", "d2")

    def __init__(self, value, d1=None, d2=None):
        self.value = value
        self.d1 = d1 or {}
        self.d2 = d2 or {}

    @classmethod
    def seed(cls, value, direction, second_order=False):
        """Input jet: unit first derivative along ``direction``."""
        one = np.ones_like(np.asarray(value, dtype=np.float64))
        d2 = {direction: 0.0} if second_order else {}
        return cls(value, {direction: one}, d2)

    @classmethod
    def constant(cls, value):
        return cls(value)

    def _keys1(self, other):
        if isinstance(other, Jet):
            return set(self.d1) | set(other.d1)
        return set(self.d1)

    def _keys2(self, other):
        if isinstance(other, Jet):
            return set(self.d2) | set(other.d2)
        return set(self.d2)

    # -- linear ops ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.value + other.value,
                {k: _jadd(self.d1.get(k, 0.0), other.d1.get(k, 0.0)) for k in self._keys1(other)},
                {k: _jadd(self.d2.get(k, 0.0), other.d2.get(k, 0.0)) for k in self._keys2(other)},
            )
        return Jet(self.value + other, dict(self.d1), dict(self.d2))

    __radd__ = __add__

    def __neg__(self):
        return Jet(
            -self.value,
            {k: -c if not _is_zero(c) else 0.0 for k, c in self.d1.items()},
            {k: -c if not _is_zero(c) else 0.0 for k, c in self.d2.items()},
        )

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.value - other.value,
                {k: _jsub(self.d1.get(k, 0.0), other.d1.get(k, 0.0)) for k in self._keys1(other)},
                {k: _jsub(self.d2.get(k, 0.0), other.d2.get(k, 0.0)) for k in self._keys2(other)},
            )
        return Jet(self.value - other, dict(self.d1), dict(self.d2))

    def __rsub__(self, other):
        return (-self) + other

    # -- products / quotients ------------------------------------------------

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(
                self.value * other,
                {k: _jmul(c, other) for k, c in self.d1.items()},
                {k: _jmul(c, other) for k, c in self.d2.items()},
            )
        f, g = self, other
        value = f.value * g.value
        d1 = {
            k: _jadd(_jmul(f.d1.get(k, 0.0), g.value), _jmul(f.value, g.d1.get(k, 0.0)))
            for k in f._keys1(g)
        }
        d2 = {}
        for k in f._keys2(g):
            d2[k] = _jadd(
                _jadd(
                    _jmul(f.d2.get(k, 0.0), g.value),
                    _jmul(2.0, _jmul(f.d1.get(k, 0.0), g.d1.get(k, 0.0))),
                ),
                _jmul(f.value, g.d2.get(k, 0.0)),
            )
        return Jet(value, d1, d2)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / other)
        f, g = self, other
        h = f.value / g.value
        d1 = {}
        for k in f._keys1(g):
            d1[k] = _jsub(f.d1.get(k, 0.0), _jmul(h, g.d1.get(k, 0.0)))
            if not _is_zero(d1[k]):
                d1[k] = d1[k] / g.value
        d2 = {}
        for k in f._keys2(g):
            num = _jsub(
                _jsub(f.d2.get(k, 0.0), _jmul(2.0, _jmul(d1.get(k, 0.0), g.d1.get(k, 0.0)))),
                _jmul(h, g.d2.get(k, 0.0)),
            )
            d2[k] = num if _is_zero(num) else num / g.value
        return Jet(h, d1, d2)

    def __rtruediv__(self, other):
        # other / self with other a constant
        return Jet.constant(other) * self.__pow__(-1)

    def __pow__(self, n):
        v = self.value
        s = v**n
        s1 = n * v ** (n - 1)
        s2 = n * (n - 1) * v ** (n - 2) if n != 1 else 0.0
        return self._chain(s, s1, s2)

    # -- elementwise nonlinear ------------------------------------------------

    def _chain(self, s, s1, s2):
        """Apply unary chain rule given f(v), f'(v), f''(v)."""
        d1 = {k: _jmul(s1, c) for k, c in self.d1.items()}
        d2 = {}
        for k in self.d2:
            c1 = self.d1.get(k, 0.0)
            d2[k] = _jadd(_jmul(s2, _jmul(c1, c1)), _jmul(s1, self.d2.get(k, 0.0)))
        return Jet(s, d1, d2)

    def exp(self):
        s = exp(self.value)
        return self._chain(s, s, s)

    def tanh(self):
        s = tanh(self.value)
        s1 = 1.0 - s * s
        s2 = -2.0 * s * s1
        return self._chain(s, s1, s2)

    # -- structural ops ------------------------------------------------------

    def __matmul__(self, m):
        """Right-multiply by a (constant or Tensor) matrix; linear in the jet."""
        return Jet(
            self.value @ m,
            {k: (c @ m if not _is_zero(c) else 0.0) for k, c in self.d1.items()},
            {k: (c @ m if not _is_zero(c) else 0.0) for k, c in self.d2.items()},
        )

    def col(self, j):
        """Column slice (for multi-output networks); keeps 2-D shape."""
        sl = (slice(None), slice(j, j + 1))
        return Jet(
            self.value[sl],
            {k: (c[sl] if not _is_zero(c) else 0.0) for k, c in self.d1.items()},
            {k: (c[sl] if not _is_zero(c) else 0.0) for k, c in self.d2.items()},
        )

    @classmethod
    def hstack(cls, jets):
        """Stack column jets (numpy components only) into one input jet."""
        values = [np.asarray(j.value, dtype=np.float64).reshape(-1, 1) for j in jets]
        n = max(v.shape[0] for v in values)
        cols = [np.broadcast_to(v, (n, 1)) for v in values]
        value = np.hstack(cols)
        keys1 = set().union(*(j.d1 for j in jets))
        keys2 = set().union(*(j.d2 for j in jets))

        def stack_comp(key, which):
            out = np.zeros((n, len(jets)))
            nonzero = False
            for i, j in enumerate(jets):
                c = getattr(j, which).get(key, 0.0)
                if not _is_zero(c):
                    out[:, i] = np.asarray(c, dtype=np.float64).reshape(-1)
                    nonzero = True
            return out if nonzero else 0.0

        d1 = {k: stack_comp(k, "d1") for k in keys1}
        d2 = {k: stack_comp(k, "d2") for k in keys2}
        return cls(value, d1, d2)

    def __repr__(self):
        return f"Jet(d1={sorted(self.d1)}, d2={sorted(self.d2)})"


# -- public entry points ------------------------------------------------------


@dataclass(frozen=True)
class DerivativeRequest:
    """Ask for the ``order``-th derivative w.r.t. input ``input_index``."""

    input_index: int
    order: int


def eval_with_input_derivatives(program, point, requests):
    """Evaluate ``program`` at ``point`` with exact input derivatives.

    ``program`` is a callable taking one scalar-like argument per input and
    using only the supported primitives.  Returns ``(value, results)`` where
    ``results`` maps each request to its derivative value.
    """
    point = [float(p) for p in point]
    for req in requests:
        if req.order not in (1, 2):
            raise UnsupportedOrderError(
                f"derivative order {req.order} not supported (max 2)"
            )
        if not 0 <= req.input_index < len(point):
            raise ValueError(f"input index {req.input_index} out of range")

    first = {r.input_index for r in requests}
    second = {r.input_index for r in requests if r.order == 2}
    args = []
    for i, p in enumerate(point):
        if i in first:
            args.append(Jet(p, {i: 1.0}, {i: 0.0} if i in second else {}))
        else:
            args.append(Jet.constant(p))
    out = program(*args)
    if not isinstance(out, Jet):
        out = Jet.constant(out)

    value = float(out.value)
    if not np.isfinite(value):
        raise NumericOverflowError("program value is non-finite")
    results = {}
    for req in requests:
        comp = (out.d1 if req.order == 1 else out.d2).get(req.input_index, 0.0)
        d = float(np.asarray(comp))
        if not np.isfinite(d):
            raise NumericOverflowError(
                f"non-finite derivative for {req}", request=req
            )
        results[req] = d
    return value, results


def value_and_grad(objective, leaves):
    """Evaluate ``objective(leaf_tensors)`` and its gradient w.r.t. each leaf.

    ``leaves`` is a sequence of numpy arrays; returns ``(value, grads)`` with
    one gradient array per leaf (zeros for leaves the output never touched).
    """
    tensors = [Tensor(leaf) for leaf in leaves]
    out = objective(tensors)
    if not isinstance(out, Tensor):
        # objective independent of parameters
        return float(out), [np.zeros_like(t.value) for t in tensors]
    value = float(out.value)
    if not np.isfinite(value):
        raise NumericOverflowError("objective value is non-finite")
    out.backward()
    grads = [
        t.grad if t.grad is not None else np.zeros_like(t.value) for t in tensors
    ]
    return value, grads


def gradient_wrt_parameters(objective, leaves):
    """Flat gradient of a scalar objective w.r.t. a list of parameter arrays."""
    _, grads = value_and_grad(objective, leaves)
    return np.concatenate([np.asarray(g, dtype=np.float64).ravel() for g in grads])
