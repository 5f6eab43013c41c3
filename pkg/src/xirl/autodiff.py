"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape: every operation builds a `Var` node holding the forward
value and a closure that maps the output adjoint to the input adjoints.
`backward()` on a scalar loss walks the graph once in reverse
topological order. The operation set (matmul, broadcasting arithmetic,
elementwise activations, softmax, reductions, gather, concat) is
deliberately fixed; it is sufficient for every loss trained in this
package.

All training math is float64. 32-bit floats appear only in serialized
checkpoints (see `checkpoint`).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


def _as_f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Graph node: a float64 array plus adjoint bookkeeping.

    `needs_grad` marks whether any leaf parameter is reachable from this
    node; vjps for subtrees that don't need gradients are skipped.
    """

    __slots__ = ("data", "grad", "needs_grad", "_parents", "_vjp")

    def __init__(
        self,
        data,
        needs_grad: bool = False,
        _parents: tuple["Var", ...] = (),
        _vjp: Callable[[Array], Iterable[Array | None]] | None = None,
    ):
        self.data = _as_f64(data)
        self.grad: Array | None = None
        self.needs_grad = needs_grad
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Var":
        return Var(self.data)

    def backward(self) -> None:
        """Accumulate adjoints of a scalar, finite loss into leaf `.grad`s."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if not np.isfinite(self.data):
            raise FloatingPointError(f"non-finite loss: {float(self.data)}")

        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.needs_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.needs_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g.copy() if g.base is not None or g is node.grad else g
                else:
                    parent.grad += g

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Var(shape={self.shape}, needs_grad={self.needs_grad})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _make(data: Array, parents: tuple[Var, ...], vjp) -> Var:
    needs = any(p.needs_grad for p in parents)
    if not needs:
        return Var(data)
    return Var(data, needs_grad=True, _parents=parents, _vjp=vjp)


# -- arithmetic -------------------------------------------------------------


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data + b.data

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), vjp)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data - b.data

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), vjp)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * out / b.data, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def neg(a) -> Var:
    a = as_var(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.data @ b.data

    def vjp(g):
        ga = g @ b.data.T if a.needs_grad else None
        gb = a.data.T @ g if b.needs_grad else None
        return (ga, gb)

    return _make(out, (a, b), vjp)


# -- elementwise ------------------------------------------------------------


def relu(a) -> Var:
    a = as_var(a)
    out = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0.0),)

    return _make(out, (a,), vjp)


def tanh(a) -> Var:
    a = as_var(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp)


def sigmoid(a) -> Var:
    a = as_var(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), vjp)


def exp(a) -> Var:
    a = as_var(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp)


def log(a) -> Var:
    a = as_var(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _make(out, (a,), vjp)


def softplus(a) -> Var:
    """log(1 + e^x), computed stably for large |x|."""
    a = as_var(a)
    out = np.logaddexp(0.0, a.data)

    def vjp(g):
        return (g * 0.5 * (1.0 + np.tanh(0.5 * a.data)),)

    return _make(out, (a,), vjp)


def square(a) -> Var:
    a = as_var(a)
    out = a.data * a.data

    def vjp(g):
        return (2.0 * g * a.data,)

    return _make(out, (a,), vjp)


def sqrt(a) -> Var:
    a = as_var(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), vjp)


def minimum(a, b) -> Var:
    """Elementwise min; on ties the subgradient goes to the first argument."""
    a, b = as_var(a), as_var(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * ~take_a, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def maximum(a, b) -> Var:
    """Elementwise max; on ties the subgradient goes to the first argument."""
    a, b = as_var(a), as_var(b)
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * ~take_a, b.data.shape),
        )

    return _make(out, (a, b), vjp)


# -- reductions & shape -----------------------------------------------------


def vsum(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    return _make(out, (a,), vjp)


def vmean(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.data.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, a.data.shape),)

    return _make(out, (a,), vjp)


def reshape(a, shape) -> Var:
    a = as_var(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make(out, (a,), vjp)


def transpose(a) -> Var:
    a = as_var(a)

    def vjp(g):
        return (g.T,)

    return _make(a.data.T, (a,), vjp)


def concat(vars_: Sequence[Var], axis: int = 0) -> Var:
    vs = [as_var(v) for v in vars_]
    out = np.concatenate([v.data for v in vs], axis=axis)
    sizes = [v.data.shape[axis] for v in vs]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(vs), vjp)


def gather_rows(a, idx) -> Var:
    """Select rows of a 2D array by integer index (duplicates allowed)."""
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make(out, (a,), vjp)


def softmax(a, axis: int = -1) -> Var:
    """Shift-stabilized softmax along `axis`."""
    a = as_var(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), vjp)


def pairwise_sqdist(a: Var, b: Var) -> Var:
    """Matrix of squared L2 distances: out[i, j] = ||a_i - b_j||^2."""
    a, b = as_var(a), as_var(b)
    a2 = vsum(square(a), axis=1, keepdims=True)
    b2 = reshape(vsum(square(b), axis=1), (1, -1))
    cross = matmul(a, transpose(b))
    d = add(sub(a2, mul(cross, 2.0)), b2)
    # float cancellation can leave tiny negatives; clamp for downstream logs
    return maximum(d, 0.0)


# -- gradient checking -------------------------------------------------------


def grad_check(
    f: Callable[[list[Var]], Var],
    params: Sequence[Array],
    eps: float = 1e-5,
    num_coords: int = 64,
    rng: np.random.Generator | None = None,
    jitter: float = 1e-3,
) -> float:
    """Compare analytic gradients of `f` against central finite differences.

    Probes a random subset of coordinates (at most `num_coords`, or all if
    fewer exist). The probe point is randomly offset by up to `jitter` so
    that measure-zero activation kinks (e.g. relu at exactly 0) are almost
    surely avoided. Returns the maximum relative error over probed
    coordinates, where the relative error uses a small absolute floor:

        err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-3)
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    probe = [np.array(p, dtype=np.float64) for p in params]
    if jitter > 0.0:
        for p in probe:
            p += rng.uniform(-jitter, jitter, size=p.shape)

    leaves = [Var(p, needs_grad=True) for p in probe]
    loss = f(leaves)
    if loss.data.size != 1:
        raise ValueError("grad_check target must return a scalar")
    if not np.isfinite(loss.data):
        raise FloatingPointError("grad_check target returned a non-finite value")
    loss.backward()
    analytic = [
        v.grad if v.grad is not None else np.zeros_like(v.data) for v in leaves
    ]

    total = sum(p.size for p in probe)
    n_probe = min(total, num_coords)
    flat_idx = rng.choice(total, size=n_probe, replace=False)

    offsets = np.cumsum([0] + [p.size for p in probe])
    max_err = 0.0
    for fi in sorted(flat_idx):
        which = int(np.searchsorted(offsets, fi, side="right") - 1)
        local = np.unravel_index(fi - offsets[which], probe[which].shape)
        orig = probe[which][local]

        probe[which][local] = orig + eps
        f_plus = f([Var(p) for p in probe]).data.item()
        probe[which][local] = orig - eps
        f_minus = f([Var(p) for p in probe]).data.item()
        probe[which][local] = orig

        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError("non-finite value during finite differencing")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[which][local]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
        max_err = max(max_err, err)
    return max_err
