"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

The engine is deliberately small: numpy storage, a dynamic tape built as
operations execute, and exactly the primitives the graph pipeline needs.
Elementwise operations broadcast like numpy; ``matmul`` contracts the last
two axes and broadcasts any leading batch axes, so a stack of per-sample
node-feature matrices ``(n, p, d)`` multiplies a shared weight ``(d, h)``
in one call.  Gradients accumulate additively across fan-out, and the
backward sweep delivers a gradient to every ``requires_grad`` tensor that
is reachable from the loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateRowError,
    ShapeError,
    ValidationError,
)

Array = np.ndarray

ACTIVATION_KINDS = ("identity", "relu", "leaky_relu", "sigmoid", "tanh")

# Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] inside bce_loss;
# the clamp has zero gradient outside that interval.
PROB_CLAMP = 1e-7


def _check_finite(arr: Array, context: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"non-finite values produced by {context}")


class Tensor:
    """A dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, values, requires_grad: bool = False):
        self.data = np.asarray(values, dtype=np.float64)
        _check_finite(self.data, "tensor construction")
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents: tuple["Tensor", ...] = ()
        self._vjp: Callable[[Array], tuple[Array | None, ...]] | None = None

    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Return a copy that is cut off from the tape."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(astensor(other), -1.0))

    def __rsub__(self, other):
        return add(astensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def transpose(self) -> "Tensor":
        return transpose(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def take(self, indices, axis: int = -2) -> "Tensor":
        return take(self, indices, axis)

    def sum(self) -> "Tensor":
        return tsum(self)

    def mean(self) -> "Tensor":
        return tmean(self)

    def sigmoid(self) -> "Tensor":
        return activate(self, "sigmoid")

    def relu(self) -> "Tensor":
        return activate(self, "relu")

    def tanh(self) -> "Tensor":
        return activate(self, "tanh")

    # ------------------------------------------------------------------
    def backward(self) -> None:
        """Reverse sweep from a scalar loss.

        Every ``requires_grad`` tensor reachable on the tape receives its
        full gradient in ``.grad`` (accumulated additively if a gradient
        is already present).
        """
        if self.data.shape != ():
            raise ShapeError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            return
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        flows: dict[int, Array] = {id(self): np.ones(())}
        for node in reversed(topo):
            out_grad = flows.get(id(node))
            if out_grad is None or node._vjp is None:
                continue
            for parent, pgrad in zip(node._parents, node._vjp(out_grad)):
                if pgrad is None or not parent.requires_grad:
                    continue
                held = flows.get(id(parent))
                flows[id(parent)] = pgrad if held is None else held + pgrad
        for node in topo:
            g = flows.get(id(node))
            if g is None:
                continue
            _check_finite(g, "backward")
            node.grad = g if node.grad is None else node.grad + g


def astensor(values) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values)


def _from_op(data: Array, parents: tuple[Tensor, ...], vjp, context: str) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    _check_finite(data, context)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ----------------------------------------------------------------------
# arithmetic
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc

    def vjp(g: Array):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _from_op(data, (a, b), vjp, "add")


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc

    def vjp(g: Array):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _from_op(data, (a, b), vjp, "mul")


def matmul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError as exc:
        raise ShapeError(f"matmul batch shapes disagree: {a.shape} vs {b.shape}") from exc

    def vjp(g: Array):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _from_op(data, (a, b), vjp, "matmul")


def transpose(x) -> Tensor:
    x = astensor(x)
    if x.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 axes, got shape {x.shape}")
    data = np.swapaxes(x.data, -1, -2)

    def vjp(g: Array):
        return (np.swapaxes(g, -1, -2),)

    return _from_op(data, (x,), vjp, "transpose")


def reshape(x, shape) -> Tensor:
    x = astensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from exc
    old = x.data.shape

    def vjp(g: Array):
        return (g.reshape(old),)

    return _from_op(data, (x,), vjp, "reshape")


def tsum(x) -> Tensor:
    x = astensor(x)
    shape = x.data.shape

    def vjp(g: Array):
        return (np.full(shape, float(g)),)

    return _from_op(x.data.sum(), (x,), vjp, "sum")


def tmean(x) -> Tensor:
    x = astensor(x)
    if x.size == 0:
        raise ShapeError("mean of an empty tensor")
    shape = x.data.shape
    n = x.size

    def vjp(g: Array):
        return (np.full(shape, float(g) / n),)

    return _from_op(x.data.mean(), (x,), vjp, "mean")


def take(x, indices, axis: int = -2) -> Tensor:
    """Gather slices along one axis; repeated indices accumulate gradient."""
    x = astensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"take expects a 1-D index list, got shape {idx.shape}")
    ax = axis if axis >= 0 else x.ndim + axis
    if not 0 <= ax < x.ndim:
        raise ShapeError(f"take axis {axis} out of range for shape {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[ax]):
        raise ShapeError(f"take indices out of range for axis {ax} of shape {x.shape}")
    data = np.take(x.data, idx, axis=ax)

    def vjp(g: Array):
        out = np.zeros_like(x.data)
        sl: list = [slice(None)] * x.ndim
        sl[ax] = idx
        np.add.at(out, tuple(sl), g)
        return (out,)

    return _from_op(data, (x,), vjp, "take")


def concat(parts: Sequence[Tensor], axis: int = -2) -> Tensor:
    parts = tuple(astensor(p) for p in parts)
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        shapes = [p.shape for p in parts]
        raise ShapeError(f"cannot concatenate shapes {shapes} along axis {axis}") from exc
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g: Array):
        return tuple(np.split(g, splits, axis=axis))

    return _from_op(data, parts, vjp, "concat")


def maximum(a, b) -> Tensor:
    """Elementwise maximum; ties route the gradient to the first argument."""
    a, b = astensor(a), astensor(b)
    try:
        data = np.maximum(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"cannot take maximum of shapes {a.shape} and {b.shape}") from exc
    pick_a = a.data >= b.data

    def vjp(g: Array):
        return (
            _unbroadcast(g * pick_a, a.data.shape),
            _unbroadcast(g * ~pick_a, b.data.shape),
        )

    return _from_op(data, (a, b), vjp, "maximum")


# ----------------------------------------------------------------------
# activations
# ----------------------------------------------------------------------

def _stable_sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _dsigmoid(y: Array) -> Array:
    return y * (1.0 - y)


def activate(x, kind: str, alpha: float = 0.2) -> Tensor:
    x = astensor(x)
    if kind == "identity":
        return x
    if kind == "sigmoid":
        y = _stable_sigmoid(x.data)

        def vjp(g: Array):
            return (g * _dsigmoid(y),)

        return _from_op(y, (x,), vjp, "sigmoid")
    if kind == "relu":
        y = np.maximum(x.data, 0.0)
        gate = x.data > 0.0

        def vjp(g: Array):
            return (g * gate,)

        return _from_op(y, (x,), vjp, "relu")
    if kind == "leaky_relu":
        slope = np.where(x.data > 0.0, 1.0, alpha)
        y = np.where(x.data > 0.0, x.data, alpha * x.data)

        def vjp(g: Array):
            return (g * slope,)

        return _from_op(y, (x,), vjp, "leaky_relu")
    if kind == "tanh":
        y = np.tanh(x.data)

        def vjp(g: Array):
            return (g * (1.0 - y * y),)

        return _from_op(y, (x,), vjp, "tanh")
    raise ConfigError(f"unknown activation kind {kind!r}")


def sigmoid(x) -> Tensor:
    return activate(x, "sigmoid")


def relu(x) -> Tensor:
    return activate(x, "relu")


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    return activate(x, "leaky_relu", alpha)


def row_softmax(x, mask) -> Tensor:
    """Softmax over the last axis restricted to ``mask == 1`` entries.

    The mask is treated as a constant: masked entries get probability 0 and
    propagate no gradient.  A row with every entry masked is an error.
    """
    x = astensor(x)
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValidationError("softmax mask entries must be 0 or 1")
    try:
        mb = np.broadcast_to(m, x.shape)
    except ValueError as exc:
        raise ShapeError(f"mask shape {m.shape} does not broadcast to {x.shape}") from exc
    if np.any(mb.sum(axis=-1) == 0.0):
        raise DegenerateRowError("softmax row with every entry masked")
    shifted = np.where(mb == 1.0, x.data, -np.inf)
    rowmax = shifted.max(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        expo = np.where(mb == 1.0, np.exp(shifted - rowmax), 0.0)
    probs = expo / expo.sum(axis=-1, keepdims=True)

    def vjp(g: Array):
        inner = (g * probs).sum(axis=-1, keepdims=True)
        return ((g - inner) * probs,)

    return _from_op(probs, (x,), vjp, "row_softmax")


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------

def mse_loss(pred, target) -> Tensor:
    pred, target = astensor(pred), astensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ShapeError("mse_loss of empty tensors")
    diff = pred.data - target.data
    n = diff.size

    def vjp(g: Array):
        scale = 2.0 * float(g) / n
        return scale * diff, -scale * diff

    return _from_op((diff * diff).mean(), (pred, target), vjp, "mse_loss")


def mae_loss(pred, target) -> Tensor:
    pred, target = astensor(pred), astensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mae_loss shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ShapeError("mae_loss of empty tensors")
    diff = pred.data - target.data
    n = diff.size

    def vjp(g: Array):
        scale = float(g) / n
        s = np.sign(diff)
        return scale * s, -scale * s

    return _from_op(np.abs(diff).mean(), (pred, target), vjp, "mae_loss")


def bce_loss(probs, labels, mask=None) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Labels broadcast against the probabilities (a shared adjacency can
    supervise a whole batch of score matrices).  With ``mask`` given, the
    mean runs over ``mask == 1`` entries only.  Probabilities are clamped
    to ``[PROB_CLAMP, 1 - PROB_CLAMP]``; the clamp blocks gradient outside
    that interval.
    """
    probs, labels = astensor(probs), astensor(labels)
    try:
        y = np.broadcast_to(labels.data, probs.shape)
    except ValueError as exc:
        raise ShapeError(
            f"labels shape {labels.shape} does not broadcast to {probs.shape}"
        ) from exc
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("bce labels must be 0 or 1")
    p = np.clip(probs.data, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (probs.data > PROB_CLAMP) & (probs.data < 1.0 - PROB_CLAMP)
    if mask is None:
        weights = None
        count = p.size
        if count == 0:
            raise ShapeError("bce_loss of empty tensors")
    else:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValidationError("bce mask entries must be 0 or 1")
        try:
            weights = np.broadcast_to(m, probs.shape)
        except ValueError as exc:
            raise ShapeError(
                f"mask shape {m.shape} does not broadcast to {probs.shape}"
            ) from exc
        count = weights.sum()
        if count == 0:
            raise ValidationError("bce mask excludes every entry")
    terms = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    if weights is None:
        data = terms.mean()
    else:
        data = (terms * weights).sum() / count

    def vjp(g: Array):
        scale = float(g) / count
        gp = np.where(inside, (p - y) / (p * (1.0 - p)), 0.0) * scale
        gl = -(np.log(p) - np.log1p(-p)) * scale
        if weights is not None:
            gp = gp * weights
            gl = gl * weights
        return gp, _unbroadcast(gl, labels.data.shape)

    return _from_op(data, (probs, labels), vjp, "bce_loss")


# ----------------------------------------------------------------------
# optimisers
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Moment buffers and hyperparameters for Adam, one entry per parameter."""

    first_moment: list[Array]
    second_moment: list[Array]
    step_count: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float


def init_adam(
    params: Sequence[Tensor],
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p.data) for p in params],
        second_moment=[np.zeros_like(p.data) for p in params],
        step_count=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(
    params: Sequence[Tensor], grads: Sequence[Array | None], state: AdamState
) -> AdamState:
    """One bias-corrected Adam update in place; ``None`` gradients count as zero."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ShapeError(
            f"adam_step got {len(params)} params, {len(grads)} grads, "
            f"{len(state.first_moment)} moment buffers"
        )
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match param {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        p.data -= state.learning_rate * mhat / (np.sqrt(vhat) + state.epsilon)
    return state


class Adam:
    """Object wrapper around :func:`adam_step` that reads ``.grad`` fields."""

    def __init__(
        self,
        params: Sequence[Tensor],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = list(params)
        self.state = init_adam(self.params, learning_rate, beta1, beta2, epsilon)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)


class SGD:
    """Plain gradient descent, used as a baseline optimiser."""

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 1e-2):
        self.params = list(params)
        self.learning_rate = learning_rate

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.learning_rate * p.grad


# ----------------------------------------------------------------------
# finite-difference checking
# ----------------------------------------------------------------------

def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Compare tape gradients of ``f()`` against central finite differences.

    Returns the worst relative error ``|analytic - numeric| / max(1, |numeric|)``
    over every coordinate of every parameter.  Non-finite values anywhere
    make the check fail with ``inf``.
    """
    params = list(params)
    for p in params:
        p.grad = None
    try:
        out = f()
    except ValidationError:
        return float("inf")
    if not isinstance(out, Tensor) or out.data.shape != ():
        raise ShapeError("grad_check requires f to return a scalar Tensor")
    if not np.isfinite(out.data):
        return float("inf")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ref in zip(params, analytic):
        flat = p.data.reshape(-1)
        ref_flat = ref.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            try:
                flat[i] = keep + h
                hi = float(f().data)
                flat[i] = keep - h
                lo = float(f().data)
            except ValidationError:
                return float("inf")
            finally:
                flat[i] = keep
            if not (np.isfinite(hi) and np.isfinite(lo)):
                return float("inf")
            numeric = (hi - lo) / (2.0 * h)
            err = abs(ref_flat[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
