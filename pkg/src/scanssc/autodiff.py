"""Dense float64 tensors with a reverse-mode gradient tape.

A :class:`Tape` records every primitive applied to tensors it watches, in
execution order. :meth:`Tape.gradient` replays that record backwards, which
visits each recorded op once in reverse topological order. Tensors without a
tape are constants: they flow through ops but never receive gradients.

Broadcasting follows numpy rules; backward rules sum gradients back down to
the operand shape.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class GradCheckError(ArithmeticError):
    pass


class Tape:
    """Single-writer record of primitive applications."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self):
        return len(self._records)

    def watch(self, value) -> Tensor:
        """Return a leaf tensor holding a copy of ``value`` that gradients flow to."""
        data = value.data if isinstance(value, Tensor) else value
        return Tensor(np.array(data, dtype=np.float64), tape=self)

    def gradient(self, output: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """d(sum(output))/d(source) for each source; zeros for unreachable sources."""
        if output.tape is not self:
            return [np.zeros_like(s.data) for s in sources]
        grads = {id(output): np.ones_like(output.data)}
        for out, parents, backward in reversed(self._records):
            g = grads.get(id(out))
            if g is None:
                continue
            for parent, pg in zip(parents, backward(g)):
                if pg is None or parent.tape is not self:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
        return [np.array(grads[id(s)]) if id(s) in grads else np.zeros_like(s.data)
                for s in sources]


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, tape: Tape | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        where = "detached" if self.tape is None else "on tape"
        return f"Tensor(shape={self.shape}, {where})"

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and p.tape is not tape:
                raise ValueError("operands are recorded on different tapes")
            tape = p.tape
    out = Tensor(data, tape)
    if tape is not None:
        tape._records.append((out, parents, backward))
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.data > 0
    return _make(np.where(on, a.data, 0.0), (a,), lambda g: (np.where(on, g, 0.0),))


def masked_fill(a, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by ``value``; those entries get no gradient."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    return _make(np.where(mask, value, a.data), (a,), lambda g: (np.where(mask, 0.0, g),))


# reductions ----------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _make(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = math.prod(a.shape[ax] for ax in axes)
    return mul(sum(a, axes, keepdims), 1.0 / count)


# linear algebra ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} differ") from None

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the trailing axis; weight is (C_in, C_out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    cin, cout = weight.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
        parents = (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, cout)
        grads = [g @ weight.data.T, x.data.reshape(-1, cin).T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _make(out, parents, backward)


# normalisation -------------------------------------------------------------


def softmax(x, axis=-1) -> Tensor:
    """Stable softmax; ``-inf`` entries map to exactly 0."""
    x = as_tensor(x)
    d = x.data
    if np.isnan(d).any() or np.isposinf(d).any():
        raise ValueError("softmax: inputs must be finite or -inf")
    if np.isneginf(d).all(axis=axis).any():
        raise ValueError("softmax: a slice is entirely -inf (attention row with no allowed key)")
    e = np.exp(d - d.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)
    return _make(out, (x,),
                 lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    d = x.data
    shifted = d - d.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return _make(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def layer_norm(x, gamma, beta, epsilon=1e-5) -> Tensor:
    """Normalise over the trailing (channel) axis, then apply ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} vs channels {c}")
    if epsilon <= 0:
        raise ValueError("layer_norm: epsilon must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + epsilon)
    xhat = centered * inv

    def backward(g):
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(x.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


# structure -----------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def permute(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(xs, axis=-1) -> Tensor:
    xs = tuple(as_tensor(x) for x in xs)
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[x.shape for x in xs]} differ off axis {axis}") from None
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _make(out, xs, lambda g: tuple(np.split(g, cuts, axis=axis)))


def getitem(x, key) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _make(x.data[key], (x,), backward)


def flip(x, axis) -> Tensor:
    x = as_tensor(x)
    return _make(np.flip(x.data, axis), (x,), lambda g: (np.flip(g, axis),))


def axis_map(x, matrix, axis) -> Tensor:
    """Apply a constant linear map ``matrix`` (L_out, L_in) along ``axis``."""
    x = as_tensor(x)
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != x.shape[axis]:
        raise ShapeError(f"axis_map: matrix {m.shape} does not act on axis {axis} of {x.shape}")
    out = np.moveaxis(np.tensordot(m, x.data, axes=([1], [axis])), 0, axis)
    return _make(out, (x,),
                 lambda g: (np.moveaxis(np.tensordot(m.T, g, axes=([1], [axis])), 0, axis),))


def _window_shape(ndim, axis, n):
    shape = [1] * ndim
    shape[axis] = n
    return shape


def cumulative_mean(x, axis, reverse=False) -> Tensor:
    """Running mean along ``axis``: of x[0..k] (forward) or of x[k..L-1] (reverse)."""
    x = as_tensor(x)
    axis = axis % x.ndim
    n = x.shape[axis]
    counts = np.arange(1, n + 1, dtype=np.float64).reshape(_window_shape(x.ndim, axis, n))
    if reverse:
        counts = np.flip(counts, axis)

    def prefix(a):
        return np.cumsum(a, axis=axis)

    def suffix(a):
        return np.flip(np.cumsum(np.flip(a, axis), axis=axis), axis)

    fwd, adj = (suffix, prefix) if reverse else (prefix, suffix)
    return _make(fwd(x.data) / counts, (x,), lambda g: (adj(g / counts),))


def _pad_index(shape3, pad, mode):
    idx = np.arange(math.prod(shape3)).reshape(shape3)
    if mode == "zeros":
        return np.pad(idx, pad, mode="constant", constant_values=-1)
    if mode == "symmetric":
        return np.pad(idx, pad, mode="symmetric")
    raise ValueError(f"unknown padding mode {mode!r}")


def conv3d(x, weight, bias=None, padding="zeros") -> Tensor:
    """Same-size 3D convolution of an (X, Y, Z, C_in) volume; weight (k, k, k, C_in, C_out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    k = weight.shape[0]
    if weight.ndim != 5 or weight.shape[:3] != (k, k, k) or k % 2 == 0:
        raise ShapeError(f"conv3d: weight must be (k,k,k,Cin,Cout) with odd k, got {weight.shape}")
    if x.ndim != 4 or x.shape[3] != weight.shape[3]:
        raise ShapeError(f"conv3d: input {x.shape} does not match weight {weight.shape}")
    p = k // 2
    cin = x.shape[3]
    src = _pad_index(x.shape[:3], p, padding).ravel()
    valid = src >= 0
    xp = np.zeros((src.size, cin))
    xp[valid] = x.data.reshape(-1, cin)[src[valid]]
    xp = xp.reshape(*(n + 2 * p for n in x.shape[:3]), cin)
    out = kernels.conv3d_valid(xp, weight.data)
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents = (x, weight, bias)

    def backward(g):
        gxp = kernels.conv3d_valid_grad_input(g, weight.data, xp.shape).reshape(-1, cin)
        gx = np.zeros((x.data[..., 0].size, cin))
        np.add.at(gx, src[valid], gxp[valid])
        grads = [gx.reshape(x.shape), kernels.conv3d_valid_grad_weight(xp, g, k)]
        if bias is not None:
            grads.append(g.reshape(-1, g.shape[-1]).sum(axis=0))
        return grads

    return _make(out, parents, backward)


# gradient checking ---------------------------------------------------------


def grad_errors(f, params, h=1e-5, max_entries=None, seed=0) -> list[float]:
    """Per-parameter max of |analytic - central difference| / max(1, |analytic|).

    ``f`` maps tensors (one per entry of ``params``) to a scalar tensor. With
    ``max_entries`` only that many randomly chosen coordinates per parameter
    are differenced.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    arrays = [np.array(as_tensor(p).data, dtype=np.float64) for p in params]
    tape = Tape()
    leaves = [tape.watch(a) for a in arrays]
    out = as_tensor(f(*leaves))
    if out.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise GradCheckError("f returned a non-finite value at the base point")
    analytic = tape.gradient(out, leaves)
    rng = np.random.default_rng(seed)

    def value():
        v = as_tensor(f(*[Tensor(a) for a in arrays])).data
        return float(v.reshape(()))

    errors = []
    for i, (a, ga) in enumerate(zip(arrays, analytic)):
        if not np.isfinite(ga).all():
            raise GradCheckError(f"non-finite analytic gradient for parameter {i}")
        flat, gflat = a.reshape(-1), ga.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + h
            fp = value()
            flat[j] = orig - h
            fm = value()
            flat[j] = orig
            numeric = (fp - fm) / (2 * h)
            if not np.isfinite(numeric):
                raise GradCheckError(f"non-finite finite difference for parameter {i}, entry {j}")
            worst = max(worst, abs(gflat[j] - numeric) / max(1.0, abs(gflat[j])))
        errors.append(worst)
    return errors


def grad_check(f, params, h=1e-5, max_entries=None, seed=0) -> float:
    return max(grad_errors(f, params, h, max_entries, seed), default=0.0)
