"""Minimal reverse-mode autodiff engine on numpy arrays.

Everything downstream (view synthesis, losses, the attention nets) runs on
this Tensor. Design choices, in short: float32 by default with float64
reserved for finite-difference checks, closure-based backward functions,
gradients accumulated into leaf ``.grad`` buffers only, and deterministic
subgradients at non-smooth points (0 at abs(0) and clamp edges,
first-encountered winner for pooling/min ties).
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """Operand values are outside the operation's domain (e.g. div by zero)."""


class EmptySelectionError(ValueError):
    """A masked reduction selected zero elements."""


class GraphError(RuntimeError):
    """Misuse of the gradient graph (e.g. backward from a non-scalar)."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(np.float32)


class Tensor:
    """N-d float array plus an optional position in a gradient graph.

    Tensors are immutable after creation except for the ``grad`` buffer.
    ``grad`` is populated (accumulated additively) on requires_grad leaves
    by ``backward`` on a scalar root.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def is_leaf(self) -> bool:
        return not self._parents

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        src = self.dtype

        def bw(g):
            return (g.astype(src, copy=False),)

        return _record(self.data.astype(dtype), (self,), bw)

    # ---- backward ------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise GraphError("backward requires a scalar root")
        # Iterative topological order; conv-net graphs exceed the recursion limit.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node.is_leaf():
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad = node.grad + g
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else acc + pg

    # ---- operator sugar --------------------------------------------------------

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

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float32))


def _record(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---- elementwise family ---------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        data = a.data - b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(data, (a, b), bw)


def div(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if np.any(b.data == 0):
        raise DomainError("division by zero element")
    try:
        data = a.data / b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (-g,)

    return _record(-a.data, (a,), bw)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    data = a.data**p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return _record(data, (a,), bw)


def absolute(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (g * np.sign(a.data),)  # sign(0) = 0: subgradient 0 at the kink

    return _record(np.abs(a.data), (a,), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bw(g):
        return (g * data,)

    return _record(data, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log requires positive elements")

    def bw(g):
        return (g / a.data,)

    return _record(np.log(a.data), (a,), bw)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt requires nonnegative elements")
    data = np.sqrt(a.data)

    def bw(g):
        return (g * 0.5 / data,)

    return _record(data, (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bw(g):
        return (g * data * (1.0 - data),)

    return _record(data, (a,), bw)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - data * data),)

    return _record(data, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        return (g * mask,)

    return _record(a.data * mask, (a,), bw)


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data > lo) & (a.data < hi)  # subgradient 0 on the boundary

    def bw(g):
        return (g * inside,)

    return _record(np.clip(a.data, lo, hi), (a,), bw)


def minimum(a, b) -> Tensor:
    """Pointwise min; on ties the first argument wins the gradient."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    take_a = a.data <= b.data

    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return _record(np.minimum(a.data, b.data), (a, b), bw)


def maximum(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    take_a = a.data >= b.data

    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return _record(np.maximum(a.data, b.data), (a, b), bw)


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select by a constant boolean mask; gradient flows to the taken branch."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    cond = np.asarray(cond, dtype=bool)

    def bw(g):
        return _unbroadcast(g * cond, a.shape), _unbroadcast(g * ~cond, b.shape)

    return _record(np.where(cond, a.data, b.data), (a, b), bw)


# ---- reductions ----------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        return (np.ascontiguousarray(_expand_reduced(g, a.shape, axis, keepdims)),)

    return _record(data, (a,), bw)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(data.size, 1)

    def bw(g):
        return (np.ascontiguousarray(_expand_reduced(g, a.shape, axis, keepdims)) / count,)

    return _record(data, (a,), bw)


def _axis_extreme(a, axis: int, keepdims: bool, argf, f):
    a = as_tensor(a)
    if a.data.shape[axis] == 0:
        raise ShapeError("reduction over empty axis")
    idx = argf(a.data, axis=axis)  # first occurrence wins ties
    data = f(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        gx = np.zeros_like(a.data)
        gi = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, np.expand_dims(idx, axis), gi, axis=axis)
        return (gx,)

    return _record(data, (a,), bw)


def tmax(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routed to the first max on ties."""
    return _axis_extreme(a, axis, keepdims, np.argmax, np.max)


def tmin(a, axis: int, keepdims: bool = False) -> Tensor:
    return _axis_extreme(a, axis, keepdims, np.argmin, np.min)


def pointwise_min(maps: Sequence[Tensor]) -> Tensor:
    """Per-pixel minimum over a set of same-shape maps.

    Gradient reaches only the per-pixel winner; ties go to the earliest map.
    """
    if len(maps) == 0:
        raise EmptySelectionError("pointwise_min over an empty set")
    out = maps[0]
    for m in maps[1:]:
        out = minimum(out, m)
    return out


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of x over the True elements of a constant mask."""
    mask = np.asarray(mask)
    total = float(mask.sum())
    if total == 0:
        raise EmptySelectionError("masked_mean over an empty mask")
    weights = mask.astype(x.dtype)
    return tsum(mul(x, Tensor(weights))) / total


# ---- shape ops -----------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape

    def bw(g):
        return (g.reshape(old),)

    return _record(a.data.reshape(shape), (a,), bw)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)

    def bw(g):
        return (g.transpose(inv),)

    return _record(a.data.transpose(axes), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record(data, tuple(tensors), bw)


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    data = a.data[key]

    def bw(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _record(np.ascontiguousarray(data), (a,), bw)


def take(a, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along one axis with an integer index array (repeats allowed)."""
    a = as_tensor(a)
    indices = np.asarray(indices)
    data = np.take(a.data, indices, axis=axis)

    def bw(g):
        gx = np.zeros_like(a.data)
        key = [slice(None)] * a.ndim
        key[axis] = indices
        np.add.at(gx, tuple(key), g)
        return (gx,)

    return _record(data, (a,), bw)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _record(data, (a,), bw)


# ---- linear algebra --------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        data = a.data @ b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def bw(g):
        if b.ndim == 1 and a.ndim == 1:
            return g * b.data, g * a.data
        if b.ndim == 1:
            ga = np.expand_dims(g, -1) * b.data
            gb = np.tensordot(g, a.data, axes=(range(g.ndim), range(g.ndim)))
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
        if a.ndim == 1:
            ga = (np.expand_dims(g, -2) * b.data).sum(-1)
            gb = np.expand_dims(a.data, -1) * np.expand_dims(g, -2)
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(data, (a, b), bw)


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """x[..., in] @ w[out, in]^T (+ bias[out])."""
    out = matmul(x, transpose(w))
    if bias is not None:
        out = add(out, bias)
    return out


def solve(a: Tensor, b: Tensor) -> Tensor:
    """Solve the square system a @ x = b; differentiable in both operands."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        data = np.linalg.solve(a.data, b.data)
    except np.linalg.LinAlgError as e:
        raise DomainError(f"singular system: {e}") from None

    def bw(g):
        gb = np.linalg.solve(a.data.T, g)
        x = data if data.ndim > 1 else data[:, None]
        gbm = gb if gb.ndim > 1 else gb[:, None]
        ga = -gbm @ x.T
        return ga, gb

    return _record(data, (a, b), bw)


# ---- conv / pooling / resampling ---------------------------------------------------


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv2d(x: Tensor, w: Tensor, stride=1, padding=0, dilation=1, groups: int = 1) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with w[Co,C/groups,kh,kw]."""
    x = as_tensor(x)
    w = as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    dh, dw = _pair(dilation)
    n, c, h, wd = x.shape
    co, cg, kh, kw = w.shape
    if cg * groups != c or co % groups != 0:
        raise ShapeError(f"channel/group mismatch: input {c} channels, kernel {cg}x{groups} groups")
    eff_kh = dh * (kh - 1) + 1
    eff_kw = dw * (kw - 1) + 1
    ho = (h + 2 * ph - eff_kh) // sh + 1
    wo = (wd + 2 * pw - eff_kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError("kernel does not fit the padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    st = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(st[0], st[1], st[2] * dh, st[3] * dw, st[2] * sh, st[3] * sw),
        writeable=False,
    )
    cog = co // groups
    vg = view.reshape(n, groups, cg, kh, kw, ho, wo)
    wg = w.data.reshape(groups, cog, cg, kh, kw)
    out = np.einsum("ngcuvhw,gocuv->ngohw", vg, wg, optimize=True)
    out = np.ascontiguousarray(out.reshape(n, co, ho, wo), dtype=x.dtype)

    def bw(g):
        gg = g.reshape(n, groups, cog, ho, wo)
        gw = np.einsum("ngohw,ngcuvhw->gocuv", gg, vg, optimize=True)
        gxp = np.zeros_like(xp)
        gxg = gxp.reshape(n, groups, cg, *gxp.shape[2:])
        for u in range(kh):
            iu = u * dh
            for v in range(kw):
                iv = v * dw
                contrib = np.einsum("ngohw,goc->ngchw", gg, wg[:, :, :, u, v], optimize=True)
                gxg[:, :, :, iu : iu + ho * sh : sh, iv : iv + wo * sw : sw] += contrib
        gx = gxp[:, :, ph : ph + h, pw : pw + wd] if (ph or pw) else gxp
        return np.ascontiguousarray(gx), gw.reshape(co, cg, kh, kw).astype(w.dtype, copy=False)

    return _record(out, (x, w), bw)


def _pool_view(x: np.ndarray, kh, kw, sh, sw):
    n, c, h, w = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    if ho <= 0 or wo <= 0 or kh > h or kw > w:
        raise ShapeError("pooling window larger than input")
    st = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, ho, wo),
        strides=(st[0], st[1], st[2], st[3], st[2] * sh, st[3] * sw),
        writeable=False,
    )
    return view, ho, wo


def avg_pool2d(x: Tensor, kernel, stride=None) -> Tensor:
    x = as_tensor(x)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    view, ho, wo = _pool_view(x.data, kh, kw, sh, sw)
    out = view.mean(axis=(2, 3))
    n, c, h, w = x.shape

    def bw(g):
        gx = np.zeros_like(x.data)
        gshare = g / (kh * kw)
        for u in range(kh):
            for v in range(kw):
                gx[:, :, u : u + ho * sh : sh, v : v + wo * sw : sw] += gshare
        return (gx,)

    return _record(np.ascontiguousarray(out), (x,), bw)


def max_pool2d(x: Tensor, kernel, stride=None) -> Tensor:
    """Max pooling; ties route gradient to the first element in scan order."""
    x = as_tensor(x)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    view, ho, wo = _pool_view(x.data, kh, kw, sh, sw)
    n, c = x.shape[:2]
    flat = view.reshape(n, c, kh * kw, ho, wo)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def bw(g):
        gx = np.zeros_like(x.data)
        iu = idx // kw
        iv = idx % kw
        oy, ox = np.meshgrid(np.arange(ho), np.arange(wo), indexing="ij")
        rows = iu + oy * sh
        cols = iv + ox * sw
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(gx, (ni, ci, rows, cols), g)
        return (gx,)

    return _record(np.ascontiguousarray(out), (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes of x[N,C,H,W], keeping them as size 1."""
    return tmean(x, axis=(2, 3), keepdims=True)


def channel_mean(x: Tensor) -> Tensor:
    return tmean(x, axis=1, keepdims=True)


def channel_max(x: Tensor) -> Tensor:
    return tmax(x, axis=1, keepdims=True)


def upsample_nearest_2x(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("upsample_nearest_2x expects N,C,H,W")
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def bw(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _record(out, (x,), bw)


def _bilinear_weights(coord: np.ndarray, extent: int):
    """Clamp-to-border interpolation setup along one axis."""
    c = np.clip(coord, 0.0, extent - 1.0)
    i0 = np.clip(np.floor(c), 0, extent - 2).astype(np.int64)
    frac = c - i0
    inside = (coord >= 0.0) & (coord <= extent - 1.0)
    return i0, frac, inside


def bilinear_sample(src: Tensor, coords: Tensor) -> Tensor:
    """Sample src at fractional pixel coords with border clamping.

    src is [C,H,W] or [N,C,H,W]; coords is [H',W',2] or [N,H',W',2] with
    (u, v) = (x along width, y along height) in pixel units. Differentiable
    in both src values and coords; out-of-range coords clamp to the border
    and contribute zero coordinate gradient there.
    """
    src = as_tensor(src)
    coords = as_tensor(coords)
    squeeze = src.ndim == 3
    sdata = src.data[None] if squeeze else src.data
    cdata = coords.data[None] if coords.ndim == 3 else coords.data
    if sdata.ndim != 4 or cdata.ndim != 4 or cdata.shape[-1] != 2:
        raise ShapeError("bilinear_sample expects [C,H,W]/[N,C,H,W] src and [...,2] coords")
    n, c, h, w = sdata.shape
    _, ho, wo, _ = cdata.shape
    xs = cdata[..., 0]
    ys = cdata[..., 1]
    x0, fx, in_x = _bilinear_weights(xs, w)
    y0, fy, in_y = _bilinear_weights(ys, h)

    flat = sdata.reshape(n, c, h * w)
    base = y0 * w + x0  # (N,Ho,Wo)

    def gather(off):
        idx = (base + off).reshape(n, 1, ho * wo)
        return np.take_along_axis(flat, np.broadcast_to(idx, (n, c, ho * wo)), axis=2).reshape(n, c, ho, wo)

    v00 = gather(0)
    v01 = gather(1)
    v10 = gather(w)
    v11 = gather(w + 1)
    fxb = fx[:, None]
    fyb = fy[:, None]
    out = (
        v00 * (1 - fyb) * (1 - fxb)
        + v01 * (1 - fyb) * fxb
        + v10 * fyb * (1 - fxb)
        + v11 * fyb * fxb
    ).astype(sdata.dtype)

    def bw(g):
        gsrc = None
        gcoords = None
        if src.requires_grad:
            gflat = np.zeros((n, c, h * w), dtype=g.dtype)
            for off, wgt in ((0, (1 - fyb) * (1 - fxb)), (1, (1 - fyb) * fxb), (w, fyb * (1 - fxb)), (w + 1, fyb * fxb)):
                idx = np.broadcast_to((base + off).reshape(n, 1, ho * wo), (n, c, ho * wo))
                np.add.at(gflat, (np.arange(n)[:, None, None], np.arange(c)[None, :, None], idx), (g * wgt).reshape(n, c, ho * wo))
            gsrc = gflat.reshape(sdata.shape)
            if squeeze:
                gsrc = gsrc[0]
        if coords.requires_grad:
            dx = ((1 - fyb) * (v01 - v00) + fyb * (v11 - v10)) * in_x[:, None]
            dy = ((1 - fxb) * (v10 - v00) + fxb * (v11 - v01)) * in_y[:, None]
            gx = (g * dx).sum(axis=1)
            gy = (g * dy).sum(axis=1)
            gcoords = np.stack([gx, gy], axis=-1)
            if coords.ndim == 3:
                gcoords = gcoords[0]
        return gsrc, gcoords

    out = out[0] if squeeze else out
    return _record(out, (src, coords), bw)


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of x[N,C,H,W] via pixel-center coordinate mapping."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if (h, w) == (out_h, out_w):
        return x
    us = (np.arange(out_w, dtype=x.dtype) + 0.5) * (w / out_w) - 0.5
    vs = (np.arange(out_h, dtype=x.dtype) + 0.5) * (h / out_h) - 0.5
    uu, vv = np.meshgrid(us, vs)
    grid = Tensor(np.stack([uu, vv], axis=-1))
    grid_n = Tensor(np.broadcast_to(grid.data[None], (n, out_h, out_w, 2)).copy())
    return bilinear_sample(x, grid_n)


def pad_reflect2d(x: Tensor, pad: int) -> Tensor:
    """Reflection-pad the two trailing axes of x[N,C,H,W]."""
    h, w = x.shape[-2], x.shape[-1]
    idx_h = np.concatenate([np.arange(pad, 0, -1), np.arange(h), np.arange(h - 2, h - 2 - pad, -1)])
    idx_w = np.concatenate([np.arange(pad, 0, -1), np.arange(w), np.arange(w - 2, w - 2 - pad, -1)])
    return take(take(x, idx_h, axis=-2), idx_w, axis=-1)


# ---- gradient checking ---------------------------------------------------------


def gradient_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between backward grads and central differences.

    Requires float64 input; finite differences are meaningless at float32.
    """
    if x.dtype != np.float64:
        raise DomainError("gradient_check requires a float64 tensor")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise GraphError("gradient_check requires a scalar-valued function")
    out.backward()
    analytic = leaf.grad.reshape(-1).copy()

    base = x.data.copy()
    numeric = np.empty(base.size, dtype=np.float64)
    flat = base.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(Tensor(base)).data)
            flat[i] = orig - eps
            fm = float(f(Tensor(base)).data)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---- tensor serialization (flat binary, magic "SDTN") ----------------------------

_SDTN_MAGIC = b"SDTN"
_SDTN_VERSION = 1


def save_tensor(path, t) -> None:
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    with open(path, "wb") as fh:
        _write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return _read_tensor(fh)


def _write_tensor(fh, arr: np.ndarray) -> None:
    fh.write(_SDTN_MAGIC)
    fh.write(struct.pack("<II", _SDTN_VERSION, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<" + arr.dtype.str[1:]).tobytes())


def _read_tensor(fh, itemsize: int | None = None) -> np.ndarray:
    """Read one tensor blob. Standalone files infer 32/64-bit width from the
    payload length; blobs inside a concatenated stream must pass itemsize."""
    magic = fh.read(4)
    if magic != _SDTN_MAGIC:
        raise ValueError(f"bad tensor file magic: {magic!r}")
    version, rank = struct.unpack("<II", fh.read(8))
    if version != _SDTN_VERSION:
        raise ValueError(f"unsupported tensor file version {version}")
    shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
    count = int(np.prod(shape)) if rank else 1
    if itemsize is None:
        payload = fh.read(8 * count)
        itemsize = 8 if len(payload) == 8 * count else 4
    else:
        payload = fh.read(itemsize * count)
    if len(payload) < itemsize * count:
        raise ValueError("truncated tensor file")
    arr = np.frombuffer(payload[: itemsize * count], dtype=f"<f{itemsize}", count=count)
    return arr.reshape(shape).copy()
