"""Dense tensors with reverse-mode automatic differentiation.

Everything the forecaster's forward pass needs is implemented here as a
differentiable operation on numpy arrays. The canonical layout is
[batch, channel, node, time], C-contiguous, so the time axis is the
fastest-varying one and the 1x3 temporal kernels read contiguously.

The autodiff graph is dynamic: each op closes over its inputs and records
a backward closure on the output. ``Tensor.backward()`` walks the graph in
reverse topological order exactly once and then releases it, so a graph
cannot be differentiated twice.

Operations fall in two performance classes:

* convolutions and the fused/head channel maps go through BLAS
  (``np.tensordot``) for speed;
* the edge/correlation ops use plain ``np.einsum`` with ``optimize=False``
  so that per-sample results are bitwise identical whether or not the
  sample is part of a larger batch.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class DetachedTensorError(RuntimeError):
    """Raised when backward() is called on a tensor with no graph."""


_debug_checks = os.environ.get("FLOWCAST_DEBUG", "") not in ("", "0")
_grad_enabled = True


def set_debug(flag: bool) -> None:
    """Enable per-op finite-value assertions (slow; for debugging)."""
    global _debug_checks
    _debug_checks = bool(flag)


def debug_enabled() -> bool:
    return _debug_checks


@contextmanager
def no_grad():
    """Context in which ops do not record backward closures."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense array plus optional gradient and autodiff linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None, op: str = "leaf"):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw array data, not another Tensor")
        if isinstance(data, (np.ndarray, np.generic)):
            # keep numpy's dtype: reductions of 0-d arrays hand back scalars
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self.op = op

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, op={self.op})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return sum_over_axis(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_over_axis(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    # -- reverse mode -------------------------------------------------------

    def backward(self) -> None:
        """Populate .grad on every reachable leaf; consumes the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise DetachedTensorError("backward() on a tensor with no gradient path")
        if self._backward_fn is None and self.op not in ("leaf", "detach"):
            raise DetachedTensorError("backward() on a consumed or detached graph")
        topo = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
        for node in topo:
            if node._backward_fn is not None:
                node._backward_fn = None
                node._parents = ()
                node.grad = None  # intermediates: free; leaves keep grads


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS; inputs of every node precede it in the result."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _finite_check(arr: np.ndarray, opname: str) -> None:
    if _debug_checks and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by op '{opname}'")


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    _finite_check(data, op)
    out = Tensor(data, op=op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary_shapes(a: Tensor, b: Tensor, opname: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not conform") from None


# -- elementwise ops ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "sub")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "mul")

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), backward, "neg")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - y * y))

    return _make(y, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    # 0.5*(tanh(x/2)+1) is overflow-free for any finite input
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _make(y, (a,), backward, "sigmoid")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        _accumulate(a, g * mask)

    return _make(np.where(mask, a.data, 0.0).astype(a.dtype, copy=False), (a,), backward, "relu")


# -- reductions ---------------------------------------------------------------


def sum_over_axis(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    return _make(np.asarray(y), (a,), backward, "sum")


def mean_over_axis(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        count = a.shape[axis]
    y = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        scaled = g / count
        if axis is not None and not keepdims:
            scaled = np.expand_dims(scaled, axis)
        _accumulate(a, np.broadcast_to(scaled, a.shape).astype(a.dtype, copy=False))

    return _make(np.asarray(y), (a,), backward, "mean")


def max_over_channel(a: Tensor, axis: int = 1) -> Tensor:
    """Max over the channel axis. Gradient routes to the argmax; ties break
    toward the lowest index (np.argmax returns the first occurrence)."""
    if a.data.ndim <= axis:
        raise ShapeError(f"max_over_channel: no axis {axis} in shape {a.shape}")
    idx = np.argmax(a.data, axis=axis)
    y = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        _accumulate(a, full)

    return _make(np.ascontiguousarray(y), (a,), backward, "max_over_channel")


def mean_over_channel(a: Tensor, axis: int = 1) -> Tensor:
    if a.data.ndim <= axis:
        raise ShapeError(f"mean_over_channel: no axis {axis} in shape {a.shape}")
    c = a.shape[axis]
    y = a.data.mean(axis=axis)

    def backward(g):
        _accumulate(a, np.repeat(np.expand_dims(g / c, axis), c, axis=axis))

    return _make(y, (a,), backward, "mean_over_channel")


# -- shape ops ----------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def transpose_last2(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.swapaxes(g, -1, -2))

    return _make(np.swapaxes(a.data, -1, -2), (a,), backward, "transpose_last2")


def take_time(a: Tensor, index: int) -> Tensor:
    """Select one index on the trailing (time) axis, dropping the axis."""
    t = a.shape[-1]
    if not -t <= index < t:
        raise ShapeError(f"take_time index {index} out of range for extent {t}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., index] = g
        _accumulate(a, full)

    return _make(np.ascontiguousarray(a.data[..., index]), (a,), backward, "take_time")


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def trace(a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace needs a square matrix, got shape {a.shape}")

    def backward(g):
        _accumulate(a, g * np.eye(a.shape[0], dtype=a.dtype))

    return _make(np.asarray(np.trace(a.data)), (a,), backward, "trace")


def channel_linear(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                   exact: bool = False) -> Tensor:
    """Map the channel axis of x [b, c, ...] through weight [d, c] (+ bias [d]).

    This is a 1x1 convolution over channels: every trailing position is
    transformed independently. With ``exact=True`` each sample is processed
    by its own BLAS call, so per-sample results are bitwise independent of
    the batch extent; the default fuses the batch into one contraction.
    """
    if x.data.ndim < 2 or weight.data.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"channel_linear: x {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"channel_linear: bias {bias.shape} incompatible with weight {weight.shape}")
    trailing = tuple(range(2, x.data.ndim))
    b, c = x.shape[:2]
    d = weight.shape[0]
    trail_shape = x.shape[2:]

    if exact:
        y = np.empty((b, d) + trail_shape, dtype=x.dtype)
        for s in range(b):
            y[s] = (weight.data @ x.data[s].reshape(c, -1)).reshape((d,) + trail_shape)
    else:
        y = np.ascontiguousarray(np.moveaxis(np.tensordot(weight.data, x.data, axes=([1], [1])), 1, 0))
    if bias is not None:
        y += bias.data.reshape((-1,) + (1,) * len(trailing))

    def backward(g):
        if exact:
            dw = np.zeros_like(weight.data)
            dx = np.empty_like(x.data)
            for s in range(b):
                gs = g[s].reshape(d, -1)
                xs = x.data[s].reshape(c, -1)
                dw += gs @ xs.T
                dx[s] = (weight.data.T @ gs).reshape((c,) + trail_shape)
            _accumulate(weight, dw)
            _accumulate(x, dx)
        else:
            axes = (0,) + trailing
            _accumulate(weight, np.tensordot(g, x.data, axes=(axes, axes)))
            _accumulate(x, np.moveaxis(np.tensordot(weight.data, g, axes=([0], [1])), 1, 0))
        if bias is not None:
            _accumulate(bias, g.sum(axis=(0,) + trailing))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(y, parents, backward, "channel_linear")


# -- node-wise convolution ------------------------------------------------------

KERNEL_T = 3
PAD_T = 1


def conv_time_length(t: int, stride: int, pad: int = PAD_T, kernel: int = KERNEL_T) -> int:
    return (t + 2 * pad - kernel) // stride + 1


def conv_nodewise(x: Tensor, kernel: Tensor, bias: Tensor, stride: int) -> Tensor:
    """1x3 temporal convolution, zero-padded by one step, no node mixing.

    x [b, c_in, n, t], kernel [c_out, c_in, 1, 3], bias [c_out]
    -> [b, c_out, n, (t + 2 - 3)//stride + 1].
    """
    if x.data.ndim != 4:
        raise ShapeError(f"conv_nodewise input must be 4-axis, got {x.shape}")
    if kernel.data.ndim != 4 or kernel.shape[2] != 1 or kernel.shape[3] != KERNEL_T:
        raise ShapeError(f"conv_nodewise kernel must be [c_out, c_in, 1, {KERNEL_T}], got {kernel.shape}")
    if kernel.shape[1] != x.shape[1]:
        raise ShapeError(f"conv_nodewise: input channels {x.shape} vs kernel {kernel.shape}")
    if bias.shape != (kernel.shape[0],):
        raise ShapeError(f"conv_nodewise: bias {bias.shape} vs kernel {kernel.shape}")
    if stride not in (1, 2):
        raise ValueError(f"conv_nodewise stride must be 1 or 2, got {stride}")

    b, c_in, n, t = x.shape
    c_out = kernel.shape[0]
    t_out = conv_time_length(t, stride)
    if t_out < 1:
        raise ShapeError(f"conv_nodewise: time extent {t} collapses under stride {stride}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (0, 0), (PAD_T, PAD_T)))
    span = stride * (t_out - 1) + 1
    taps = [xp[..., k:k + span:stride] for k in range(KERNEL_T)]

    y = np.zeros((b, c_out, n, t_out), dtype=x.dtype)
    for k, tap in enumerate(taps):
        y += np.moveaxis(np.tensordot(kernel.data[:, :, 0, k], tap, axes=([1], [1])), 1, 0)
    y += bias.data.reshape(1, c_out, 1, 1)

    def backward(g):
        dker = np.zeros_like(kernel.data)
        dxp = np.zeros_like(xp)
        for k, tap in enumerate(taps):
            dker[:, :, 0, k] = np.tensordot(g, tap, axes=([0, 2, 3], [0, 2, 3]))
            dxp[..., k:k + span:stride] += np.moveaxis(
                np.tensordot(kernel.data[:, :, 0, k], g, axes=([0], [1])), 1, 0)
        _accumulate(kernel, dker)
        _accumulate(bias, g.sum(axis=(0, 2, 3)))
        _accumulate(x, dxp[..., PAD_T:PAD_T + t])

    return _make(y, (x, kernel, bias), backward, "conv_nodewise")


# -- normalization --------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the channel axis to zero mean / unit variance, then scale+shift.

    Statistics are per (batch, node, time) position, so the op is independent
    of the time extent and never mixes nodes.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"layer_norm input must be 4-axis, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} vs channels {c}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")

    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = (x.data - mu) * inv_std
    gshape = (1, c, 1, 1)
    y = gamma.data.reshape(gshape) * xhat + beta.data.reshape(gshape)

    def backward(g):
        _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        _accumulate(beta, g.sum(axis=(0, 2, 3)))
        gh = g * gamma.data.reshape(gshape)
        m1 = gh.mean(axis=1, keepdims=True)
        m2 = (gh * xhat).mean(axis=1, keepdims=True)
        _accumulate(x, inv_std * (gh - m1 - xhat * m2))

    return _make(y, (x, gamma, beta), backward, "layer_norm")


# -- correlation / edge ops ------------------------------------------------------


def cosine_correlate(rep: Tensor, feat: Tensor, eps: float = 1e-8) -> Tensor:
    """Cosine similarity over channels between representatives and features.

    rep [b, c, n], feat [b, c, n, l] -> S [b, n, n, l] with
    S[b, i, j, t] = cos(rep[b, :, i], feat[b, :, j, t]). Entries where either
    vector's norm falls below eps are defined as 0 (no relation).
    """
    if rep.data.ndim != 3 or feat.data.ndim != 4:
        raise ShapeError(f"cosine_correlate: rep {rep.shape}, feat {feat.shape}")
    if rep.shape[:2] != feat.shape[:2]:
        raise ShapeError(f"cosine_correlate: channel mismatch {rep.shape} vs {feat.shape}")

    b, c, n = rep.shape
    _, _, m, l = feat.shape
    dots = np.empty((b, n, m, l), dtype=rep.dtype)
    for s_ in range(b):
        dots[s_] = (rep.data[s_].T @ feat.data[s_].reshape(c, m * l)).reshape(n, m, l)
    rep_norm = np.sqrt(np.einsum("bci,bci->bi", rep.data, rep.data, optimize=False))
    feat_norm = np.sqrt(np.einsum("bcjt,bcjt->bjt", feat.data, feat.data, optimize=False))
    valid = (rep_norm[:, :, None, None] > eps) & (feat_norm[:, None, :, :] > eps)
    denom = np.where(valid, rep_norm[:, :, None, None] * feat_norm[:, None, :, :], 1.0)
    # rounding can push |cos| a few ulp past 1; the bound is part of the contract
    s = np.clip(np.where(valid, dots / denom, 0.0), -1.0, 1.0).astype(rep.dtype)

    def backward(g):
        gv = np.where(valid, g / denom, 0.0).astype(rep.dtype)
        drep = np.empty_like(rep.data)
        dfeat = np.empty_like(feat.data)
        for s_ in range(b):
            gs2 = gv[s_].reshape(n, m * l)
            drep[s_] = feat.data[s_].reshape(c, m * l) @ gs2.T
            dfeat[s_] = (rep.data[s_] @ gs2).reshape(c, m, l)
        # norm terms: dS/d||rep|| = -S/||rep||, dS/d||feat|| = -S/||feat||
        gs = np.where(valid, g * s, 0.0)
        rep_w = gs.sum(axis=(2, 3)) / np.where(rep_norm > eps, rep_norm**2, 1.0)
        feat_w = gs.sum(axis=1) / np.where(feat_norm > eps, feat_norm**2, 1.0)
        drep -= rep.data * rep_w[:, None, :]
        dfeat -= feat.data * feat_w[:, None, :, :]
        _accumulate(rep, drep)
        _accumulate(feat, dfeat)

    return _make(s, (rep, feat), backward, "cosine_correlate")


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """Cosine of two 1-D tensors; 0 when either norm is below eps."""
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape}")
    c = a.shape[0]
    s = cosine_correlate(reshape(a, (1, c, 1)), reshape(b, (1, c, 1, 1)), eps=eps)
    return reshape(s, ())


def relation_sum(corr: Tensor, feat: Tensor) -> Tensor:
    """Time-summed, correlation-weighted features.

    corr [b, n_tgt, n_src, l], feat [b, c, n_src, l] -> R [b, c, n_src, n_tgt]
    with R[b, c, i, k] = sum_t corr[b, k, i, t] * feat[b, c, i, t].
    """
    if corr.data.ndim != 4 or feat.data.ndim != 4:
        raise ShapeError(f"relation_sum: corr {corr.shape}, feat {feat.shape}")
    if corr.shape[3] != feat.shape[3] or corr.shape[2] != feat.shape[2]:
        raise ShapeError(f"relation_sum: time/node extents differ, corr {corr.shape} vs feat {feat.shape}")

    b, c = feat.shape[:2]
    n, l = feat.shape[2], feat.shape[3]
    k = corr.shape[1]
    r = np.empty((b, c, n, k), dtype=feat.dtype)
    for s in range(b):
        # per source node i: feat[:, i, :] [c, l] @ corr[:, i, :].T [l, k]
        ri = np.matmul(feat.data[s].transpose(1, 0, 2), corr.data[s].transpose(1, 2, 0))
        r[s] = ri.transpose(1, 0, 2)

    def backward(g):
        dcorr = np.empty_like(corr.data)
        dfeat = np.empty_like(feat.data)
        for s in range(b):
            gi = g[s].transpose(1, 0, 2)                      # [i, c, k]
            fi = feat.data[s].transpose(1, 0, 2)              # [i, c, l]
            ci = corr.data[s].transpose(1, 0, 2)              # [i, k, l]
            dcorr[s] = np.matmul(gi.transpose(0, 2, 1), fi).transpose(1, 0, 2)
            dfeat[s] = np.matmul(gi, ci).transpose(1, 0, 2)
        _accumulate(corr, dcorr)
        _accumulate(feat, dfeat)

    return _make(r, (corr, feat), backward, "relation_sum")


def neighbor_mix(rel: Tensor, adj: Tensor) -> Tensor:
    """Aggregate source-node features with per-target edge weights.

    rel [b, c, n_src, n_tgt], adj [b, n_tgt, n_src] -> [b, c, n_tgt]
    with out[b, c, k] = sum_i rel[b, c, i, k] * adj[b, k, i].
    """
    if rel.data.ndim != 4 or adj.data.ndim != 3:
        raise ShapeError(f"neighbor_mix: rel {rel.shape}, adj {adj.shape}")
    if rel.shape[2] != adj.shape[2] or rel.shape[3] != adj.shape[1]:
        raise ShapeError(f"neighbor_mix: node extents differ, rel {rel.shape} vs adj {adj.shape}")

    b, c = rel.shape[:2]
    n_src, n_tgt = rel.shape[2], rel.shape[3]
    y = np.empty((b, c, n_tgt), dtype=rel.dtype)
    for s in range(b):
        # per target k: rel[:, :, k] [c, i] @ adj[k, :] [i]
        yk = np.matmul(rel.data[s].transpose(2, 0, 1), adj.data[s][:, :, None])
        y[s] = yk[:, :, 0].T

    def backward(g):
        drel = np.empty_like(rel.data)
        dadj = np.empty_like(adj.data)
        for s in range(b):
            gk = g[s].T[:, :, None]                            # [k, c, 1]
            drel[s] = np.matmul(gk, adj.data[s][:, None, :]).transpose(1, 2, 0)
            dadj[s] = np.matmul(rel.data[s].transpose(2, 1, 0), gk)[:, :, 0]
        _accumulate(rel, drel)
        _accumulate(adj, dadj)

    return _make(y, (rel, adj), backward, "neighbor_mix")


# -- loss kernels ----------------------------------------------------------------


def huber(pred: Tensor, target: Tensor, delta: float = 1.0) -> Tensor:
    """Mean elementwise Huber value: quadratic below delta, linear above."""
    if pred.shape != target.shape:
        raise ShapeError(f"huber: shapes {pred.shape} and {target.shape} differ")
    if delta <= 0:
        raise ValueError("huber delta must be positive")
    r = pred.data - target.data
    absr = np.abs(r)
    quad = absr < delta
    vals = np.where(quad, 0.5 * r * r, delta * absr - 0.5 * delta * delta)
    y = np.asarray(vals.mean(dtype=pred.dtype))
    count = r.size

    def backward(g):
        d = g * np.where(quad, r, delta * np.sign(r)) / count
        _accumulate(pred, d.astype(pred.dtype, copy=False))
        _accumulate(target, (-d).astype(target.dtype, copy=False))

    return _make(y, (pred, target), backward, "huber")
