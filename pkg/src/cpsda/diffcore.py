"""Minimal reverse-mode automatic differentiation on numpy arrays.

The operator set is closed and deliberately small: exactly what the two
encoders, the two heads, and the loss terms need. Training runs in single
precision; gradient checks run the same graphs in double precision.

A Tensor wraps an ndarray and remembers how it was produced. backward()
walks the recorded graph once in reverse topological order, accumulating
gradients additively across fan-out.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NonScalarLoss, ShapeMismatch

_SQRT_GUARD = 1e-12


class Tensor:
    """An ndarray plus the graph edge that produced it.

    requires_grad propagates from parents; grad is populated by backward()
    and holds an array of the same shape as data.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], tuple] | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def param(data) -> Tensor:
    """A trainable leaf."""
    return Tensor(np.asarray(data), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype)
    return Tensor(arr, requires_grad=False)


def _node(data, parents: Sequence[Tensor], backward) -> Tensor:
    # numpy scalars from 0-d reductions keep their dtype this way
    data = np.asarray(data)
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, requires_grad=False)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


# --- arithmetic ---

def add(x: Tensor, y: Tensor) -> Tensor:
    _check(x.shape == y.shape, f"add: {x.shape} vs {y.shape}")
    return _node(x.data + y.data, (x, y), lambda g: (g, g))


def sub(x: Tensor, y: Tensor) -> Tensor:
    _check(x.shape == y.shape, f"sub: {x.shape} vs {y.shape}")
    return _node(x.data - y.data, (x, y), lambda g: (g, -g))


def mul(x: Tensor, y: Tensor) -> Tensor:
    _check(x.shape == y.shape, f"mul: {x.shape} vs {y.shape}")
    return _node(x.data * y.data, (x, y), lambda g: (g * y.data, g * x.data))


def div(x: Tensor, y: Tensor) -> Tensor:
    _check(x.shape == y.shape, f"div: {x.shape} vs {y.shape}")
    out = x.data / y.data
    return _node(out, (x, y), lambda g: (g / y.data, -g * out / y.data))


def neg(x: Tensor) -> Tensor:
    return _node(-x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(x.data + c, (x,), lambda g: (g,))


# --- nonlinearities ---

def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return _node(out, (x,), lambda g: (g * (x.data > 0),))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def log(x: Tensor) -> Tensor:
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    # guard keeps the zero-distance subgradient finite
    return _node(out, (x,), lambda g: (g * 0.5 / np.maximum(out, _SQRT_GUARD),))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)
    return _node(out, (x,), lambda g: (g * inside,))


# --- reductions and reshapes ---

def sum_all(x: Tensor) -> Tensor:
    return _node(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                 lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return _node(np.asarray(x.data.mean(), dtype=x.dtype), (x,),
                 lambda g: ((np.broadcast_to(g, x.shape) / n).astype(x.dtype, copy=True),))


def rowsum(x: Tensor) -> Tensor:
    """Sum over the last axis."""
    return _node(x.data.sum(axis=-1), (x,),
                 lambda g: (np.repeat(g[..., None], x.shape[-1], axis=-1).astype(x.dtype),))


def mean_pool_time(x: Tensor) -> Tensor:
    """(B, L, C) -> (B, C), mean over the time axis."""
    _check(x.data.ndim == 3, f"mean_pool_time expects (B, L, C), got {x.shape}")
    length = x.shape[1]
    return _node(x.data.mean(axis=1), (x,),
                 lambda g: (np.repeat(g[:, None, :], length, axis=1) / length,))


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(x.data[idx], (x,), backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    _check(len(parts) >= 1, "concat_rows needs at least one part")
    sizes = [p.shape[0] for p in parts]

    def backward(g):
        grads = []
        offset = 0
        for size in sizes:
            grads.append(g[offset:offset + size])
            offset += size
        return tuple(grads)

    return _node(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward)


# --- model layers ---

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    _check(x.data.ndim == 2, f"dense expects (B, D), got {x.shape}")
    _check(x.shape[1] == w.shape[0],
           f"dense: input width {x.shape[1]} vs weight rows {w.shape[0]}")
    _check(b.shape == (w.shape[1],), f"dense: bias {b.shape} vs {w.shape[1]}")

    def backward(g):
        return (g @ w.data.T, x.data.T @ g, g.sum(axis=0))

    return _node(x.data @ w.data + b.data, (x, w, b), backward)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 1) -> Tensor:
    """Convolution over the time axis of (B, L, C_in) windows.

    kernels: (K, C_in, C_out). Output length (L + 2*padding - K)//stride + 1.
    """
    _check(x.data.ndim == 3, f"conv1d expects (B, L, C), got {x.shape}")
    k, c_in, c_out = kernels.shape
    _check(x.shape[2] == c_in,
           f"conv1d: input channels {x.shape[2]} vs kernel channels {c_in}")
    _check(bias.shape == (c_out,), f"conv1d: bias {bias.shape} vs {c_out}")
    b, length, _ = x.shape
    l_out = (length + 2 * padding - k) // stride + 1
    _check(l_out >= 1, f"conv1d: window length {length} too short for kernel {k}")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0))) if padding else x.data
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)[:, ::stride]
    cols = cols[:, :l_out]  # (B, L_out, C_in, K)
    out = np.tensordot(cols, kernels.data, axes=([2, 3], [1, 0])) + bias.data

    def backward(g):
        gk = np.tensordot(cols, g, axes=([0, 1], [0, 1]))  # (C_in, K, C_out)
        gk = gk.transpose(1, 0, 2)
        gb = g.sum(axis=(0, 1))
        gxp = np.zeros_like(xp)
        for kk in range(k):
            gxp[:, kk:kk + l_out * stride:stride] += g @ kernels.data[kk].T
        gx = gxp[:, padding:padding + length] if padding else gxp
        return (gx, gk, gb)

    return _node(out, (x, kernels, bias), backward)


def grl(x: Tensor, lambda_grl: float) -> Tensor:
    """Gradient reversal: forward is the identity (bitwise), backward emits
    -lambda_grl times the upstream gradient."""
    lam = float(lambda_grl)
    return _node(x.data, (x,), lambda g: (-lam * g,))


def batch_mean_var_norm(x: Tensor, gamma: Tensor, beta: Tensor,
                        running_mean: np.ndarray, running_var: np.ndarray,
                        training: bool, momentum: float = 0.1,
                        eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over all axes but the last.

    Training uses batch statistics and updates the running buffers in place;
    eval uses the running buffers.
    """
    c = x.shape[-1]
    _check(gamma.shape == (c,) and beta.shape == (c,),
           f"norm: affine shapes {gamma.shape}/{beta.shape} vs channels {c}")
    axes = tuple(range(x.data.ndim - 1))
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data
    n = x.data.size // c

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * gamma.data
        if training:
            gx = (inv_std / n) * (n * gxhat - gxhat.sum(axis=axes)
                                  - xhat * (gxhat * xhat).sum(axis=axes))
        else:
            gx = gxhat * inv_std
        return (gx, ggamma, gbeta)

    return _node(out, (x, gamma, beta), backward)


# --- reverse pass ---

def _topo(loss: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss.

    Gradients are fresh per call: every tensor in the graph is zeroed before
    accumulation, so repeated backward calls do not compound.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo(loss)
    for node in order:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad:
                parent.grad += g.reshape(parent.data.shape)


GRADCHECK_ATOL = 1e-10


def _max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                   atol: float) -> float:
    """|a - n| / max(|a|, |n|, 1e-8) per coordinate, with absolute
    disagreements below atol treated as exact: central differences of a
    loss of order one carry ~1e-11 of cancellation noise, which would
    otherwise dominate coordinates whose true gradient is zero (for
    example, distance-only losses are exactly invariant to bias shifts)."""
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.where(diff > atol, diff / denom, 0.0)
    return float(rel.max()) if rel.size else 0.0


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               eps: float = 1e-5,
               fd_scale: Callable[[Tensor], float] | None = None,
               atol: float = GRADCHECK_ATOL) -> float:
    """Max relative error between reverse-mode and central finite differences.

    f rebuilds its graph from the current parameter data on every call and
    returns a scalar Tensor. fd_scale(param), when given, multiplies that
    parameter's numeric gradient before comparison; this lets a caller check
    paths through the gradient reversal against the effective objective.
    Relative error is |a - n| / max(|a|, |n|, 1e-8) per coordinate.
    """
    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    analytic = [np.array(p.grad, copy=True) if p.grad is not None
                else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        mult = 1.0 if fd_scale is None else float(fd_scale(p))
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * eps)
        numeric *= mult
        worst = max(worst, _max_rel_error(a.reshape(-1), numeric, atol))
    return worst


def grad_check_sum(terms: Sequence[tuple[Callable[[], Tensor],
                                         Callable[[Tensor], float]]],
                   params: Sequence[Tensor], eps: float = 1e-5,
                   atol: float = GRADCHECK_ATOL) -> float:
    """grad_check for an objective that backpropagates as a sum of terms
    whose finite-difference contributions carry per-parameter scales.

    The analytic gradient comes from one backward pass over the summed
    graph; the numeric gradient is the per-term scaled finite difference,
    summed. Needed because a gradient reversal makes the backward pass the
    gradient of an effective objective that differs per parameter group.
    """
    for p in params:
        p.grad = None
    total = None
    for f, _ in terms:
        part = f()
        total = part if total is None else add(total, part)
    backward(total)
    analytic = [np.array(p.grad, copy=True) if p.grad is not None
                else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for f, scale_fn in terms:
            mult = float(scale_fn(p))
            if mult == 0.0:
                continue
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(f().data)
                flat[i] = orig - eps
                lo = float(f().data)
                flat[i] = orig
                numeric[i] += mult * (hi - lo) / (2.0 * eps)
        worst = max(worst, _max_rel_error(a.reshape(-1), numeric, atol))
    return worst
