"""Minimal reverse-mode automatic differentiation over numpy arrays.

Tensors wrap an ndarray plus an optional gradient; ops build a graph of
parent links and per-node backward closures, and ``Tensor.backward()`` walks
the graph in reverse topological order. Supported shapes are whatever numpy
handles for each op (elementwise ops broadcast; matmul is strictly 2D).
Gradients accumulate, so two losses backpropagated before an optimizer step
sum their contributions; callers zero grads between steps.

No GPU, no graph rewriting. Training runs in float32; gradient checking
clones parameters to float64 for finite-difference headroom.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording (target computation, action selection, FD probes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast to produce it."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward requires a scalar output")
        # Iterative reverse topological order over the recorded graph.
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
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        t = Tensor(data, requires_grad=True)
        t._parents = tuple(p for p in parents)
        t._backward = backward
        return t
    return Tensor(data)


# -- elementwise -------------------------------------------------------------


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # Stable in both tails; evaluates exp on -|x| only.
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(out, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    e = float(exponent)
    out = a.data**e

    def backward(g):
        a._accumulate(g * e * a.data ** (e - 1.0))

    return _make(out, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out)

    return _make(out, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(out, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - out * out))

    return _make(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid_np(a.data).astype(a.data.dtype, copy=False)

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(np.array(0.0, dtype=a.data.dtype), a.data)

    def backward(g):
        a._accumulate(g * _sigmoid_np(a.data))

    return _make(out, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0).astype(a.data.dtype, copy=False)

    def backward(g):
        a._accumulate(g * (a.data > 0))

    return _make(out, (a,), backward)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    out = np.where(a.data > 0, a.data, slope * a.data)

    def backward(g):
        a._accumulate(g * np.where(a.data > 0, 1.0, slope))

    return _make(out, (a,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Hard clamp; gradient passes only through the in-range region."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)

    def backward(g):
        a._accumulate(g * ((a.data > lo) & (a.data < hi)))

    return _make(out, (a,), backward)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * take_a)
        if b.requires_grad:
            b._accumulate(g * ~take_a)

    return _make(out, (a, b), backward)


# -- reductions / shape ops ---------------------------------------------------


def sum_(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _make(out, (a,), backward)


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2D operands only")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out, (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out, (a,), backward)


def concat(parts, axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    widths = [p.data.shape[axis] for p in parts]

    def backward(g):
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + w)
                p._accumulate(g[tuple(idx)])
            offset += w

    return _make(out, tuple(parts), backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a._accumulate(full)

    return _make(out, (a,), backward)


# -- 1D convolution -----------------------------------------------------------


def conv1d(x, w, b=None, stride: int = 1) -> Tensor:
    """Valid cross-correlation. x: (B, C_in, L); w: (C_out, C_in, K); b: (C_out,)."""
    x, w = as_tensor(x), as_tensor(w)
    bt = as_tensor(b) if b is not None else None
    batch, c_in, length = x.data.shape
    c_out, c_in_w, k = w.data.shape
    if c_in != c_in_w:
        raise ValueError("conv1d channel mismatch")
    if length < k:
        raise ValueError("conv1d input shorter than kernel")
    l_out = (length - k) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=2)[:, :, ::stride, :]
    out = np.einsum("bclk,ock->bol", windows, w.data, optimize=True)
    if bt is not None:
        out = out + bt.data[None, :, None]

    def backward(g):
        if w.requires_grad:
            w._accumulate(np.einsum("bclk,bol->ock", windows, g, optimize=True))
        if bt is not None and bt.requires_grad:
            bt._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for kk in range(k):
                contrib = np.einsum("bol,oc->bcl", g, w.data[:, :, kk], optimize=True)
                gx[:, :, kk : kk + stride * l_out : stride] += contrib
            x._accumulate(gx)

    parents = (x, w) if bt is None else (x, w, bt)
    return _make(out, parents, backward)


# -- gradient checking ---------------------------------------------------------


def gradcheck(
    build_loss,
    params,
    h: float = 1e-5,
    samples_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare backward-pass gradients against central finite differences.

    ``build_loss`` must rebuild the scalar loss from scratch on every call and
    be deterministic (freeze dropout masks and sampling noise). Returns the
    worst relative error over the probed entries; ``samples_per_tensor``
    limits probes per parameter tensor for large models (None checks all).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        n = p.data.size
        if samples_per_tensor is not None and n > samples_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            idxs = rng.choice(n, size=samples_per_tensor, replace=False)
        else:
            idxs = range(n)
        flat = p.data.reshape(-1)
        for i in idxs:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                f_hi = float(build_loss().data)
                flat[i] = orig - h
                f_lo = float(build_loss().data)
            flat[i] = orig
            fd = (f_hi - f_lo) / (2.0 * h)
            a = float(an.reshape(-1)[i])
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            if err > worst:
                worst = err
    for p in params:
        p.zero_grad()
    return worst
