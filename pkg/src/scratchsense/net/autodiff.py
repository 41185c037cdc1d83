"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  ``backward``
walks the graph in reverse topological order.  Only the ops the scratch
detector needs are provided; all of them accept a leading batch axis.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _make(data, parents: Sequence[Tensor], backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (), backward=backward if needs else None)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=False)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0).astype(x.data.dtype, copy=False), (x,), lambda g: (g * mask,))


def scale(x: Tensor, factor: float) -> Tensor:
    return _make(x.data * factor, (x,), lambda g: (g * factor,))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        index = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[axis] = slice(lo, hi)
            out.append(g[tuple(index)])
        return out

    return _make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inverse),))


def upsample_time(x: Tensor, length: int) -> Tensor:
    """Nearest-neighbour x2 upsampling of the last axis, cropped to ``length``."""
    n = x.shape[-1]
    if not (2 * n - 1 <= length <= 2 * n):
        raise ValueError(f"upsample_time: cannot map {n} samples onto {length}")
    out = np.repeat(x.data, 2, axis=-1)[..., :length]

    def backward(g):
        if length < 2 * n:
            pad = [(0, 0)] * (g.ndim - 1) + [(0, 2 * n - length)]
            g = np.pad(g, pad)
        return (g.reshape(g.shape[:-1] + (n, 2)).sum(axis=-1),)

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# convolutions (cross-correlation, as in every deep-learning framework)
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1, same-padded 1-D convolution.  x: (B, Cin, T), w: (Cout, Cin, K)."""
    B, cin, T = x.shape
    cout, wcin, K = w.shape
    if wcin != cin:
        raise ValueError(f"conv1d: input has {cin} channels, kernel expects {wcin}")
    left = (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (left, K - 1 - left)))
    cols = np.stack([xp[:, :, k:k + T] for k in range(K)], axis=2).reshape(B, cin * K, T)
    w2 = w.data.reshape(cout, cin * K)
    out = np.matmul(w2, cols)
    if b is not None:
        out += b.data[None, :, None]

    def backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gcols = np.matmul(w2.T, g).reshape(B, cin, K, T)
        gxp = np.zeros_like(xp)
        for k in range(K):
            gxp[:, :, k:k + T] += gcols[:, :, k, :]
        gx = gxp[:, :, left:left + T]
        gb = g.sum(axis=(0, 2)) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return _make(out, parents, backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Zero-padded 2-D convolution with odd square kernels.  x: (B, Cin, H, W)."""
    B, cin, H, W = x.shape
    cout, wcin, kh, kw = w.shape
    if wcin != cin:
        raise ValueError(f"conv2d: input has {cin} channels, kernel expects {wcin}")
    ph, pw = kh // 2, kw // 2
    Ho = (H + 2 * ph - kh) // stride + 1
    Wo = (W + 2 * pw - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    spans = [(i, j, slice(i, i + (Ho - 1) * stride + 1, stride), slice(j, j + (Wo - 1) * stride + 1, stride))
             for i in range(kh) for j in range(kw)]
    cols = np.stack([xp[:, :, si, sj] for _, _, si, sj in spans], axis=2)
    cols = cols.reshape(B, cin * kh * kw, Ho * Wo)
    w2 = w.data.reshape(cout, cin * kh * kw)
    out = np.matmul(w2, cols).reshape(B, cout, Ho, Wo)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g):
        g2 = g.reshape(B, cout, Ho * Wo)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gcols = np.matmul(w2.T, g2).reshape(B, cin, kh * kw, Ho, Wo)
        gxp = np.zeros_like(xp)
        for n, (_, _, si, sj) in enumerate(spans):
            gxp[:, :, si, sj] += gcols[:, :, n]
        gx = gxp[:, :, ph:ph + H, pw:pw + W]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w, b) if b is not None else (x, w)
    return _make(out, parents, backward)


# ---------------------------------------------------------------------------
# temporal similarity matrix
# ---------------------------------------------------------------------------

def similarity_matrix(features: Tensor, lookahead: int) -> Tensor:
    """Cosine similarity between each tick and the next ``lookahead`` ticks.

    features: (B, D, T).  Returns (B, T, L) with entry [t, l] the cosine
    between f_t and f_{t+l}; cells with t + l >= T are 0, and any pair with
    a zero feature vector scores 0.
    """
    B, D, T = features.shape
    L = lookahead
    if not 1 <= L <= T:
        raise ValueError(f"lookahead must be in [1, {T}], got {L}")
    f = features.data
    norm = np.sqrt(np.einsum("bdt,bdt->bt", f, f))
    inv = np.divide(1.0, norm, out=np.zeros_like(norm), where=norm > 0)
    u = f * inv[:, None, :]
    out = np.zeros((B, T, L), dtype=f.dtype)
    for lag in range(L):
        out[:, : T - lag, lag] = np.einsum("bdt,bdt->bt", u[:, :, : T - lag], u[:, :, lag:])

    def backward(g):
        gu = np.zeros_like(u)
        for lag in range(L):
            gl = g[:, None, : T - lag, lag]
            gu[:, :, : T - lag] += gl * u[:, :, lag:]
            gu[:, :, lag:] += gl * u[:, :, : T - lag]
        radial = np.einsum("bdt,bdt->bt", u, gu)
        return ((gu - u * radial[:, None, :]) * inv[:, None, :],)

    return _make(out, (features,), backward)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def log_softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over (batch, tick) of -log softmax(logits)[label].  logits: (B, K, T)."""
    labels = np.asarray(labels)
    B, K, T = logits.shape
    if labels.shape != (B, T):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K - 1}]")
    logp = log_softmax(logits.data, axis=1)
    picked = np.take_along_axis(logp, labels[:, None, :].astype(np.intp), axis=1)[:, 0, :]
    count = B * T
    loss = -picked.sum() / count

    def backward(g):
        probs = np.exp(logp)
        np.put_along_axis(probs, labels[:, None, :].astype(np.intp),
                          np.take_along_axis(probs, labels[:, None, :].astype(np.intp), axis=1) - 1.0, axis=1)
        return (probs * (g / count),)

    return _make(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)
