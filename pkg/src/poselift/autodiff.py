"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus an optional gradient slot; operations build
a DAG of backward closures that ``backward`` replays in reverse
topological order.  Everything runs in float64 and is deterministic:
randomness (dropout) comes only from an explicitly passed Generator.

Only the operations the temporal convolutional network needs are
implemented; each one's gradient is validated against central finite
differences in the test suite.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeMismatch


class Tensor:
    """A node in the autodiff graph.

    Attributes:
        values: The float64 payload.
        grad: Accumulated gradient (same shape), populated by backward().
    """

    __slots__ = ("values", "grad", "_parents", "_backward")

    def __init__(
        self,
        values,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ) -> None:
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, leaf={self._backward is None})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this (scalar) tensor through the graph."""
        if self.values.size != 1:
            raise ShapeMismatch("backward() requires a scalar loss", self.shape)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.values))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values + b.values, parents=(a, b))
    out._backward = lambda g: (
        a._accumulate(_unbroadcast(g, a.shape)),
        b._accumulate(_unbroadcast(g, b.shape)),
    )
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values - b.values, parents=(a, b))
    out._backward = lambda g: (
        a._accumulate(_unbroadcast(g, a.shape)),
        b._accumulate(_unbroadcast(-g, b.shape)),
    )
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values * b.values, parents=(a, b))
    out._backward = lambda g: (
        a._accumulate(_unbroadcast(g * b.values, a.shape)),
        b._accumulate(_unbroadcast(g * a.values, b.shape)),
    )
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values / b.values, parents=(a, b))
    out._backward = lambda g: (
        a._accumulate(_unbroadcast(g / b.values, a.shape)),
        b._accumulate(_unbroadcast(-g * a.values / (b.values ** 2), b.shape)),
    )
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.values), parents=(a,))
    out._backward = lambda g: a._accumulate(g * out.values)
    return out


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sqrt(a.values), parents=(a,))
    out._backward = lambda g: a._accumulate(g / (2.0 * out.values))
    return out


def absolute(a) -> Tensor:
    """|a| with the subgradient at 0 fixed to 0."""
    a = as_tensor(a)
    out = Tensor(np.abs(a.values), parents=(a,))
    out._backward = lambda g: a._accumulate(g * np.sign(a.values))
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.values, 0.0), parents=(a,))
    out._backward = lambda g: a._accumulate(g * (a.values > 0))
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.values))
    out = Tensor(s, parents=(a,))
    out._backward = lambda g: a._accumulate(g * s * (1.0 - s))
    return out


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def _bw(g: np.ndarray) -> None:
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    out._backward = _bw
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.values.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.values.reshape(shape), parents=(a,))
    out._backward = lambda g: a._accumulate(g.reshape(a.shape))
    return out


def slice_time(a, start: int, stop: int) -> Tensor:
    """Slice the last (temporal) axis: y = a[..., start:stop]."""
    a = as_tensor(a)
    out = Tensor(a.values[..., start:stop], parents=(a,))

    def _bw(g: np.ndarray) -> None:
        full = np.zeros_like(a.values)
        full[..., start:stop] = g
        a._accumulate(full)

    out._backward = _bw
    return out


def take_joints(a, index, axis: int) -> Tensor:
    """Select indices along an axis (used for root-joint extraction)."""
    a = as_tensor(a)
    idx = np.asarray(index)
    out = Tensor(np.take(a.values, idx, axis=axis), parents=(a,))

    def _bw(g: np.ndarray) -> None:
        full = np.zeros_like(a.values)
        np.add.at(full, _axis_index(idx, axis, a.ndim), g)
        a._accumulate(full)

    out._backward = _bw
    return out


def _axis_index(idx: np.ndarray, axis: int, ndim: int):
    sel: list = [slice(None)] * ndim
    sel[axis] = idx
    return tuple(sel)


def l2norm(a, axis: int = -1) -> Tensor:
    """Euclidean norm along an axis; gradient is 0 at exactly zero vectors."""
    a = as_tensor(a)
    n = np.sqrt((a.values ** 2).sum(axis=axis))
    out = Tensor(n, parents=(a,))

    def _bw(g: np.ndarray) -> None:
        safe = np.where(n > 0, n, 1.0)
        ge = np.expand_dims(g / safe, axis)
        grad = ge * a.values
        grad = np.where(np.expand_dims(n > 0, axis), grad, 0.0)
        a._accumulate(grad)

    out._backward = _bw
    return out


def constant_mul(a, mask: np.ndarray) -> Tensor:
    """Multiply by a constant array the gradient does not flow into."""
    a = as_tensor(a)
    m = np.broadcast_to(np.asarray(mask, dtype=np.float64), a.shape)
    out = Tensor(a.values * m, parents=(a,))
    out._backward = lambda g: a._accumulate(g * m)
    return out


def conv1d(x, kernel, bias, stride: int = 1) -> Tensor:
    """Valid (no padding) temporal cross-correlation.

    Args:
        x: (B, C_in, T) input.
        kernel: (C_out, C_in, W) weights.
        bias: (C_out,) bias.
        stride: Temporal stride >= 1.

    Returns:
        (B, C_out, T') with T' = (T - W)//stride + 1.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 3 or kernel.ndim != 3 or bias.ndim != 1:
        raise ShapeMismatch("conv1d expects x (B,C,T), kernel (O,C,W), bias (O,)",
                            x.shape, kernel.shape, bias.shape)
    b_sz, c_in, t = x.shape
    c_out, kc_in, w = kernel.shape
    if kc_in != c_in or bias.shape[0] != c_out:
        raise ShapeMismatch("conv1d channel mismatch", x.shape, kernel.shape, bias.shape)
    if w > t:
        raise ShapeMismatch(f"kernel width {w} exceeds input length {t}")
    if stride < 1:
        raise ShapeMismatch(f"stride must be >= 1, got {stride}")

    windows = np.lib.stride_tricks.sliding_window_view(x.values, w, axis=2)[:, :, ::stride, :]
    y = np.einsum("oiw,bitw->bot", kernel.values, windows) + bias.values[None, :, None]
    out = Tensor(y, parents=(x, kernel, bias))

    def _bw(g: np.ndarray) -> None:
        kernel._accumulate(np.einsum("bot,bitw->oiw", g, windows))
        bias._accumulate(g.sum(axis=(0, 2)))
        dx = np.zeros_like(x.values)
        for tp in range(g.shape[2]):
            lo = tp * stride
            dx[:, :, lo:lo + w] += np.einsum("bo,oiw->biw", g[:, :, tp], kernel.values)
        x._accumulate(dx)

    out._backward = _bw
    return out


def batchnorm_1d(
    x,
    scale,
    shift,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (batch, time) for (B, C, T) input.

    Train mode normalizes with the batch's own statistics (population
    variance) and updates the running buffers in place; eval mode uses the
    running buffers as constants.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    if x.ndim != 3:
        raise ShapeMismatch("batchnorm_1d expects (B, C, T)", x.shape)
    c = x.shape[1]
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeMismatch("scale/shift must be (C,)", scale.shape, shift.shape, x.shape)
    scale_r = reshape(scale, (1, c, 1))
    shift_r = reshape(shift, (1, c, 1))

    if mode == "train":
        mu = tmean(x, axis=(0, 2), keepdims=True)
        centered = sub(x, mu)
        var = tmean(mul(centered, centered), axis=(0, 2), keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.values.reshape(c)
        running_var *= 1.0 - momentum
        running_var += momentum * var.values.reshape(c)
        xhat = div(centered, sqrt(add(var, eps)))
        return add(mul(scale_r, xhat), shift_r)
    if mode == "eval":
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = constant_mul(add(x, -running_mean.reshape(1, c, 1)), inv.reshape(1, c, 1))
        return add(mul(scale_r, xhat), shift_r)
    raise ShapeMismatch(f"mode must be 'train' or 'eval', got {mode!r}")


def dropout(x, p: float, rng: np.random.Generator | None, mode: str) -> Tensor:
    """Inverted dropout: keep with probability 1-p and rescale by 1/(1-p)."""
    x = as_tensor(x)
    if mode == "eval" or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ShapeMismatch(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ShapeMismatch("train-mode dropout requires a random generator")
    keep = (rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return constant_mul(x, keep)


def occlusion_gate(keypoints, occ_logits, tau: float) -> tuple[Tensor, Tensor]:
    """Zero out the (x, y) channels of joints predicted occluded.

    Args:
        keypoints: (..., 2N, T) coordinate channels, joint-interleaved
            (x0, y0, x1, y1, ...).
        occ_logits: (..., N, T') occlusion logits; T' must be T or 1
            (a single vector gates every frame of the window).
        tau: Probability threshold above which a joint is zeroed.

    Returns:
        (gated, occ_prob): gated keypoints, and sigmoid(occ_logits).
        The zeroing mask is a constant in the backward pass, so the gate
        itself sends no gradient to the logits; keypoints that survive
        pass their gradient through unchanged.
    """
    keypoints, occ_logits = as_tensor(keypoints), as_tensor(occ_logits)
    kp_shape = keypoints.shape
    lg_shape = occ_logits.shape
    if keypoints.ndim != occ_logits.ndim or kp_shape[:-2] != lg_shape[:-2]:
        raise ShapeMismatch("keypoints/logits batch shapes differ", kp_shape, lg_shape)
    n2, t = kp_shape[-2], kp_shape[-1]
    n, t_b = lg_shape[-2], lg_shape[-1]
    if n2 != 2 * n:
        raise ShapeMismatch("keypoints must have 2 channels per logit joint", kp_shape, lg_shape)
    if t_b not in (t, 1):
        raise ShapeMismatch("logit frames must match keypoints or be 1", kp_shape, lg_shape)

    occ_prob = sigmoid(occ_logits)
    keep = (occ_prob.values <= tau).astype(np.float64)
    keep = np.broadcast_to(keep, lg_shape[:-1] + (t,))
    keep_coords = np.repeat(keep, 2, axis=-2)
    gated = constant_mul(keypoints, keep_coords)
    return gated, occ_prob


# ---------------------------------------------------------------------------
# Finite-difference checking


def finite_difference(
    f: Callable[[], float],
    arrays: Iterable[np.ndarray],
    step: float = 1e-5,
) -> list[np.ndarray]:
    """Central-difference gradient of scalar f() w.r.t. arrays mutated in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f()
            flat[i] = orig - step
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst-case elementwise relative error between two gradients."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
