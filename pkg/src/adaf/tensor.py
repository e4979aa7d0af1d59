"""Reverse-mode automatic differentiation over dense numpy arrays.

Only the primitives the model actually needs are provided. Gradients are
accumulated additively into ``requires_grad`` leaves; intermediate nodes
never retain gradient state between backward calls. Run in float64 when
checking gradients against finite differences, float32 when training.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .errors import ContractError, ShapeError


class Tensor:
    """A dense n-d array with an optional place in a compute graph."""

    __slots__ = ("data", "requires_grad", "grad", "_prev", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._prev = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def backward(self):
        backward(self)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, prev, backward_fn):
    """Build an output tensor, recording the graph only if needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in prev):
        out.requires_grad = True
        out._prev = tuple(prev)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss):
    """Populate .grad on every requires_grad leaf reachable from `loss`.

    Repeated calls accumulate (grads double on a second call). Gradients of
    intermediate nodes live only in a per-call table.
    """
    if loss.data.ndim != 0:
        raise ContractError(
            f"backward requires a scalar loss, got shape {loss.data.shape}")
    # iterative reverse topological order
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in visited and (p.requires_grad or p._prev):
                stack.append((p, False))

    grads = {id(loss): np.ones((), dtype=loss.data.dtype)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            for p, gp in zip(node._prev, node._backward(g)):
                if gp is None or not (p.requires_grad or p._prev):
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = gp if acc is None else acc + gp
        elif node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g


# -- elementwise and structural primitives ----------------------------------

def add(a, b):
    data = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(data, (a, b), back)


def mul(a, b):
    data = a.data * b.data

    def back(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), back)


def scale(a, s):
    s = a.data.dtype.type(s)
    return _node(a.data * s, (a,), lambda g: (g * s,))


def reshape(a, shape):
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    inv = np.argsort(axes)
    return _node(a.data.transpose(axes), (a,),
                 lambda g: (g.transpose(inv),))


def concat(tensors, axis):
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, tuple(tensors), back)


def stack(tensors, axis):
    data = np.stack([t.data for t in tensors], axis=axis)

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(data, tuple(tensors), back)


def getitem(a, key):
    data = a.data[key]

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _node(data, (a,), back)


def tsum(a):
    return _node(a.data.sum(), (a,),
                 lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def tmean(a):
    n = a.data.size
    return _node(a.data.mean(), (a,),
                 lambda g: (np.broadcast_to(g / n, a.data.shape).copy(),))


def sum_over(a, axis):
    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _node(a.data.sum(axis=axis), (a,), back)


def mean_over(a, axis):
    n = a.data.shape[axis]

    def back(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape).copy(),)

    return _node(a.data.mean(axis=axis), (a,), back)


def relu(a):
    data = np.maximum(a.data, 0)

    def back(g):
        return (g * (a.data > 0),)

    return _node(data, (a,), back)


def sigmoid(a):
    data = 1.0 / (1.0 + np.exp(-a.data))

    def back(g):
        return (g * data * (1.0 - data),)

    return _node(data, (a,), back)


def dropout(a, p, train, rng=None):
    """Inverted-scaling dropout; identity when train is off or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return _node(a.data, (a,), lambda g: (g,))
    if rng is None:
        raise ContractError("dropout in train mode needs an rng")
    mask = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


# -- reductions over the last axis ------------------------------------------

def max_over_last(a):
    """Maximum over the final axis; backward routes to the first argmax."""
    if a.data.shape[-1] < 1:
        raise ShapeError(f"empty last axis: {a.data.shape}")
    idx = a.data.argmax(axis=-1)
    data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def back(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, idx[..., None], g[..., None], axis=-1)
        return (ga,)

    return _node(data, (a,), back)


def mean_over_last(a):
    if a.data.shape[-1] < 1:
        raise ShapeError(f"empty last axis: {a.data.shape}")
    return mean_over(a, -1)


def softmax_last(a):
    """Softmax over the final axis, stabilized by max-subtraction."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return ((g - dot) * data,)

    return _node(data, (a,), back)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    """Matrix product with numpy batch broadcasting on leading axes."""
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(
            f"matmul shapes {a.data.shape} x {b.data.shape}") from exc

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.data.shape),
                _unbroadcast(gb, b.data.shape))

    return _node(data, (a, b), back)


def linear(x, W, b):
    """x @ W + b for x of shape (..., I), W (I, O), b (O,)."""
    if x.data.shape[-1] != W.data.shape[0] or W.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"linear shapes x{x.data.shape} W{W.data.shape} b{b.data.shape}")
    data = x.data @ W.data + b.data

    def back(g):
        gx = g @ W.data.T
        lead = x.data.reshape(-1, x.data.shape[-1])
        gW = lead.T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gW, gb

    return _node(data, (x, W, b), back)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm shapes x{x.data.shape} gain{gain.data.shape} "
            f"bias{bias.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data

    def back(g):
        ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        gbias = g.reshape(-1, d).sum(axis=0)
        gy = g * gain.data
        gx = inv * (gy - gy.mean(axis=-1, keepdims=True)
                    - xhat * (gy * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias

    return _node(data, (x, gain, bias), back)


def scaled_dot_attention(q, k, v):
    """softmax(Q K^T / sqrt(d)) V over (..., T, d) operands."""
    d = q.data.shape[-1]
    scores = scale(matmul(q, transpose(k, _swap_last(k.data.ndim))),
                   1.0 / np.sqrt(d))
    return matmul(softmax_last(scores), v)


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


# -- 1-d convolution --------------------------------------------------------

def conv_same_padding(kernel_len):
    """(pad_left, pad_right) so stride-1 correlation preserves length."""
    pad_left = kernel_len // 2
    return pad_left, kernel_len - 1 - pad_left


def conv1d_same(x, W, b):
    """Same-length stride-1 cross-correlation.

    x: (B, 1, L), W: (F, K), b: (F,) -> (B, F, L). Zero padding is
    pad_left = K//2, pad_right = K-1-pad_left. Computed via FFT; the
    brute-force oracle lives in the tests.
    """
    if x.data.ndim != 3 or x.data.shape[1] != 1:
        raise ShapeError(f"conv1d_same expects (B, 1, L), got {x.data.shape}")
    if W.data.ndim != 2 or b.data.shape != (W.data.shape[0],):
        raise ShapeError(
            f"conv1d_same shapes W{W.data.shape} b{b.data.shape}")
    B, _, L = x.data.shape
    F, K = W.data.shape
    pad_left, pad_right = conv_same_padding(K)
    if K > L + pad_left + pad_right:
        raise ShapeError(f"kernel K={K} longer than padded input L={L}")

    n = scipy.fft.next_fast_len(L + K)
    xp = np.zeros((B, L + K - 1), dtype=x.data.dtype)
    xp[:, pad_left:pad_left + L] = x.data[:, 0, :]
    Xf = scipy.fft.rfft(xp, n)
    Wf = scipy.fft.rfft(W.data, n)
    # out[b,f,t] = sum_j xp[b, t+j] W[f, j]  (cross-correlation)
    full = scipy.fft.irfft(Xf[:, None, :] * np.conj(Wf)[None, :, :], n)
    data = full[:, :, :L].astype(x.data.dtype) + b.data[None, :, None]

    def back(g):
        Gf = scipy.fft.rfft(g, n)
        # grad wrt padded input: convolution of g with W
        gxp = scipy.fft.irfft((Gf * Wf[None, :, :]).sum(axis=1), n)
        gx = gxp[:, pad_left:pad_left + L].astype(x.data.dtype)
        # grad wrt W: cross-correlation of padded input with g
        gW = scipy.fft.irfft((np.conj(Gf) * Xf[:, None, :]).sum(axis=0), n)
        gW = gW[:, :K].astype(W.data.dtype)
        gb = g.sum(axis=(0, 2))
        return gx[:, None, :], gW, gb

    return _node(data, (x, W, b), back)


# -- loss -------------------------------------------------------------------

def huber_loss(pred, target, delta=1.0):
    """Mean Huber loss: quadratic within delta, linear beyond."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.data.shape != t.shape:
        raise ShapeError(f"huber shapes pred{pred.data.shape} target{t.shape}")
    if delta <= 0:
        raise ContractError(f"huber delta must be positive, got {delta}")
    e = pred.data - t
    ae = np.abs(e)
    per = np.where(ae <= delta, 0.5 * e * e, delta * (ae - 0.5 * delta))
    n = e.size

    def back(g):
        return (g * np.clip(e, -delta, delta) / n,)

    return _node(per.mean(), (pred,), back)
