"""Reverse-mode automatic differentiation over numpy arrays.

Every operation returns a :class:`Tensor` that remembers its parents and a
closure propagating the output gradient back to them.  The recorded graph is
the tape: :func:`backward` orders it topologically and visits each node once.
Nothing is global, so independent graphs can be built on different threads.

Operations whose inputs all have ``requires_grad=False`` record nothing, which
keeps evaluation-only forwards cheap.
"""
from __future__ import annotations

import numpy as np

from . import numerics
from .errors import ContractError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    # --------------------------------------------------------------- basics
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # --------------------------------------------------------------- operators
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        arr = np.asarray(x)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        return Tensor(arr)
    return Tensor(np.asarray(x, dtype=dtype))


def parameter(data, name=None):
    return Tensor(np.array(data), requires_grad=True, name=name)


def _make(data, parents, backward):
    """Create an op output; record parents only if any of them needs a gradient."""
    out = Tensor(data)
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        out.requires_grad = True
        out._parents = live
        out._backward = backward
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if t.grad is None:
        t.grad = g.copy() if g.shape == t.data.shape else np.broadcast_to(g, t.data.shape).copy()
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _pair(a, b):
    a, b = as_tensor(a), as_tensor(b)
    # Python scalars should not upcast float32 tensors.
    if a.data.ndim == 0 and not a.requires_grad and b.dtype != a.dtype:
        a = Tensor(a.data.astype(b.dtype))
    if b.data.ndim == 0 and not b.requires_grad and a.dtype != b.dtype:
        b = Tensor(b.data.astype(a.dtype))
    return a, b


# ------------------------------------------------------------------ elementwise

def add(a, b):
    a, b = _pair(a, b)
    out = None

    def back():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(out.grad, b.shape))

    out = _make(a.data + b.data, (a, b), back)
    return out


def sub(a, b):
    a, b = _pair(a, b)
    out = None

    def back():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(-out.grad, b.shape))

    out = _make(a.data - b.data, (a, b), back)
    return out


def mul(a, b):
    a, b = _pair(a, b)
    out = None

    def back():
        if a.requires_grad:
            _accum(a, _unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(out.grad * a.data, b.shape))

    out = _make(a.data * b.data, (a, b), back)
    return out


def div(a, b):
    a, b = _pair(a, b)
    out = None

    def back():
        if a.requires_grad:
            _accum(a, _unbroadcast(out.grad / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))

    out = _make(a.data / b.data, (a, b), back)
    return out


def relu(x):
    x = as_tensor(x)
    out = None

    def back():
        # subgradient 0 at the kink
        _accum(x, out.grad * (x.data > 0))

    out = _make(np.maximum(x.data, 0), (x,), back)
    return out


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    x = as_tensor(x)
    s = _stable_sigmoid(np.asarray(x.data))
    out = None

    def back():
        _accum(x, out.grad * s * (1.0 - s))

    out = _make(s, (x,), back)
    return out


def log(x):
    x = as_tensor(x)
    out = None

    def back():
        _accum(x, out.grad / x.data)

    out = _make(np.log(x.data), (x,), back)
    return out


def clip(x, lo, hi):
    """Clamp to ``[lo, hi]``; the gradient is zero where clamping is active."""
    x = as_tensor(x)
    out = None

    def back():
        _accum(x, out.grad * ((x.data >= lo) & (x.data <= hi)))

    out = _make(np.clip(x.data, lo, hi), (x,), back)
    return out


# ------------------------------------------------------------------ reductions / shape

def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = None

    def back():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))

    out = _make(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), back)
    return out


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    out = None

    def back():
        _accum(x, out.grad.reshape(x.shape))

    out = _make(x.data.reshape(shape), (x,), back)
    return out


def transpose(x, axes=None):
    x = as_tensor(x)
    inv = None if axes is None else np.argsort(axes)
    out = None

    def back():
        _accum(x, np.transpose(out.grad, inv))

    out = _make(np.transpose(x.data, axes), (x,), back)
    return out


def index(x, idx):
    """Basic or advanced indexing; the backward pass scatter-adds."""
    x = as_tensor(x)
    out = None

    def back():
        g = np.zeros_like(x.data)
        np.add.at(g, idx, out.grad)
        _accum(x, g)

    out = _make(x.data[idx], (x,), back)
    return out


def take(x, indices, axis):
    """Gather slices along ``axis`` (repeats allowed)."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.intp)
    out = None

    def back():
        g = np.zeros_like(x.data)
        gm = np.moveaxis(g, axis, 0)
        np.add.at(gm, indices, np.moveaxis(out.grad, axis, 0))
        _accum(x, g)

    out = _make(np.take(x.data, indices, axis=axis), (x,), back)
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = None

    def back():
        for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
            _accum(t, g)

    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)
    return out


# ------------------------------------------------------------------ linear algebra

def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractError(f"matmul supports 2-D operands only, got {a.shape} @ {b.shape}")
    out = None

    def back():
        if a.requires_grad:
            _accum(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ out.grad)

    out = _make(a.data @ b.data, (a, b), back)
    return out


def softmax(x, axis=-1):
    """Softmax with max-subtraction for stability."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = None

    def back():
        g = out.grad
        _accum(x, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    out = _make(s, (x,), back)
    return out


def cosine(a, b, axis=0):
    """Cosine similarity of ``a`` and ``b`` along ``axis`` (broadcasting allowed).

    Vectors with zero norm on either side give similarity 0 and zero gradient.
    """
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    dot = (ad * bd).sum(axis=axis, keepdims=True)
    na = np.sqrt((ad * ad).sum(axis=axis, keepdims=True))
    nb = np.sqrt((bd * bd).sum(axis=axis, keepdims=True))
    den = na * nb
    ok = den > 0
    safe = np.where(ok, den, 1.0)
    c = np.where(ok, dot / safe, 0.0)
    out = None

    def back():
        g = np.expand_dims(out.grad, axis) * ok
        if a.requires_grad:
            na2 = np.where(na > 0, na * na, 1.0)
            ga = g * (bd / safe - c * ad / na2)
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            nb2 = np.where(nb > 0, nb * nb, 1.0)
            gb = g * (ad / safe - c * bd / nb2)
            _accum(b, _unbroadcast(gb, b.shape))

    out = _make(np.squeeze(c, axis=axis).astype(ad.dtype), (a, b), back)
    return out


# ------------------------------------------------------------------ convolution

def _im2col(x, k, stride, pad):
    C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    cols = np.empty((C, k, k, Ho, Wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
    return cols.reshape(C * k * k, Ho * Wo), Ho, Wo


def _col2im(cols, shape, k, stride, pad, Ho, Wo):
    C, H, W = shape
    cols = cols.reshape(C, k, k, Ho, Wo)
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += cols[:, i, j]
    return xp[:, pad:pad + H, pad:pad + W]


def conv2d(x, w, b=None, stride=1):
    """Same-padded 2-D convolution of a ``(C_in, H, W)`` input with ``(C_out, C_in, k, k)`` kernels."""
    x, w = as_tensor(x), as_tensor(w)
    k = w.shape[-1]
    pad = k // 2
    cols, Ho, Wo = _im2col(x.data, k, stride, pad)
    wm = w.data.reshape(w.shape[0], -1)
    y = wm @ cols
    if b is not None:
        b = as_tensor(b)
        y = y + b.data[:, None]
    parents = (x, w) if b is None else (x, w, b)
    out = None

    def back():
        g = out.grad.reshape(w.shape[0], -1)
        if w.requires_grad:
            _accum(w, (g @ cols.T).reshape(w.shape))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=1))
        if x.requires_grad:
            _accum(x, _col2im(wm.T @ g, x.shape, k, stride, pad, Ho, Wo))

    out = _make(y.reshape(w.shape[0], Ho, Wo), parents, back)
    return out


# ------------------------------------------------------------------ spectral

def band_pass(x, mask):
    """Differentiable real band-pass over the last two axes of ``x``.

    Forward: ``real(ifft2(ifft_shift(mask * fft_shift(fft2(x)))))``.  The
    adjoint of each linear stage is applied in reverse order: ``real`` ->
    embedding, ``ifft2`` -> ``fft2 / (H W)``, ``ifft_shift`` -> ``fft_shift``,
    mask -> mask, ``fft_shift`` -> ``ifft_shift``, ``fft2`` -> ``ifft2 * (H W)``.
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    y = numerics.band_project(x.data, mask).astype(x.dtype)
    out = None

    def back():
        g = np.asarray(out.grad, dtype=np.float64)
        hw = g.shape[-1] * g.shape[-2]
        G = np.fft.fft2(g, axes=(-2, -1)) / hw
        G = numerics.ifft_shift(numerics.band_filter(numerics.fft_shift(G), mask))
        _accum(x, numerics.real_part(np.fft.ifft2(G, axes=(-2, -1)) * hw))

    out = _make(y, (x,), back)
    return out


# ------------------------------------------------------------------ backward

def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, params=None):
    """Accumulate ``d loss / d leaf`` into ``.grad`` of every leaf reachable from ``loss``.

    Leaves listed in ``params`` that the loss does not depend on get a zero
    gradient.  Intermediate nodes are released after use.  Returns the
    ``params`` gradients as a list (empty when ``params`` is None).
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ContractError("backward needs a scalar loss tensor")
    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        for node in reversed(_topo(loss)):
            if node._backward is not None:
                if node.grad is not None:
                    node._backward()
                # free the interior of the graph
                node._backward = None
                node._parents = ()
                node.grad = None
    grads = []
    for p in params or ():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        grads.append(p.grad)
    return grads


# ------------------------------------------------------------------ gradient checking

def finite_diff_check(f, inputs, eps=1e-4, kink_guard=None, max_coords=None, rng=None):
    """Compare analytic gradients of scalar ``f(*inputs)`` against central differences.

    ``inputs`` are float64 leaf tensors.  Returns a dict with the max
    relative error ``|g_a - g_n| / max(1, |g_a|, |g_n|)`` per input name and
    overall, plus how many coordinates were compared for each input.
    ``kink_guard(x_index, coord)`` may return False to skip a coordinate
    (e.g. a ReLU pre-activation within ``10*eps`` of zero).
    ``max_coords`` subsamples coordinates of large inputs.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for t in inputs:
        t.grad = None
        t.requires_grad = True
    loss = f(*inputs)
    backward(loss, inputs)
    analytic = [t.grad.copy() for t in inputs]
    report = {"max_rel_err": 0.0, "per_input": {}, "checked": {}, "skipped": 0}
    for ti, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        worst, checked = 0.0, 0
        for c in coords:
            if kink_guard is not None and not kink_guard(ti, c):
                report["skipped"] += 1
                continue
            orig = flat[c]
            flat[c] = orig + eps
            fp = float(f(*inputs).data)
            flat[c] = orig - eps
            fm = float(f(*inputs).data)
            flat[c] = orig
            num = (fp - fm) / (2 * eps)
            ana = float(analytic[ti].reshape(-1)[c])
            err = abs(ana - num) / max(1.0, abs(ana), abs(num))
            worst = max(worst, err)
            checked += 1
        key = t.name or f"input{ti}"
        report["per_input"][key] = worst
        report["checked"][key] = checked
        report["max_rel_err"] = max(report["max_rel_err"], worst)
    for t in inputs:
        t.grad = None
    return report


def curvature_guard(f, inputs, eps=1e-4, tol=1e-6):
    """Kink detector for :func:`finite_diff_check`.

    A coordinate is kept when ``|f(x+e) - 2 f(x) + f(x-e)|`` is at most
    ``tol * max(1, |f(x)|)``.  Smooth functions give ``O(e^2)`` here; a ReLU
    kink crossed inside ``[x-e, x+e]`` gives ``O(e)``.
    """
    def guard(ti, c):
        flat = inputs[ti].data.reshape(-1)
        orig = flat[c]
        f0 = float(f(*inputs).data)
        flat[c] = orig + eps
        fp = float(f(*inputs).data)
        flat[c] = orig - eps
        fm = float(f(*inputs).data)
        flat[c] = orig
        return abs(fp - 2 * f0 + fm) <= tol * max(1.0, abs(f0))

    return guard
