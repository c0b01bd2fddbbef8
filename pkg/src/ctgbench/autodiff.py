"""Reverse-mode automatic differentiation on numpy arrays.

Forward passes record onto an explicit GradTape; because entries are
appended in execution order, the reversed tape is already a valid reverse
topological order and backward() is a single linear sweep.

Differentiable values are Tensor objects. Plain ndarrays passed to an op
are constants: they join the forward computation but collect no gradient.
There is no general broadcasting; the only shape-bending allowed is
bias-add (a trailing-dim vector added to a higher-rank tensor) and
constants that broadcast to the other operand's shape without changing it.
Everything else raises ShapeError naming the primitive and the extents.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import NumericError, ShapeError

_uid_counter = itertools.count(1)


class Tensor:
    """A named differentiable array with a process-unique id."""

    __slots__ = ("value", "name", "uid")

    def __init__(self, value, name=None):
        self.value = np.asarray(value)
        self.name = name
        self.uid = next(_uid_counter)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or f"tensor{self.uid}"
        return f"Tensor({label}, shape={self.value.shape}, dtype={self.value.dtype})"


def _is_tensor(x):
    return isinstance(x, Tensor)


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


class GradTape:
    """Records primitive applications; ops are methods so call sites stay short."""

    def __init__(self):
        self.entries = []

    def _record(self, out, pairs):
        # pairs: [(input Tensor, fn(upstream grad) -> grad contribution), ...]
        pairs = [(t, fn) for t, fn in pairs if _is_tensor(t)]
        if pairs:
            self.entries.append((out.uid, pairs))
        return out

    # ---- elementwise and affine ----

    def add(self, a, b):
        av, bv = _val(a), _val(b)
        if av.shape == bv.shape:
            out = Tensor(av + bv)
            return self._record(out, [(a, lambda g: g), (b, lambda g: g)])
        if bv.ndim == 1 and av.ndim >= 2 and av.shape[-1] == bv.shape[0]:
            out = Tensor(av + bv)
            axes = tuple(range(av.ndim - 1))
            return self._record(out, [(a, lambda g: g), (b, lambda g: g.sum(axis=axes))])
        if not _is_tensor(b) and np.broadcast_shapes(av.shape, bv.shape) == av.shape:
            out = Tensor(av + bv)
            return self._record(out, [(a, lambda g: g)])
        raise ShapeError(f"add: incompatible shapes {av.shape} and {bv.shape}")

    def mul(self, a, b):
        av, bv = _val(a), _val(b)
        if av.shape != bv.shape:
            raise ShapeError(f"mul: shapes {av.shape} and {bv.shape} differ")
        out = Tensor(av * bv)
        return self._record(out, [(a, lambda g: g * bv), (b, lambda g: g * av)])

    def scale(self, a, s):
        s = float(s)
        out = Tensor(_val(a) * s)
        return self._record(out, [(a, lambda g: g * s)])

    def relu(self, a):
        av = _val(a)
        out = Tensor(np.maximum(av, 0.0))
        keep = av > 0
        return self._record(out, [(a, lambda g: g * keep)])

    def gelu(self, a):
        # tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))
        av = _val(a)
        c = np.sqrt(2.0 / np.pi)
        inner = c * (av + 0.044715 * av**3)
        t = np.tanh(inner)
        out = Tensor(0.5 * av * (1.0 + t))

        def back(g):
            dinner = c * (1.0 + 3 * 0.044715 * av**2)
            return g * (0.5 * (1.0 + t) + 0.5 * av * (1.0 - t**2) * dinner)

        return self._record(out, [(a, back)])

    def sigmoid(self, a):
        av = _val(a)
        s = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.abs(av))), np.exp(-np.abs(av)) / (1.0 + np.exp(-np.abs(av))))
        out = Tensor(s)
        return self._record(out, [(a, lambda g: g * s * (1.0 - s))])

    def softmax(self, a):
        av = _val(a)
        shifted = av - av.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)
        out = Tensor(y)

        def back(g):
            return y * (g - (g * y).sum(axis=-1, keepdims=True))

        return self._record(out, [(a, back)])

    def layer_norm(self, x, gamma, beta, eps=1e-5):
        xv, gv, bv = _val(x), _val(gamma), _val(beta)
        d = xv.shape[-1]
        if gv.shape != (d,) or bv.shape != (d,):
            raise ShapeError(f"layer_norm: gamma/beta {gv.shape}/{bv.shape} do not match last dim {d}")
        mu = xv.mean(axis=-1, keepdims=True)
        var = xv.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xv - mu) * inv
        out = Tensor(xhat * gv + bv)
        lead = tuple(range(xv.ndim - 1))

        def back_x(g):
            dxhat = g * gv
            return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))

        return self._record(
            out,
            [
                (x, back_x),
                (gamma, lambda g: (g * xhat).sum(axis=lead)),
                (beta, lambda g: g.sum(axis=lead)),
            ],
        )

    # ---- matmul family ----

    def matmul(self, a, b):
        av, bv = _val(a), _val(b)
        if av.ndim < 2 or bv.ndim < 2:
            raise ShapeError(f"matmul: operands must be at least 2-D, got {av.shape} and {bv.shape}")
        if av.shape[-1] != bv.shape[-2]:
            raise ShapeError(f"matmul: inner dims differ, {av.shape} vs {bv.shape}")
        if bv.ndim == 2:
            pass  # (..., m, k) @ (k, n)
        elif av.shape[:-2] != bv.shape[:-2]:
            raise ShapeError(f"matmul: batch dims differ, {av.shape} vs {bv.shape}")
        out = Tensor(av @ bv)

        def back_a(g):
            return g @ np.swapaxes(bv, -1, -2)

        def back_b(g):
            if bv.ndim == 2 and av.ndim > 2:
                a2 = av.reshape(-1, av.shape[-1])
                g2 = g.reshape(-1, g.shape[-1])
                return a2.T @ g2
            return np.swapaxes(av, -1, -2) @ g

        return self._record(out, [(a, back_a), (b, back_b)])

    # ---- structural ----

    def reshape(self, a, shape):
        av = _val(a)
        out = Tensor(av.reshape(shape))
        return self._record(out, [(a, lambda g: g.reshape(av.shape))])

    def transpose(self, a, axes):
        av = _val(a)
        inv = np.argsort(axes)
        out = Tensor(av.transpose(axes))
        return self._record(out, [(a, lambda g: g.transpose(inv))])

    def concat(self, parts, axis):
        vals = [_val(p) for p in parts]
        out = Tensor(np.concatenate(vals, axis=axis))
        sizes = [v.shape[axis] for v in vals]
        bounds = np.cumsum([0] + sizes)

        pairs = []
        for i, p in enumerate(parts):
            lo, hi = bounds[i], bounds[i + 1]

            def back(g, lo=lo, hi=hi):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                return g[tuple(sl)]

            pairs.append((p, back))
        return self._record(out, pairs)

    def sum_all(self, a):
        av = _val(a)
        out = Tensor(np.asarray(av.sum()))
        return self._record(out, [(a, lambda g: np.ones_like(av) * g)])

    # ---- pooling ----

    def mean_pool(self, a, axis):
        av = _val(a)
        n = av.shape[axis]
        out = Tensor(av.mean(axis=axis))
        return self._record(out, [(a, lambda g: np.broadcast_to(np.expand_dims(g, axis), av.shape) / n)])

    def masked_mean(self, a, weights, axis):
        """Weighted mean over one axis; weights are a constant array."""
        av = _val(a)
        w = np.broadcast_to(np.asarray(weights, dtype=av.dtype), av.shape)
        sw = w.sum(axis=axis, keepdims=True)
        if np.any(sw == 0):
            raise NumericError("masked_mean: a slice has zero total weight")
        out = Tensor((av * w).sum(axis=axis) / np.squeeze(sw, axis=axis))

        def back(g):
            return np.expand_dims(g, axis) * w / sw

        return self._record(out, [(a, back)])

    # ---- convolution ----

    def conv1d(self, x, w, b=None, padding="same", stride=1):
        """1-D convolution (cross-correlation) over the last axis via im2col.

        x: (B, C_in, T), w: (C_out, C_in, K), b: (C_out,) or None.
        """
        xv, wv = _val(x), _val(w)
        if xv.ndim != 3 or wv.ndim != 3:
            raise ShapeError(f"conv1d: expected 3-D x and w, got {xv.shape} and {wv.shape}")
        if xv.shape[1] != wv.shape[1]:
            raise ShapeError(f"conv1d: channel mismatch, x {xv.shape} vs w {wv.shape}")
        if stride < 1:
            raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
        k = wv.shape[2]
        if padding == "same":
            if k % 2 == 0:
                raise ShapeError(f"conv1d: same padding needs an odd kernel, got {k}")
            pad = (k - 1) // 2
        else:
            pad = int(padding)
        xp = np.pad(xv, ((0, 0), (0, 0), (pad, pad)))
        t_out = (xp.shape[2] - k) // stride + 1
        if t_out <= 0:
            raise ShapeError(f"conv1d: kernel {k} longer than padded input {xp.shape[2]}")
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::stride, :][:, :, :t_out]
        out_val = np.einsum("oik,bitk->bot", wv, win)
        if b is not None:
            out_val = out_val + _val(b)[:, None]
        out = Tensor(out_val)

        def back_x(g):
            gxp = np.zeros_like(xp)
            gwin = np.einsum("bot,oik->bitk", g, wv)
            for kk in range(k):
                gxp[:, :, kk : kk + stride * t_out : stride] += gwin[:, :, :, kk]
            return gxp[:, :, pad : pad + xv.shape[2]] if pad else gxp

        pairs = [(x, back_x), (w, lambda g: np.einsum("bot,bitk->oik", g, win))]
        if b is not None:
            pairs.append((b, lambda g: g.sum(axis=(0, 2))))
        return self._record(out, pairs)

    def channel_scale(self, x, s):
        """Gate (B, C, T) activations by per-channel factors s of shape (B, C)."""
        xv, sv = _val(x), _val(s)
        if xv.ndim != 3 or sv.shape != xv.shape[:2]:
            raise ShapeError(f"channel_scale: x {xv.shape} needs gates of shape {xv.shape[:2]}, got {sv.shape}")
        out = Tensor(xv * sv[:, :, None])
        return self._record(out, [(x, lambda g: g * sv[:, :, None]), (s, lambda g: (g * xv).sum(axis=2))])

    # ---- lookups and losses ----

    def embedding_lookup(self, table, ids):
        tv = _val(table)
        ids = np.asarray(ids)
        if tv.ndim != 2:
            raise ShapeError(f"embedding_lookup: table must be 2-D, got {tv.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= tv.shape[0]):
            raise ShapeError(f"embedding_lookup: id {int(ids.max())} out of range for table of {tv.shape[0]} rows")
        out = Tensor(tv[ids])

        def back(g):
            gt = np.zeros_like(tv)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, tv.shape[1]))
            return gt

        return self._record(out, [(table, back)])

    def cross_entropy_with_logits(self, logits, labels, weights=None):
        """Mean cross-entropy over the batch; optional per-sample weights.

        With weights the result is sum(w_i * loss_i) / sum(w_i).
        """
        lv = _val(logits)
        y = np.asarray(labels)
        if lv.ndim != 2 or y.shape != (lv.shape[0],):
            raise ShapeError(f"cross_entropy_with_logits: logits {lv.shape} vs labels {y.shape}")
        n = lv.shape[0]
        if weights is None:
            w = np.ones(n, dtype=lv.dtype)
        else:
            w = np.asarray(weights, dtype=lv.dtype)
            if w.shape != (n,):
                raise ShapeError(f"cross_entropy_with_logits: weights {w.shape} vs batch {n}")
        wsum = w.sum()
        m = lv.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(lv - m).sum(axis=1, keepdims=True))
        losses = lse[:, 0] - lv[np.arange(n), y]
        out = Tensor(np.asarray((losses * w).sum() / wsum))
        p = np.exp(lv - lse)

        def back(g):
            grad = p.copy()
            grad[np.arange(n), y] -= 1.0
            return grad * (w[:, None] * (g / wsum))

        return self._record(out, [(logits, back)])


def backward(tape: GradTape, loss: Tensor) -> dict:
    """Gradients of a scalar loss with respect to every Tensor on the tape.

    Returns {tensor_uid: ndarray}. Tensors the loss does not depend on are
    absent from the result.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    grads = {loss.uid: np.ones_like(loss.value)}
    for out_uid, pairs in reversed(tape.entries):
        g = grads.get(out_uid)
        if g is None:
            continue
        for tensor, fn in pairs:
            contribution = fn(g)
            existing = grads.get(tensor.uid)
            grads[tensor.uid] = contribution if existing is None else existing + contribution
    return grads


def grad_check(f, params, eps=1e-4, n_sample=None, seed=0):
    """Compare analytic gradients against central differences.

    f(params) must rebuild the forward pass and return (loss, tape); it must
    be deterministic. Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1e-8); the max over all checked coordinates is
    returned. With n_sample set, at most that many coordinates per parameter
    are probed (uniformly, seeded).
    """
    if isinstance(params, Tensor):
        params = [params]
    for p in params:
        if p.value.dtype != np.float64:
            raise NumericError(f"grad_check: parameter {p.name or p.uid} must be float64, got {p.value.dtype}")
    loss, tape = f(params)
    if not np.all(np.isfinite(loss.value)):
        raise NumericError("grad_check: loss is non-finite at the evaluation point")
    grads = backward(tape, loss)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        analytic = grads.get(p.uid)
        if analytic is None:
            analytic = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        size = flat.size
        if n_sample is not None and n_sample < size:
            coords = rng.choice(size, size=n_sample, replace=False)
        else:
            coords = range(size)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(params)[0].value)
            flat[i] = orig - eps
            lo = float(f(params)[0].value)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
