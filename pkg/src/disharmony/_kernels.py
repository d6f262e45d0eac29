"""Hot numeric kernels with a numba path and a pure-numpy path.

The public functions dispatch on :func:`disharmony._accel.backend` at call
time. Both paths take the same arguments and agree to rounding error; each is
deterministic on its own.

Network layout tables are int64 arrays with one row per dense layer::

    (weight_offset, bias_offset, n_in, n_out, relu)

Weights are stored row-major with shape ``(n_in, n_out)`` so a layer computes
``a @ W + b``.
"""
import numpy as np

from . import _accel
from ._accel import njit

CE = 0
HUBER = 1

LINEAR = 0
RBF = 1


# ---------------------------------------------------------------------------
# network loss + gradient


def _chain_forward_np(values, table, a):
    acts = [a]
    for w_off, b_off, nin, nout, relu in table:
        W = values[w_off:w_off + nin * nout].reshape(nin, nout)
        z = acts[-1] @ W + values[b_off:b_off + nout]
        if relu:
            z = np.maximum(z, 0.0)
        acts.append(z)
    return acts


def _chain_backward_np(values, grad, table, acts, d):
    for l in range(len(table) - 1, -1, -1):
        w_off, b_off, nin, nout, relu = table[l]
        if relu:
            d = d * (acts[l + 1] > 0.0)
        grad[w_off:w_off + nin * nout] += (acts[l].T @ d).ravel()
        grad[b_off:b_off + nout] += d.sum(axis=0)
        W = values[w_off:w_off + nin * nout].reshape(nin, nout)
        d = d @ W.T
    return d


def _head_loss_np(out, t, kind, delta):
    B = out.shape[0]
    if kind == CE:
        y = t.astype(np.int64)
        mx = out.max(axis=1, keepdims=True)
        e = np.exp(out - mx)
        s = e.sum(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(s[:, 0])
        losses = lse - out[np.arange(B), y]
        dout = e / s
        dout[np.arange(B), y] -= 1.0
    else:
        r = out[:, 0] - t
        ar = np.abs(r)
        quad = ar <= delta
        losses = np.where(quad, 0.5 * r * r, delta * (ar - 0.5 * delta))
        dout = np.where(quad, r, delta * np.sign(r))[:, None]
    return losses.sum(), dout


def _net_loss_grad_np(values, ext_table, head_table, head_ptr, head_kind,
                      head_weight, head_delta, X, T, masks):
    grad = np.zeros_like(values)
    B = X.shape[0]
    ext_acts = _chain_forward_np(values, ext_table, X)
    feats = ext_acts[-1]
    dF = np.zeros_like(feats)
    total = 0.0
    for h in range(len(head_ptr) - 1):
        rows = head_table[head_ptr[h]:head_ptr[h + 1]]
        acts = _chain_forward_np(values, rows, feats * masks[h])
        loss_sum, dout = _head_loss_np(acts[-1], T[h], head_kind[h], head_delta[h])
        scale = head_weight[h] / B
        total += scale * loss_sum
        d = _chain_backward_np(values, grad, rows, acts, dout * scale)
        dF += d * masks[h]
    _chain_backward_np(values, grad, ext_table, ext_acts, dF)
    return total, grad


@njit
def _dense_forward_nb(values, row, src, dst, B):
    w_off, b_off, nin, nout, relu = row[0], row[1], row[2], row[3], row[4]
    for b in range(B):
        for j in range(nout):
            dst[b, j] = values[b_off + j]
        for i in range(nin):
            a = src[b, i]
            if a != 0.0:
                base = w_off + i * nout
                for j in range(nout):
                    dst[b, j] += a * values[base + j]
        if relu:
            for j in range(nout):
                if dst[b, j] < 0.0:
                    dst[b, j] = 0.0


@njit
def _dense_backward_nb(values, grad, row, src, out, d, dprev, B):
    # d holds dL/d(output) on entry; modified in place by the relu gate
    w_off, b_off, nin, nout, relu = row[0], row[1], row[2], row[3], row[4]
    for b in range(B):
        if relu:
            for j in range(nout):
                if out[b, j] <= 0.0:
                    d[b, j] = 0.0
        for j in range(nout):
            grad[b_off + j] += d[b, j]
        for i in range(nin):
            a = src[b, i]
            base = w_off + i * nout
            acc = 0.0
            for j in range(nout):
                grad[base + j] += a * d[b, j]
                acc += values[base + j] * d[b, j]
            dprev[b, i] = acc


@njit
def _net_loss_grad_nb(values, ext_table, head_table, head_ptr, head_kind,
                      head_weight, head_delta, X, T, masks):
    grad = np.zeros_like(values)
    B, d_in = X.shape
    maxw = d_in
    for r in range(ext_table.shape[0]):
        maxw = max(maxw, ext_table[r, 3])
    for r in range(head_table.shape[0]):
        maxw = max(maxw, head_table[r, 3])

    n_ext = ext_table.shape[0]
    ext_acts = np.zeros((n_ext + 1, B, maxw))
    for b in range(B):
        for i in range(d_in):
            ext_acts[0, b, i] = X[b, i]
    for l in range(n_ext):
        _dense_forward_nb(values, ext_table[l], ext_acts[l], ext_acts[l + 1], B)
    f = d_in if n_ext == 0 else ext_table[n_ext - 1, 3]

    dF = np.zeros((B, maxw))
    total = 0.0
    n_heads = head_ptr.shape[0] - 1
    for h in range(n_heads):
        lo = head_ptr[h]
        nh = head_ptr[h + 1] - lo
        acts = np.zeros((nh + 1, B, maxw))
        for b in range(B):
            for i in range(f):
                acts[0, b, i] = ext_acts[n_ext, b, i] * masks[h, b, i]
        for l in range(nh):
            _dense_forward_nb(values, head_table[lo + l], acts[l], acts[l + 1], B)

        out = acts[nh]
        n_out = head_table[lo + nh - 1, 3]
        scale = head_weight[h] / B
        d = np.zeros((B, maxw))
        loss_sum = 0.0
        if head_kind[h] == CE:
            for b in range(B):
                y = int(T[h, b])
                mx = out[b, 0]
                for j in range(1, n_out):
                    if out[b, j] > mx:
                        mx = out[b, j]
                s = 0.0
                for j in range(n_out):
                    s += np.exp(out[b, j] - mx)
                loss_sum += mx + np.log(s) - out[b, y]
                for j in range(n_out):
                    d[b, j] = np.exp(out[b, j] - mx) / s
                d[b, y] -= 1.0
        else:
            delta = head_delta[h]
            for b in range(B):
                r = out[b, 0] - T[h, b]
                ar = abs(r)
                if ar <= delta:
                    loss_sum += 0.5 * r * r
                    d[b, 0] = r
                else:
                    loss_sum += delta * (ar - 0.5 * delta)
                    d[b, 0] = delta if r > 0.0 else -delta
        total += scale * loss_sum
        for b in range(B):
            for j in range(n_out):
                d[b, j] *= scale

        dprev = np.zeros((B, maxw))
        for l in range(nh - 1, -1, -1):
            _dense_backward_nb(values, grad, head_table[lo + l], acts[l], acts[l + 1], d, dprev, B)
            d, dprev = dprev, d
        for b in range(B):
            for i in range(f):
                dF[b, i] += d[b, i] * masks[h, b, i]

    d = dF
    dprev = np.zeros((B, maxw))
    for l in range(n_ext - 1, -1, -1):
        _dense_backward_nb(values, grad, ext_table[l], ext_acts[l], ext_acts[l + 1], d, dprev, B)
        d, dprev = dprev, d
    return total, grad


def net_loss_grad(values, ext_table, head_table, head_ptr, head_kind,
                  head_weight, head_delta, X, T, masks):
    """Weighted sum of per-head mean losses and its gradient w.r.t. ``values``.

    ``T`` is ``(H, B)`` (class index as float for CE heads, target for Huber
    heads); ``masks`` is ``(H, B, f)`` and multiplies the shared features
    before each head.
    """
    fn = _net_loss_grad_nb if _accel.backend() == "numba" else _net_loss_grad_np
    return fn(values, ext_table, head_table, head_ptr, head_kind,
              head_weight, head_delta, X, T, masks)


def chain_forward(values, table, X):
    """Forward pass through one chain of dense layers (numpy only; not hot)."""
    return _chain_forward_np(values, table, X)[-1]


# ---------------------------------------------------------------------------
# Adam


def _adam_np(values, m, v, grad, idx, t, lr, b1, b2, eps):
    g = grad[idx]
    m[idx] = b1 * m[idx] + (1.0 - b1) * g
    v[idx] = b2 * v[idx] + (1.0 - b2) * g * g
    mhat = m[idx] / (1.0 - b1 ** t)
    vhat = v[idx] / (1.0 - b2 ** t)
    values[idx] -= lr * mhat / (np.sqrt(vhat) + eps)


@njit
def _adam_nb(values, m, v, grad, idx, t, lr, b1, b2, eps):
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k in range(idx.shape[0]):
        i = idx[k]
        g = grad[i]
        m[i] = b1 * m[i] + (1.0 - b1) * g
        v[i] = b2 * v[i] + (1.0 - b2) * g * g
        values[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


def adam_update(values, m, v, grad, idx, t, lr, b1, b2, eps):
    """In-place Adam update restricted to the integer positions ``idx``."""
    fn = _adam_nb if _accel.backend() == "numba" else _adam_np
    fn(values, m, v, grad, idx, float(t), float(lr), float(b1), float(b2), float(eps))


# ---------------------------------------------------------------------------
# kernels on point sets


def _pairwise_np(X, Y, kind, gamma):
    if kind == LINEAR:
        return X @ Y.T
    d2 = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * (X @ Y.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


@njit
def _pairwise_nb(X, Y, kind, gamma):
    n, d = X.shape
    m = Y.shape[0]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            if kind == LINEAR:
                for k in range(d):
                    acc += X[i, k] * Y[j, k]
                K[i, j] = acc
            else:
                for k in range(d):
                    diff = X[i, k] - Y[j, k]
                    acc += diff * diff
                K[i, j] = np.exp(-gamma * acc)
    return K


def pairwise_kernel(X, Y, kind, gamma):
    fn = _pairwise_nb if _accel.backend() == "numba" else _pairwise_np
    return fn(np.ascontiguousarray(X, dtype=np.float64),
              np.ascontiguousarray(Y, dtype=np.float64), int(kind), float(gamma))


def _mmd2_np(X, Y, kind, gamma):
    n, m = X.shape[0], Y.shape[0]
    Kxx = _pairwise_np(X, X, kind, gamma)
    Kyy = _pairwise_np(Y, Y, kind, gamma)
    Kxy = _pairwise_np(X, Y, kind, gamma)
    sxx = (Kxx.sum() - np.trace(Kxx)) / (n * (n - 1))
    syy = (Kyy.sum() - np.trace(Kyy)) / (m * (m - 1))
    return sxx + syy - 2.0 * Kxy.mean()


@njit
def _kval(A, i, B, j, kind, gamma):
    acc = 0.0
    if kind == LINEAR:
        for k in range(A.shape[1]):
            acc += A[i, k] * B[j, k]
        return acc
    for k in range(A.shape[1]):
        diff = A[i, k] - B[j, k]
        acc += diff * diff
    return np.exp(-gamma * acc)


@njit
def _mmd2_nb(X, Y, kind, gamma):
    n, m = X.shape[0], Y.shape[0]
    sxx = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            sxx += _kval(X, i, X, j, kind, gamma)
    syy = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            syy += _kval(Y, i, Y, j, kind, gamma)
    sxy = 0.0
    for i in range(n):
        for j in range(m):
            sxy += _kval(X, i, Y, j, kind, gamma)
    return 2.0 * sxx / (n * (n - 1)) + 2.0 * syy / (m * (m - 1)) - 2.0 * sxy / (n * m)


def mmd2_unbiased(X, Y, kind, gamma):
    """Unbiased U-statistic estimate of squared MMD (may be slightly negative)."""
    fn = _mmd2_nb if _accel.backend() == "numba" else _mmd2_np
    return float(fn(np.ascontiguousarray(X, dtype=np.float64),
                    np.ascontiguousarray(Y, dtype=np.float64), int(kind), float(gamma)))
