"""Inner loops of logistic-regression local training.

Each kernel exists twice: a loop-level version compiled by numba (``*_jit``)
and a vectorised NumPy version (``*_np``).  The public names dispatch on
``fedharm._accel.USE_NUMBA``.  Both versions apply the same Adam formula
element by element, so they agree to rounding in the gradient sums.

Parameter layout for the linear model: ``params[:D]`` weights, ``params[D]`` bias.
"""

import math

import numpy as np

from . import _accel


def _sigmoid_scalar(s):
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    e = math.exp(s)
    return e / (1.0 + e)


_sigmoid_jit = _accel.njit(_sigmoid_scalar)


def _lr_scores_loop(params, indptr, indices, data):
    n = indptr.shape[0] - 1
    dim = params.shape[0] - 1
    out = np.empty(n)
    for i in range(n):
        s = params[dim]
        for p in range(indptr[i], indptr[i + 1]):
            s += params[indices[p]] * data[p]
        out[i] = s
    return out


lr_scores_jit = _accel.njit(_lr_scores_loop)


def lr_scores_np(params, indptr, indices, data):
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=params[indices] * data, minlength=n) + params[-1]


def _lr_train_epoch_loop(params, m, v, step, indptr, indices, data, labels, order,
                         batch_size, lr, beta1, beta2, eps):
    dim = params.shape[0] - 1
    grad = np.zeros(dim + 1)
    n = order.shape[0]
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        inv = 1.0 / (stop - start)
        grad[:] = 0.0
        for k in range(start, stop):
            i = order[k]
            s = params[dim]
            for p in range(indptr[i], indptr[i + 1]):
                s += params[indices[p]] * data[p]
            r = (_sigmoid_jit(s) - labels[i]) * inv
            for p in range(indptr[i], indptr[i + 1]):
                grad[indices[p]] += r * data[p]
            grad[dim] += r
        step += 1
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        for j in range(dim + 1):
            g = grad[j]
            m[j] = beta1 * m[j] + (1.0 - beta1) * g
            v[j] = beta2 * v[j] + (1.0 - beta2) * (g * g)
            params[j] = params[j] - lr * (m[j] / c1) / (math.sqrt(v[j] / c2) + eps)
    return step


lr_train_epoch_jit = _accel.njit(_lr_train_epoch_loop)


def lr_train_epoch_np(params, m, v, step, indptr, indices, data, labels, order,
                      batch_size, lr, beta1, beta2, eps):
    dim = len(params) - 1
    n = len(order)
    lengths = np.diff(indptr)
    for start in range(0, n, batch_size):
        rows = order[start:start + batch_size]
        counts = lengths[rows]
        pos = np.concatenate([np.arange(indptr[i], indptr[i + 1]) for i in rows])
        owner = np.repeat(np.arange(len(rows)), counts)
        idx = indices[pos]
        vals = data[pos]
        s = np.bincount(owner, weights=params[idx] * vals, minlength=len(rows)) + params[dim]
        r = (sigmoid(s) - labels[rows]) * (1.0 / len(rows))
        grad = np.bincount(idx, weights=r[owner] * vals, minlength=dim + 1)
        grad[dim] += r.sum()
        step += 1
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * (grad * grad)
        params -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return step


def sigmoid(s):
    """Numerically stable logistic function on arrays."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lr_scores(params, indptr, indices, data):
    if _accel.USE_NUMBA:
        return lr_scores_jit(params, indptr, indices, data)
    return lr_scores_np(params, indptr, indices, data)


def lr_train_epoch(params, m, v, step, indptr, indices, data, labels, order,
                   batch_size, lr, beta1, beta2, eps):
    """One shuffled epoch of mini-batch Adam, updating params/m/v in place.

    Returns the new Adam step count.
    """
    fn = lr_train_epoch_jit if _accel.USE_NUMBA else lr_train_epoch_np
    return fn(params, m, v, int(step), indptr, indices, data, labels, order,
              int(batch_size), float(lr), float(beta1), float(beta2), float(eps))
