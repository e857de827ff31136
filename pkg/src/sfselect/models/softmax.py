"""Multinomial logistic regression objective.

Parameters are packed as ``theta = [W.ravel(), b]`` with ``W`` of shape
(n_classes, n_features). The objective is the mean cross-entropy of
``softmax(W x + b)`` plus ``lam / (2 n) * ||W||^2``; the bias is unpenalized.
"""

from __future__ import annotations

import numba
import numpy as np


def unpack(theta: np.ndarray, n_classes: int, n_features: int):
    W = theta[: n_classes * n_features].reshape(n_classes, n_features)
    b = theta[n_classes * n_features:]
    return W, b


@numba.njit(cache=True, nogil=True)
def loss_grad(theta, X, y, n_classes, lam):
    n, p = X.shape
    C = n_classes
    grad = np.zeros(C * p + C)
    z = np.empty(C)
    e = np.empty(C)
    loss = 0.0
    for i in range(n):
        zmax = -np.inf
        for c in range(C):
            acc = theta[C * p + c]
            for j in range(p):
                acc += theta[c * p + j] * X[i, j]
            z[c] = acc
            if acc > zmax:
                zmax = acc
        s = 0.0
        for c in range(C):
            e[c] = np.exp(z[c] - zmax)
            s += e[c]
        loss += zmax + np.log(s) - z[y[i]]
        inv = 1.0 / s
        for c in range(C):
            r = e[c] * inv
            if c == y[i]:
                r -= 1.0
            for j in range(p):
                grad[c * p + j] += r * X[i, j]
            grad[C * p + c] += r
    loss /= n
    for t in range(C * p + C):
        grad[t] /= n
    reg = 0.0
    for t in range(C * p):
        reg += theta[t] * theta[t]
        grad[t] += lam / n * theta[t]
    loss += 0.5 * lam / n * reg
    return loss, grad


def logits(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # per-feature accumulation avoids BLAS, whose summation order can vary
    Z = np.broadcast_to(b, (X.shape[0], len(b))).copy()
    for j in range(X.shape[1]):
        Z += X[:, j, None] * W[None, :, j]
    return Z


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)
