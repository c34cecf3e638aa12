"""Digamma and trigamma evaluated by recurrence shift plus asymptotic series.

Inputs in this package are Dirichlet parameters, so the domain of interest is
x >= 1; both functions are still implemented for all x > 0. Arguments below
the shift threshold are pushed up with the recurrence psi(x) = psi(x+1) - 1/x
(and psi'(x) = psi'(x+1) + 1/x^2), after which the asymptotic expansion with
Bernoulli terms through x^-12 is accurate to ~1e-12.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

_SHIFT_THRESHOLD = 6.0


def digamma(x):
    """psi(x) for scalar or array input, x > 0 elementwise."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("digamma requires finite x > 0")
    z = arr.copy() if arr.ndim else arr.reshape(1).copy()
    acc = np.zeros_like(z)
    while True:
        small = z < _SHIFT_THRESHOLD
        if not small.any():
            break
        acc[small] -= 1.0 / z[small]
        z[small] += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    # Horner form of sum_k B_{2k} / (2k z^{2k}) for k = 1..6
    tail = 1.0 / 12.0 - inv2 * (
        1.0 / 120.0
        - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))
    )
    out = acc + np.log(z) - 0.5 * inv - inv2 * tail
    if arr.ndim == 0:
        return float(out[0])
    return out


def trigamma(x):
    """psi'(x) for scalar or array input, x > 0 elementwise."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("trigamma requires finite x > 0")
    z = arr.copy() if arr.ndim else arr.reshape(1).copy()
    acc = np.zeros_like(z)
    while True:
        small = z < _SHIFT_THRESHOLD
        if not small.any():
            break
        acc[small] += 1.0 / (z[small] * z[small])
        z[small] += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    # sum_k B_{2k} z^{-2k-1} for k = 1..6
    tail = 1.0 / 6.0 - inv2 * (
        1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0))))
    )
    out = acc + inv + 0.5 * inv2 + inv * inv2 * tail
    if arr.ndim == 0:
        return float(out[0])
    return out
