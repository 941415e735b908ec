"""Pure numpy versions of the dense pair kernels.

The far-field part of the Gagliardo energy is

    E(U) = sum_{i<j} W[i, j] |U_i - U_j|^p

with W symmetric and zero on the diagonal. Rows are processed in blocks so
memory stays at O(block * P).
"""
from __future__ import annotations

import numpy as np

_BLOCK = 256


def phi_p(t, p: float):
    """|t|^{p-2} t, continued by 0 at t = 0 (needed when 1 < p < 2)."""
    t = np.asarray(t)
    if p == 2.0:
        return t
    a = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a ** (p - 2.0) * t, 0.0)


def pair_energy(U: np.ndarray, W: np.ndarray, p: float) -> float:
    U = np.ascontiguousarray(U, dtype=float)
    P = U.size
    total = 0.0
    for i0 in range(0, P, _BLOCK):
        i1 = min(P, i0 + _BLOCK)
        D = np.abs(U[i0:i1, None] - U[None, :])
        if p == 2.0:
            D *= D
        else:
            D **= p
        total += float(np.sum(W[i0:i1] * D))
    return 0.5 * total


def pair_grad(U: np.ndarray, W: np.ndarray, p: float) -> tuple[float, np.ndarray]:
    """Energy and gradient dE/dU_i = p sum_j W_ij |U_i-U_j|^{p-2}(U_i-U_j)."""
    U = np.ascontiguousarray(U, dtype=float)
    P = U.size
    g = np.empty(P)
    total = 0.0
    for i0 in range(0, P, _BLOCK):
        i1 = min(P, i0 + _BLOCK)
        D = U[i0:i1, None] - U[None, :]
        if p == 2.0:
            G = W[i0:i1] * D
        else:
            G = W[i0:i1] * phi_p(D, p)
        g[i0:i1] = p * G.sum(axis=1)
        total += float(np.sum(G * D))
    return 0.5 * total, g
