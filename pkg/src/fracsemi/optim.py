"""Preconditioned L-BFGS with backtracking for the discrete energies."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import SolveConfig


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    residual: float
    converged: bool
    message: str = ""


def lbfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    cfg: SolveConfig,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    residual: Callable[[np.ndarray], float] | None = None,
    tol: float | None = None,
) -> OptResult:
    """Minimize ``fun`` (value and gradient) from ``x0``.

    ``precond`` applies an SPD approximation of the inverse Hessian and
    serves as the initial matrix of the two-loop recursion. ``residual``
    maps a gradient to the scalar stopping measure (default: max norm).
    """
    precond = precond or (lambda g: g)
    residual = residual or (lambda g: float(np.max(np.abs(g))) if g.size else 0.0)
    tol = cfg.tol if tol is None else tol
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    hist: deque = deque(maxlen=cfg.memory)
    res = residual(g)
    stall = 0
    for it in range(1, cfg.max_iter + 1):
        if res <= tol:
            return OptResult(x, f, g, it - 1, res, True)
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(hist):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        r = precond(q)
        if hist:
            s, y, rho = hist[-1]
            Py = precond(y)
            r *= np.dot(s, y) / np.dot(y, Py)
        for (s, y, rho), a in zip(hist, reversed(alphas)):
            b = rho * np.dot(y, r)
            r += (a - b) * s
        d = -r
        slope = float(np.dot(g, d))
        if not slope < 0:
            hist.clear()
            d = -precond(g)
            slope = float(np.dot(g, d))
            if not slope < 0:
                return OptResult(x, f, g, it, res, False, "no descent direction")
        t = 1.0
        accepted = False
        for _ in range(60):
            xn = x + t * d
            fn, gn = fun(xn)
            if not np.isfinite(fn):
                t *= cfg.backtrack
                continue
            if fn <= f + cfg.armijo * t * slope:
                accepted = True
                break
            # near the minimizer energy differences drown in roundoff;
            # fall back to gradient decrease
            if fn <= f + 1e-12 * max(1.0, abs(f)) and residual(gn) < res:
                accepted = True
                break
            t *= cfg.backtrack
        if not accepted:
            if hist:
                hist.clear()
                stall += 1
                if stall < 3:
                    continue
            return OptResult(x, f, g, it, res, False, "line search failed")
        s = xn - x
        y = gn - g
        sy = float(np.dot(s, y))
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            hist.append((s, y, 1.0 / sy))
        x, f, g = xn, fn, gn
        res = residual(g)
    return OptResult(x, f, g, cfg.max_iter, res, res <= tol, "iteration budget exhausted")
