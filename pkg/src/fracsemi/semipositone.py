"""The rescaled semipositone problem (-Delta)_p^s w = w_+^r - gamma^r.

Fixed points of w -> K(a w_+^r - c) are computed by a damped Picard map
followed by a scalar amplitude correction onto the Nehari set
t -> A(t w) = <F(t w), t w>. Without that correction the map expands
along w (its linearization has eigenvalue r/(p-1) > 1 there), so plain
damping cannot converge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dirichlet import SolveReport, default_mesh, hopf_quotient, principal_eigenpair, solve_load, weighted_norm
from .errors import BranchError, ConfigurationError, ConvergenceError, ResolutionError
from .geometry import DomainSpec, Mesh
from .gridfunction import GridFunction
from .params import Params, SolveConfig
from .space import Discretization, get_space


@dataclass(frozen=True)
class ContinuationConfig:
    gammas: tuple = tuple(np.round(np.arange(0.0, 2.0001, 0.05), 10))
    solve: SolveConfig = field(default_factory=SolveConfig)
    layer_width: float | None = None
    omega: float = 0.3
    refine: bool = True
    refine_tol: float = 0.01
    max_iter: int = 3000

    def __post_init__(self) -> None:
        g = np.asarray(self.gammas, dtype=float)
        if g.size < 2 or g[0] != 0.0 or not np.all(np.diff(g) > 0):
            raise ConfigurationError("gammas must start at 0 and increase strictly", field="gammas")
        object.__setattr__(self, "gammas", tuple(float(x) for x in g))
        if not (0 < self.omega <= 1):
            raise ConfigurationError("omega must lie in (0, 1]", field="omega")


@dataclass
class BranchPoint:
    gamma: float
    w: GridFunction
    residual: float
    hopf_min: float
    sup_norm: float
    positive: bool
    interior_min: float = math.nan
    iterations: int = 0

    def row(self) -> dict:
        return {
            "gamma": self.gamma,
            "sup_norm": self.sup_norm,
            "hopf_min": self.hopf_min,
            "residual": self.residual,
            "positive_flag": int(self.positive),
        }


# --- fixed-point machinery ---------------------------------------------------


def _load(disc: Discretization, w: np.ndarray, r: float, a: float, c: float) -> np.ndarray:
    # consistent-mass load of the P1 interpolant of a w_+^r - c; the
    # boundary nodes carry F(0) = -c
    F = a * np.maximum(w, 0.0) ** r - c
    return disc.mass_matrix @ F


def _apply_K(disc, w, r, a, c, cfg: SolveConfig, x0=None) -> np.ndarray:
    u, *_ = solve_load(disc, _load(disc, w, r, a, c), cfg, x0=x0)
    return u


def weak_residual_norm(disc: Discretization, w: np.ndarray, r: float, a: float, c: float) -> float:
    """max_i |<A(w), phi_i> - <a w_+^r - c, phi_i>| / m_i over free nodes."""
    _, G = disc.energy_grad(w)
    g = (G / disc.p - _load(disc, w, r, a, c))[disc.free]
    return float(np.max(np.abs(g) / disc.lumped_mass[disc.free])) if g.size else 0.0


def _nehari_scale(disc: Discretization, w: np.ndarray, r: float, a: float, c: float) -> float:
    """Root t > 0 of t^{p-1} A(w) = a t^r <w_+^r, w> - c <1, w> (1 when none exists)."""
    p = disc.p
    A = disc.energy(w)
    M = disc.mass_matrix
    A_r = a * float(w @ (M @ np.maximum(w, 0.0) ** r))
    C = c * float(w @ (M @ np.ones_like(w)))
    if A <= 0 or A_r <= 0 or C < 0:
        return 1.0

    t0 = (A / A_r) ** (1.0 / (r - p + 1.0))
    if C == 0:
        return t0

    def g(t):
        return t**r * A_r - C - t ** (p - 1.0) * A

    hi = max(2.0, 2 * t0)
    while g(hi) <= 0:
        hi *= 2.0
        if hi > 1e12:
            return 1.0
    lo = t0 if g(t0) < 0 else 0.0
    if g(lo) >= 0:
        return 1.0
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def fixed_point(
    disc: Discretization,
    w0: np.ndarray,
    r: float,
    a: float,
    c: float,
    cfg: SolveConfig,
    omega: float = 0.3,
    max_iter: int = 3000,
    tol: float | None = None,
) -> tuple[np.ndarray, float, int]:
    """Damped, amplitude-corrected Picard iteration; returns (w, residual, iterations).

    The residual is ||w - K(F(w))||_inf at the returned w; the iteration
    stops once it and the weak residual of w are both below ``tol``. The
    step ``omega`` is halved whenever the residual grows by more than 2x.
    """
    tol = cfg.tol if tol is None else tol
    w = np.array(w0, dtype=float)
    best = (math.inf, w)
    prev = math.inf
    v = None
    for it in range(1, max_iter + 1):
        v = _apply_K(disc, w, r, a, c, cfg, x0=v)
        res = float(np.max(np.abs(w - v)))
        if res < best[0]:
            best = (res, w.copy())
        if res <= tol and weak_residual_norm(disc, w, r, a, c) <= tol:
            return w, res, it
        if res > 2 * prev and omega > 1e-3:
            omega *= 0.5
            w = best[1].copy()
            prev = best[0]
            v = None
            continue
        prev = res
        wt = (1.0 - omega) * w + omega * v
        w = _nehari_scale(disc, wt, r, a, c) * wt
        if not np.all(np.isfinite(w)):
            break
    raise ConvergenceError(
        f"fixed-point iteration stalled at residual {best[0]:.3e}",
        payload={"w": best[1], "residual": best[0]},
    )


def _interior_min(w: GridFunction) -> float:
    return float(w.free_values.min())


# --- public operations -------------------------------------------------------


def solve_lane_emden(
    prm: Params,
    cfg: SolveConfig | None = None,
    mesh: Mesh | None = None,
    lambda1: float | None = None,
) -> SolveReport:
    """Nontrivial nonnegative solution of (-Delta)_p^s w = w_+^r.

    Nontriviality is certified against ||w||_inf >= lambda1^{1/(r-p+1)};
    ``lambda1`` is computed on the same mesh when not given.
    """
    cfg = cfg or SolveConfig()
    r = prm.require_r()
    mesh = mesh or default_mesh(prm, 257)
    disc = get_space(mesh, prm)
    omega = float(cfg.extra.get("omega", 1.0))
    start = _apply_K(disc, np.ones(disc.n), r, 0.0, -1.0, cfg)
    start = _nehari_scale(disc, start, r, 1.0, 0.0) * start
    w, res, it = fixed_point(disc, start, r, 1.0, 0.0, cfg, omega=omega, max_iter=int(cfg.extra.get("max_fp", 3000)))
    if not np.max(np.abs(w)) > 0:
        raise ConvergenceError("iteration collapsed to zero")
    gf = GridFunction(mesh, w)
    if lambda1 is None:
        lambda1 = principal_eigenpair(prm, cfg, mesh).lambda1
    floor = lambda1 ** (1.0 / (r - prm.p + 1.0))
    rep = SolveReport(gf, res, it, math.nan, hopf_quotient(gf, prm)["min"], weighted_norm(gf, prm))
    rep.extra.update(
        {
            "lambda1": lambda1,
            "sup_floor": floor,
            "nontrivial": bool(gf.sup_norm() >= floor),
            "weak_residual": weak_residual_norm(disc, w, r, 1.0, 0.0),
        }
    )
    return rep


def residual_S(gamma: float, w: GridFunction, prm: Params, cfg: SolveConfig | None = None) -> float:
    """||w - K(w_+^r - gamma^r)||_inf."""
    cfg = cfg or SolveConfig()
    r = prm.require_r()
    disc = get_space(w.mesh, prm)
    v = _apply_K(disc, w.values, r, 1.0, gamma**r, cfg, x0=w.values)
    return float(np.max(np.abs(w.values - v)))


def _branch_point(disc, prm, gamma, w, res, it, layer) -> BranchPoint:
    gf = GridFunction(disc.mesh, w)
    try:
        hq = hopf_quotient(gf, prm, layer)["min"]
    except ResolutionError:
        hq = math.nan
    imin = _interior_min(gf)
    pos = bool(hq > 0 and imin > 0)
    return BranchPoint(float(gamma), gf, float(res), hq, gf.sup_norm(), pos, imin, it)


def continue_in_gamma(
    cfg: ContinuationConfig,
    prm: Params,
    mesh: Mesh | None = None,
    start: SolveReport | None = None,
) -> list[BranchPoint]:
    """Branch of positive solutions from gamma = 0, stopped at the first failure.

    After a failure the interval between the last good gamma and the
    failed one is bisected until its relative width is below
    ``cfg.refine_tol``; every successful bisection point joins the branch.
    """
    r = prm.require_r()
    mesh = mesh or (start.solution.mesh if start is not None else default_mesh(prm, 257))
    disc = get_space(mesh, prm)
    layer = cfg.layer_width if cfg.layer_width is not None else 0.5 * mesh.domain.delta
    if start is None:
        start = solve_lane_emden(prm, cfg.solve, mesh)
    w = start.solution.values.copy()
    branch = [_branch_point(disc, prm, 0.0, w, start.residual, start.iterations, layer)]

    def attempt(gamma, w_prev):
        try:
            wn, res, it = fixed_point(disc, w_prev, r, 1.0, gamma**r, cfg.solve, cfg.omega, cfg.max_iter)
        except ConvergenceError:
            return None
        bp = _branch_point(disc, prm, gamma, wn, res, it, layer)
        return bp if bp.positive else None

    failed = None
    for gamma in cfg.gammas[1:]:
        bp = attempt(gamma, branch[-1].w.values)
        if bp is None:
            failed = gamma
            break
        branch.append(bp)
    if failed is not None and cfg.refine:
        lo = branch[-1].gamma
        hi = failed
        while hi - lo > cfg.refine_tol * hi:
            mid = 0.5 * (lo + hi)
            bp = attempt(mid, branch[-1].w.values)
            if bp is None:
                hi = mid
            else:
                branch.append(bp)
                lo = mid
    if len(branch) == 1:
        raise BranchError("no positive solution with gamma > 0 at this resolution", payload={"branch": branch})
    return branch


def gamma_star(branch: list[BranchPoint]) -> float:
    return max(bp.gamma for bp in branch if bp.positive)


def unscale_to_original(w: GridFunction, gamma: float, prm: Params) -> dict:
    """u = w/gamma and mu = gamma^{r+1-p}."""
    r = prm.require_r()
    if gamma == 0:
        raise ZeroDivisionError("gamma = 0 has no original-problem counterpart")
    return {"u": w * (1.0 / gamma), "mu": gamma ** (r + 1.0 - prm.p)}


def solve_original(
    mu: float, prm: Params, cfg: SolveConfig | None = None, u0: GridFunction | None = None, mesh: Mesh | None = None
) -> tuple[GridFunction, float, int]:
    """Direct solve of (-Delta)_p^s u = mu (u_+^r - 1) by the same iteration."""
    cfg = cfg or SolveConfig()
    r = prm.require_r()
    if u0 is None:
        mesh = mesh or default_mesh(prm, 257)
        disc = get_space(mesh, prm)
        w0 = solve_lane_emden(prm, cfg, mesh).solution.values
        gamma = mu ** (1.0 / (r + 1.0 - prm.p))
        start = w0 / gamma
    else:
        disc = get_space(u0.mesh, prm)
        start = u0.values
    u, res, it = fixed_point(disc, start, r, mu, mu, cfg, float(cfg.extra.get("omega", 0.3)))
    return GridFunction(disc.mesh, u), res, it


def gidas_spruck_rescale(u: GridFunction, prm: Params, q: float | None = None) -> dict:
    """v(y) = u(x_k + mu_k y)/M_k with mu_k = M_k^{-(q-(p-1))/sp}.

    ``q`` defaults to ``prm.q`` and then to ``prm.r``.
    """
    q = q if q is not None else (prm.q if prm.q is not None else prm.r)
    if q is None:
        raise ConfigurationError("an exponent q (or r) is required", field="q")
    vals = u.values
    M = float(vals.max())
    if not M > 0:
        raise ConfigurationError("u must be nontrivial and nonnegative")
    if np.any(vals < -1e-14 * M):
        raise ConfigurationError("u must be nonnegative")
    k = int(np.argmax(vals))
    xk = float(u.mesh.nodes[k])
    mu_k = M ** (-(q - (prm.p - 1.0)) / prm.sp)
    dom = u.mesh.domain
    if dom.is_radial:
        R = dom.radius / mu_k
        new_dom = DomainSpec.ball(R, dom.N, delta=min(dom.delta / mu_k, 0.5 * R))
        y = u.mesh.nodes / mu_k
    else:
        a, b = dom.bounds
        lo, hi = (a - xk) / mu_k, (b - xk) / mu_k
        inr = 0.5 * (hi - lo)
        new_dom = DomainSpec.interval(lo, hi, delta=min(dom.delta / mu_k, 0.5 * inr))
        y = (u.mesh.nodes - xk) / mu_k
    # guard roundoff in the shifted origin
    if not dom.is_radial:
        y[k] = 0.0
    mesh = Mesh(new_dom, y, u.mesh.grading, u.mesh.exponent, u.mesh.fixed)
    v = GridFunction(mesh, np.clip(vals / M, 0.0, 1.0))
    return {"v": v, "mu_k": mu_k, "M_k": M, "x_k": xk}
