"""Solution operator K, principal eigenpair and boundary diagnostics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels_py import phi_p
from .errors import ConfigurationError, ConvergenceError, ResolutionError
from .geometry import DomainSpec, Mesh, build_mesh
from .gridfunction import GridFunction
from .optim import lbfgs
from .params import Params, SolveConfig
from .space import Discretization, get_space, linear_companion


@dataclass
class SolveReport:
    solution: GridFunction
    residual: float
    iterations: int
    energy: float
    hopf_min: float
    weighted_norm: float
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "residual": self.residual,
            "iterations": self.iterations,
            "energy": self.energy,
            "hopf_min": self.hopf_min,
            "weighted_norm": self.weighted_norm,
            "converged": self.converged,
            "sup_norm": self.solution.sup_norm(),
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def solution_rows(u: GridFunction, s: float):
    d = u.mesh.distance()
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(d > 0, u.values / d**s, 0.0)
    return zip(u.mesh.nodes, u.values, d, q)


def write_solution_csv(u: GridFunction, s: float, path: str | Path) -> Path:
    from .io import fmt

    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u", "d", "u_over_ds"])
        for row in solution_rows(u, s):
            w.writerow([fmt(v) for v in row])
    return path


# --- diagnostics -------------------------------------------------------------


def hopf_quotient(u: GridFunction, prm: Params, delta: float | None = None) -> dict:
    """Extrema of u/d^s over the nodes with 0 < d < delta."""
    delta = u.mesh.domain.delta if delta is None else delta
    d = u.mesh.distance()
    layer = (d > 0) & (d < delta)
    if not np.any(layer):
        raise ResolutionError("no mesh nodes inside the boundary layer", field="delta")
    q = u.values[layer] / d[layer] ** prm.s
    return {"min": float(q.min()), "max": float(q.max()), "nodes": int(layer.sum())}


def weighted_norm(u: GridFunction, prm: Params) -> float:
    """max over interior nodes of |u|/d^s."""
    d = u.mesh.distance()
    m = d > 0
    return float(np.max(np.abs(u.values[m]) / d[m] ** prm.s)) if np.any(m) else 0.0


def _hopf_or_nan(u: GridFunction, prm: Params) -> float:
    try:
        return hopf_quotient(u, prm)["min"]
    except ResolutionError:
        return math.nan


def rayleigh_quotient(u: GridFunction, prm: Params) -> float:
    disc = get_space(u.mesh, prm)
    den = disc.lp_norm(u.values, prm.p) ** prm.p
    if den == 0:
        raise ConfigurationError("the Rayleigh quotient needs a nonzero function")
    return disc.energy(u.values) / den


# --- the solution operator --------------------------------------------------


def _residual_measure(disc: Discretization):
    m = disc.lumped_mass[disc.free]
    return lambda g: float(np.max(np.abs(g) / m)) if g.size else 0.0


def solve_load(
    disc: Discretization,
    b: np.ndarray,
    cfg: SolveConfig,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int, float]:
    """Minimize [u]^p/p - b.u over free values; returns (u_full, J, iters, residual).

    ``b`` is a full nodal load vector (int f phi_i); a warm start ``x0``
    may be given as a full nodal array.
    """
    p = disc.p
    free = disc.free
    bf = np.asarray(b, dtype=float)[free]
    resid = _residual_measure(disc)
    if not np.any(bf):
        return np.zeros(disc.n), 0.0, 0, 0.0

    def fun(x):
        u = disc.to_full(x)
        E, G = disc.energy_grad(u)
        return E / p - float(np.dot(bf, x)), G[free] / p - bf

    if p == 2.0:
        x = disc.solve_linear(bf)
        J, g = fun(x)
        return disc.to_full(x), J, 1, resid(g)

    lin = linear_companion(disc)
    if x0 is not None:
        start = np.asarray(x0, dtype=float)[free].copy()
    elif cfg.initial_guess == "linear":
        start = lin.solve_linear(bf)
        A0 = disc.energy(disc.to_full(start))
        c = float(np.dot(bf, start))
        if A0 > 0 and c > 0:
            start *= (c / A0) ** (1.0 / (p - 1.0))
        else:
            start = np.zeros_like(bf)
    else:
        start = np.zeros_like(bf)
    if not np.any(start):
        # one preconditioned gradient step with exact scaling
        start = lin.solve_linear(bf)
    res = lbfgs(fun, start, cfg, precond=lin.solve_linear, residual=resid)
    u = disc.to_full(res.x)
    if not res.converged:
        raise ConvergenceError(
            f"solve did not converge ({res.message}); residual {res.residual:.3e}",
            payload={"solution": u, "residual": res.residual, "iterations": res.iterations},
        )
    return u, res.value, res.iterations, res.residual


def _report(disc: Discretization, u: np.ndarray, J: float, iters: int, res: float, prm: Params) -> SolveReport:
    gf = GridFunction(disc.mesh, u)
    return SolveReport(gf, res, iters, J, _hopf_or_nan(gf, prm), weighted_norm(gf, prm))


def solve_K(f: GridFunction, prm: Params, cfg: SolveConfig | None = None, x0: GridFunction | None = None) -> SolveReport:
    """Weak solution of (-Delta)_p^s u = f with u = 0 outside the domain."""
    cfg = cfg or SolveConfig()
    if not isinstance(f, GridFunction):
        raise ConfigurationError("f must be a GridFunction")
    disc = get_space(f.mesh, prm)
    b = disc.load_vector(f.values)
    try:
        u, J, it, res = solve_load(disc, b, cfg, None if x0 is None else x0.values)
    except ConvergenceError as exc:
        best = exc.payload["solution"]
        exc.payload["report"] = _report(disc, best, math.nan, exc.payload["iterations"], exc.payload["residual"], prm)
        raise
    return _report(disc, u, J, it, res, prm)


def J_value(u: GridFunction, f: GridFunction, prm: Params) -> float:
    disc = get_space(u.mesh, prm)
    return disc.energy(u.values) / prm.p - float(np.dot(disc.load_vector(f.values), u.values))


def default_mesh(prm: Params, n: int = 513, dom: DomainSpec | None = None) -> Mesh:
    if dom is None:
        dom = DomainSpec.interval() if prm.N == 1 else DomainSpec.ball(1.0, prm.N)
    return build_mesh(dom, n, "graded", 2.0)


# --- eigenpair ---------------------------------------------------------------


@dataclass
class EigenResult:
    lambda1: float
    phi1: GridFunction
    iterations: int
    history: list

    def __getitem__(self, key):
        return getattr(self, key)

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "iterations": self.iterations, "min_interior": float(self.phi1.free_values.min())}


def principal_eigenpair(prm: Params, cfg: SolveConfig | None = None, mesh: Mesh | None = None) -> EigenResult:
    """Inverse iteration u <- K(lambda |u|^{p-2} u), |.| and L^p renormalization."""
    cfg = cfg or SolveConfig()
    mesh = mesh or default_mesh(prm)
    disc = get_space(mesh, prm)
    p = prm.p
    inner = SolveConfig(max_iter=cfg.max_iter, tol=cfg.tol, memory=cfg.memory, armijo=cfg.armijo, backtrack=cfg.backtrack)

    def normalize(u):
        return u / disc.lp_norm(u, p)

    u, *_ = solve_load(disc, disc.load_vector(np.where(mesh.fixed, 0.0, 1.0)), inner)
    u = normalize(np.abs(u))
    lam = disc.energy(u)
    history = [lam]
    max_outer = int(cfg.extra.get("max_outer", 200))
    for it in range(1, max_outer + 1):
        Bu = disc.interpolate(u)
        g = disc.pair_with_basis(phi_p(Bu, p)) if p != 2.0 else disc.mass_matrix @ u
        try:
            v, *_ = solve_load(disc, lam * g, inner, x0=u)
        except ConvergenceError as exc:
            raise ConvergenceError("eigen iteration stagnated in the inner solve", payload=exc.payload) from exc
        u = normalize(np.abs(v))
        lam_new = disc.energy(u)
        history.append(lam_new)
        if abs(lam_new - lam) <= cfg.tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    else:
        raise ConvergenceError("eigen iteration did not settle", payload={"history": history})
    phi = GridFunction(mesh, u)
    return EigenResult(rayleigh_quotient(phi, prm), phi, it, history)


# --- comparison --------------------------------------------------------------


def comparison_check(
    f1: GridFunction, f2: GridFunction, prm: Params, cfg: SolveConfig | None = None, tol: float = 1e-6
) -> dict:
    f1._check(f2)
    if np.any(f1.values > f2.values):
        raise ConfigurationError("comparison needs f1 <= f2 at every node")
    r1 = solve_K(f1, prm, cfg)
    r2 = solve_K(f2, prm, cfg)
    diff = r2.solution.values - r1.solution.values
    mn = float(diff[f1.mesh.free].min())
    return {"min_difference": mn, "pass": bool(mn >= -tol), "u1": r1.solution, "u2": r2.solution}
