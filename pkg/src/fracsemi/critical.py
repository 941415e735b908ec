"""Critical semipositone problem with truncated energy E_mu.

    (-Delta)_p^s u = lambda u_+^{p-1} + u_+^{p*-1} - mu f(u)

with f the truncation 1 (t >= 0), 1 - |t|^{p-1} (-1 < t < 0), 0 (t <= -1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dirichlet import hopf_quotient, principal_eigenpair, solve_load
from .errors import ConfigurationError, ConvergenceError, ResolutionError, SaddleNotFoundError
from .geometry import DomainSpec, Mesh
from .gridfunction import GridFunction
from .optim import lbfgs
from .params import Params, SolveConfig
from .space import Discretization, get_space, linear_companion


# --- truncation --------------------------------------------------------------


def truncation_f(t, p: float):
    t = np.asarray(t, dtype=float)
    mid = 1.0 - np.abs(t) ** (p - 1.0)
    out = np.where(t >= 0, 1.0, np.where(t > -1.0, mid, 0.0))
    return out if out.ndim else float(out)


def _truncation_primitive(t: np.ndarray, p: float) -> np.ndarray:
    # G with G' = f and G(0) = 0
    mid = t + np.abs(t) ** p / p
    return np.where(t >= 0, t, np.where(t > -1.0, mid, -(1.0 - 1.0 / p)))


# --- energy and gradient -----------------------------------------------------


def _coeffs(prm: Params) -> tuple[float, float, float]:
    prm.require_critical()
    lam = 0.0 if prm.lam is None else float(prm.lam)
    mu = 0.0 if prm.mu is None else float(prm.mu)
    return lam, mu, prm.p_star


def _energy(disc: Discretization, u: np.ndarray, prm: Params) -> float:
    lam, mu, q = _coeffs(prm)
    p = prm.p
    U = disc.interpolate(u)
    Up = np.maximum(U, 0.0)
    bulk = disc.integrate(lam * Up**p / p + Up**q / q - mu * _truncation_primitive(U, p))
    return disc.energy(u) / p - bulk


def _energy_grad(disc: Discretization, u: np.ndarray, prm: Params) -> tuple[float, np.ndarray]:
    lam, mu, q = _coeffs(prm)
    p = prm.p
    U = disc.interpolate(u)
    Up = np.maximum(U, 0.0)
    E, G = disc.energy_grad(u)
    bulk = disc.integrate(lam * Up**p / p + Up**q / q - mu * _truncation_primitive(U, p))
    dens = lam * Up ** (p - 1.0) + Up ** (q - 1.0) - mu * truncation_f(U, p)
    g = G / p - disc.pair_with_basis(dens)
    g[disc.mesh.fixed] = 0.0
    return E / p - bulk, g


def energy_E_mu(u: GridFunction, prm: Params) -> float:
    return _energy(get_space(u.mesh, prm), u.values, prm)


def gradient_E_mu(u: GridFunction, prm: Params) -> GridFunction:
    """Nodal values <DE_mu(u), phi_i> (zero at the pinned nodes)."""
    _, g = _energy_grad(get_space(u.mesh, prm), u.values, prm)
    return GridFunction(u.mesh, g)


def gradient_norm(g: GridFunction, prm: Params) -> float:
    """max_i |g_i| / m_i, the strong-form size of a weak gradient."""
    disc = get_space(g.mesh, prm)
    free = g.mesh.free
    return float(np.max(np.abs(g.values[free]) / disc.lumped_mass[free]))


# --- bubbles -----------------------------------------------------------------


@dataclass(frozen=True)
class BubbleSpec:
    epsilon: float
    delta_cut: float
    theta_ratio: float = 2.0
    center: tuple | float | None = None
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive", field="epsilon")
        if not (0 < self.delta_cut <= 1):
            raise ConfigurationError("delta_cut must lie in (0, 1]", field="delta_cut")
        if self.epsilon > 0.5 * self.delta_cut:
            raise ConfigurationError("epsilon must not exceed delta_cut/2", field="epsilon")
        if not self.theta_ratio > 1:
            raise ConfigurationError("theta_ratio must exceed 1", field="theta_ratio")


def model_profile(rho, prm: Params, kappa: float = 1.0):
    """kappa (1 + rho^{p/(p-1)})^{-(N-sp)/p}."""
    rho = np.asarray(rho, dtype=float)
    p = prm.p
    return kappa * (1.0 + rho ** (p / (p - 1.0))) ** (-(prm.N - prm.sp) / p)


def scaled_profile(r, eps: float, prm: Params, kappa: float = 1.0):
    """U_eps(r) = eps^{-(N-sp)/p} U(r/eps)."""
    return eps ** (-(prm.N - prm.sp) / prm.p) * model_profile(np.asarray(r) / eps, prm, kappa)


def cutoff_slope(spec: BubbleSpec, prm: Params) -> float:
    """m = U_eps(delta) / (U_eps(delta) - U_eps(theta delta))."""
    a = scaled_profile(spec.delta_cut, spec.epsilon, prm, spec.kappa)
    b = scaled_profile(spec.theta_ratio * spec.delta_cut, spec.epsilon, prm, spec.kappa)
    return float(a / (a - b))


def _bubble_radius(mesh: Mesh, spec: BubbleSpec) -> np.ndarray:
    dom = mesh.domain
    if dom.is_radial:
        if spec.center is not None and not np.allclose(np.ravel(spec.center), dom.center):
            raise ConfigurationError("radial bubbles must sit at the ball center", field="center")
        return mesh.nodes
    c = 0.5 * (dom.a + dom.b) if spec.center is None else float(np.ravel(spec.center)[0])
    return np.abs(mesh.nodes - c)


def build_bubble(spec: BubbleSpec, prm: Params, mesh: Mesh) -> GridFunction:
    """u_{eps,delta} = G_{eps,delta}(U_eps(|x - c|)) sampled on ``mesh``."""
    dom = mesh.domain
    r = _bubble_radius(mesh, spec)
    reach = spec.theta_ratio * spec.delta_cut
    if dom.is_radial:
        room = dom.radius
    else:
        c = 0.5 * (dom.a + dom.b) if spec.center is None else float(np.ravel(spec.center)[0])
        room = min(c - dom.a, dom.b - c)
    if reach > room:
        raise ConfigurationError("bubble support leaves the domain", field="delta_cut")
    eps = spec.epsilon
    U = scaled_profile(r, eps, prm, spec.kappa)
    hi = scaled_profile(spec.delta_cut, eps, prm, spec.kappa)
    lo = scaled_profile(reach, eps, prm, spec.kappa)
    m = hi / (hi - lo)
    vals = np.where(r <= spec.delta_cut, U, np.where(r < reach, m * (U - lo), 0.0))
    vals = np.where(U >= hi, U, vals)
    vals[mesh.fixed] = 0.0
    return GridFunction(mesh, vals)


# --- Sobolev constant -----------------------------------------------------


def sobolev_quotient(u: GridFunction, prm: Params) -> float:
    disc = get_space(u.mesh, prm)
    q = prm.p_star
    return disc.energy(u.values) / disc.lp_norm(u.values, q) ** prm.p


def sobolev_mesh(prm: Params, R: float, h0: float = 1.0 / 32, per_octave: int = 16) -> Mesh:
    """Nested meshes on B_R: spacing h0 up to radius 1, then geometric growth.

    Doubling R only appends nodes, so the admissible classes are nested.
    """
    if R < 1 or abs(math.log2(R) - round(math.log2(R))) > 1e-12:
        raise ConfigurationError("truncation radii must be powers of two >= 1", field="R")
    inner = np.arange(0.0, 1.0 + 0.5 * h0, h0)
    octaves = int(round(math.log2(R)))
    outer = 2.0 ** (np.arange(1, octaves * per_octave + 1) / per_octave)
    r = np.concatenate([inner, outer])
    r[-1] = R
    if prm.N == 1:
        dom = DomainSpec.interval(-R, R, delta=min(0.1 * R, 0.5))
        nodes = np.concatenate([-r[:0:-1], r])
    else:
        dom = DomainSpec.ball(R, prm.N, delta=min(0.1 * R, 0.5))
        nodes = r
    return Mesh(dom, nodes, "custom", 1.0)


def _minimize_quotient(disc: Discretization, prm: Params, u0: np.ndarray, cfg: SolveConfig) -> tuple[float, np.ndarray]:
    p, q = prm.p, prm.p_star
    free = disc.free

    def fun(x):
        u = disc.to_full(x)
        A, G = disc.energy_grad(u)
        U = disc.interpolate(u)
        Nq = disc.integrate(np.abs(U) ** q)
        dN = disc.pair_with_basis(q * np.abs(U) ** (q - 2.0) * U)
        den = Nq ** (p / q)
        Q = A / den
        dden = (p / q) * Nq ** (p / q - 1.0) * dN
        g = (G - Q * dden) / den
        return Q, g[free]

    lin = linear_companion(disc)
    scale = disc.energy(u0)
    res = lbfgs(fun, u0[free], cfg, precond=lambda g: scale * lin.solve_linear(g), tol=cfg.tol)
    return float(res.value), disc.to_full(res.x)


def sobolev_sweep(prm: Params, cfg: SolveConfig | None = None, radii=(8, 16, 32, 64, 128)) -> dict:
    """Minimized Sobolev quotients on B_R for the given radii, plus an extrapolation."""
    cfg = cfg or SolveConfig(max_iter=400, tol=1e-6)
    if math.isinf(prm.p_star):
        raise ConfigurationError("the Sobolev estimate needs sp < N", field="s")
    base = Params(s=prm.s, p=prm.p, N=prm.N)
    values = []
    for R in radii:
        mesh = sobolev_mesh(base, float(R))
        disc = get_space(mesh, base)
        r = np.abs(mesh.nodes)
        u0 = model_profile(r, base)
        u0 = np.where(mesh.fixed, 0.0, u0 - model_profile(float(R), base))
        Q, _ = _minimize_quotient(disc, base, u0, cfg)
        values.append(Q)
    values = np.array(values)
    alpha = prm.N - prm.sp
    if len(values) >= 2:
        extrap = values[-1] - (values[-2] - values[-1]) / (2.0**alpha - 1.0)
    else:
        extrap = values[-1]
    return {
        "radii": list(radii),
        "values": values.tolist(),
        "estimate": float(values[-1]),
        "extrapolated": float(extrap),
        "last_change": float(abs(values[-1] - values[-2]) / values[-1]) if len(values) > 1 else math.nan,
    }


def estimate_sobolev_constant(prm: Params, cfg: SolveConfig | None = None, radii=(8, 16, 32, 64, 128)) -> float:
    """S_{s,p} from the radius sweep: the quotient at the largest radius.

    The largest-radius value is an upper bound for the discrete class; the
    extrapolated value appears in ``sobolev_sweep``.
    """
    return sobolev_sweep(prm, cfg, radii)["estimate"]


# --- mountain pass -----------------------------------------------------------


@dataclass(frozen=True)
class PathConfig:
    R: float = 4.0
    nodes: int = 33
    sweeps: int = 200
    step: float = 0.5
    rho: float | None = None
    top: int = 3
    reparam_every: int = 10
    path_tol: float = 1e-3
    tol: float = 1e-6
    polish_iter: int = 3000
    omega: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.nodes < 8:
            raise ConfigurationError("path needs at least 8 nodes", field="nodes")
        if not self.R > 0:
            raise ConfigurationError("R must be positive", field="R")
        if self.rho is not None and not (0 < self.rho < self.R):
            raise ConfigurationError("rho must lie in (0, R)", field="rho")


@dataclass
class MountainPassResult:
    u_mu: GridFunction
    c_mu: float
    report: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return getattr(self, key)


def _ray_max(disc, u, prm, t0: float = 1.0) -> float:
    """argmax over t > 0 of E(t u), bracketing the sign change of d/dt E(tu)."""

    def dE(t):
        _, g = _energy_grad(disc, t * u, prm)
        return float(np.dot(g, u))

    a = t0
    fa = dE(a)
    if fa > 0:
        b = a * 1.5
        while dE(b) > 0:
            a, b = b, b * 1.5
            if b > 1e8:
                return t0
    else:
        b = a
        a = b / 1.5
        while dE(a) <= 0:
            b, a = a, a / 1.5
            if a < 1e-10:
                return t0
    return brentq(dE, a, b, xtol=1e-14, rtol=1e-14)


def _seminorm(disc, u, p) -> float:
    return disc.energy(u) ** (1.0 / p)


def _random_directions(mesh: Mesh, count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    dom = mesh.domain
    lo, hi = dom.bounds
    x = (mesh.nodes - lo) / (hi - lo)
    out = []
    for _ in range(count):
        c = rng.normal(size=6) / (1.0 + np.arange(6))
        v = sum(c[k] * np.sin((k + 1) * np.pi * x) for k in range(6)) if not dom.is_radial else sum(
            c[k] * np.cos((k + 0.5) * np.pi * x) for k in range(6)
        )
        v = np.where(mesh.fixed, 0.0, v)
        out.append(v)
    return out


def sphere_level(disc, prm, rho: float, dirs) -> float:
    vals = []
    for v in dirs:
        v = v / _seminorm(disc, v, prm.p)
        vals.append(_energy(disc, rho * v, prm))
    return float(min(vals))


def _reparametrize(disc, path: list[np.ndarray], p: float) -> list[np.ndarray]:
    """Equal arc length in the energy-space seminorm [.]."""
    P = np.array(path)
    seg = np.array([_seminorm(disc, P[k + 1] - P[k], p) for k in range(len(P) - 1)])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return path
    target = np.linspace(0.0, s[-1], len(path))
    out = [P[0]]
    for t in target[1:-1]:
        k = int(np.clip(np.searchsorted(s, t) - 1, 0, len(path) - 2))
        w = (t - s[k]) / max(s[k + 1] - s[k], 1e-300)
        out.append((1 - w) * P[k] + w * P[k + 1])
    out.append(P[-1])
    return out


def _polish(disc, prm, u, pc: PathConfig, cfg: SolveConfig):
    """Damped Picard on u = K(density(u)) with a ray correction to the peak of E(t u)."""
    lam, mu, q = _coeffs(prm)
    p = prm.p
    m = disc.lumped_mass[disc.free]
    omega = pc.omega
    best = (math.inf, u)
    prev = math.inf
    for it in range(1, pc.polish_iter + 1):
        _, g = _energy_grad(disc, u, prm)
        gn = float(np.max(np.abs(g[disc.free]) / m))
        if gn < best[0]:
            best = (gn, u.copy())
        if gn <= pc.tol:
            return u, gn, it
        if gn > 4 * prev and omega > 1e-3:
            omega *= 0.5
            u = best[1].copy()
            prev = best[0]
            continue
        prev = gn
        U = disc.interpolate(u)
        Up = np.maximum(U, 0.0)
        load = disc.pair_with_basis(lam * Up ** (p - 1.0) + Up ** (q - 1.0) - mu * truncation_f(U, p))
        v, *_ = solve_load(disc, load, cfg, x0=u)
        w = (1 - omega) * u + omega * v
        u = _ray_max(disc, w, prm) * w
    raise SaddleNotFoundError(
        f"critical point polish stalled at gradient {best[0]:.3e}", payload={"u": best[1], "gradient": best[0]}
    )


def mountain_pass_solve(
    prm: Params, pc: PathConfig, bubble: GridFunction, cfg: SolveConfig | None = None
) -> MountainPassResult:
    """Min-max over discrete paths from 0 to R*bubble, then a fixed-point polish."""
    cfg = cfg or SolveConfig()
    prm.require_critical()
    mesh = bubble.mesh
    disc = get_space(mesh, prm)
    lin = linear_companion(disc)
    e = bubble.values
    R = pc.R
    for _ in range(40):
        if _energy(disc, R * e, prm) <= 0:
            break
        R *= 2.0
    else:
        raise SaddleNotFoundError("no endpoint with E <= 0 along the bubble ray")
    M = pc.nodes
    path = [t * R * e for t in np.linspace(0.0, 1.0, M)]
    E = np.array([_energy(disc, v, prm) for v in path])
    free = disc.free
    m = disc.lumped_mass[free]
    start_max = float(E.max())
    gmax = math.inf
    sweeps = 0
    for sweeps in range(1, pc.sweeps + 1):
        order = np.argsort(E[1:-1])[::-1][: pc.top] + 1
        for k in order:
            _, g = _energy_grad(disc, path[k], prm)
            d = disc.to_full(lin.solve_linear(g[free]))
            # remove the tangent part in the preconditioner inner product
            tau = path[k + 1] - path[k - 1]
            tS = lin.energy(tau)
            if tS > 0:
                d = d - (float(np.dot(tau[free], g[free])) / tS) * tau
            if k == order[0]:
                gmax = float(np.max(np.abs(g[free]) / m))
            gap = min(_seminorm(disc, path[k + 1] - path[k], prm.p), _seminorm(disc, path[k] - path[k - 1], prm.p))
            dn = _seminorm(disc, d, prm.p)
            eta = pc.step if dn == 0 else min(pc.step, 0.5 * gap / dn)
            for _ in range(30):
                trial = path[k] - eta * d
                Et = _energy(disc, trial, prm)
                if Et < E[k]:
                    path[k], E[k] = trial, Et
                    break
                eta *= 0.5
        if sweeps % pc.reparam_every == 0:
            path = _reparametrize(disc, path, prm.p)
            E = np.array([_energy(disc, v, prm) for v in path])
        if gmax <= pc.path_tol:
            break
    k = int(np.argmax(E))
    path_level = float(E[k])
    u0 = path[k]
    u0 = _ray_max(disc, u0, prm) * u0
    u, gn, it = _polish(disc, prm, u0, pc, cfg)
    uf = GridFunction(mesh, u)
    c_mu = _energy(disc, u, prm)
    dirs = _random_directions(mesh, 50, pc.seed)
    rho = pc.rho if pc.rho is not None else 0.5 * _seminorm(disc, u, prm.p)
    c0 = sphere_level(disc, prm, rho, dirs)
    try:
        hq = hopf_quotient(uf, prm)["min"]
    except ResolutionError:
        hq = math.nan
    report = {
        "R": R,
        "start_max": start_max,
        "path_level": path_level,
        "path_profile": E.tolist(),
        "sweeps": sweeps,
        "polish_iterations": it,
        "gradient_norm": gn,
        "rho": rho,
        "c0": c0,
        "level_ok": bool(c_mu >= c0 > 0),
        "E_start": float(E[0]),
        "E_end": float(E[-1]),
        "hopf_min": hq,
    }
    return MountainPassResult(uf, float(c_mu), report)


# --- diagnostics -------------------------------------------------------------


def ps_threshold(mu: float, S_est: float, prm: Params, domain_volume: float) -> float:
    return (prm.s / prm.N) * S_est ** (prm.N / prm.sp) - (1.0 - 1.0 / prm.p) * mu * domain_volume


def ps_threshold_check(c_mu: float, mu: float, S_est: float, prm: Params, domain_volume: float) -> bool:
    if not S_est > 0:
        raise ConfigurationError("S_est must be positive", field="S_est")
    return bool(c_mu < ps_threshold(mu, S_est, prm, domain_volume))


def nehari_residual(u: GridFunction, prm: Params) -> float:
    """|[u]^p - int(lambda u^p + u^{p*} - mu u)| / max(1, [u]^p) for u > 0."""
    if np.any(u.free_values <= 0):
        raise ConfigurationError("the Nehari residual needs u > 0 in the domain")
    lam, mu, q = _coeffs(prm)
    disc = get_space(u.mesh, prm)
    A = disc.energy(u.values)
    U = disc.interpolate(u.values)
    rhs = disc.integrate(lam * np.abs(U) ** prm.p + np.abs(U) ** q - mu * U)
    return abs(A - rhs) / max(1.0, A)


def to_critical_form(v: GridFunction, mu: float, prm: Params) -> dict:
    """u = mu^{1/(p*-p)} v, turning lambda v^{p-1} + mu (v^{p*-1} - 1) into
    lambda u^{p-1} + u^{p*-1} - mu' with mu' = mu^{(p*-1)/(p*-p)}."""
    q = prm.p_star
    k = mu ** (1.0 / (q - prm.p))
    return {"u": v * k, "mu": mu ** ((q - 1.0) / (q - prm.p))}


def from_critical_form(u: GridFunction, mu_c: float, prm: Params) -> dict:
    q = prm.p_star
    mu = mu_c ** ((q - prm.p) / (q - 1.0))
    return {"v": u * (mu ** (-1.0 / (q - prm.p))), "mu": mu}
