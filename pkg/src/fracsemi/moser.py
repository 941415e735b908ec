"""Moser-iteration L^inf certificate and the elementary inequalities behind it.

The certificate needs a Sobolev-type exponent q > p. It is p* when sp < N.
Otherwise (e.g. N = 1, s = 1/2, p = 2) every finite exponent embeds, and
an effective q is used together with the domain constant

    S_q(Omega) = min [u]^p / ||u||_q^p

in place of S_{s,p}.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._kernels_py import phi_p
from .errors import ConfigurationError
from .gridfunction import GridFunction
from .params import Params, SolveConfig
from .space import Discretization, get_space, linear_companion
from .optim import lbfgs


# --- elementary inequalities -------------------------------------------------


_phi_p = phi_p


def _relative(lhs, rhs):
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return (rhs - lhs) / scale


def check_lemma_A1(samples: int, p: float, beta: float, seed: int = 0) -> float:
    """Largest relative excess of the right side over the left (<= 0 means it holds)."""
    if not p > 1 or not beta >= 1:
        raise ConfigurationError("needs p > 1 and beta >= 1")
    rng = np.random.default_rng(seed)
    a, b, t = rng.exponential(1.0, (3, samples))
    at, bt = np.minimum(a, t), np.minimum(b, t)
    lhs = _phi_p(a - b, p) * (at**beta - bt**beta)
    e = (beta + p - 1.0) / p
    rhs = beta * p**p / (beta + p - 1.0) ** p * np.abs(at**e - bt**e) ** p
    both_zero = (lhs == 0) & (rhs == 0)
    rel = np.where(both_zero, 0.0, _relative(lhs, rhs))
    return float(rel.max())


TEST_FUNCTIONS = {
    "square": (lambda x: x * x, lambda x: 2.0 * x),
    "soft_abs": (lambda x: np.sqrt(0.01 + x * x), lambda x: x / np.sqrt(0.01 + x * x)),
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
}


def check_lemma_A2(samples: int, p: float, phi="soft_abs", seed: int = 0) -> float:
    """Same measure for |a-b|^{p-2}(a-b)[c phi_p(phi'(a)) - t phi_p(phi'(b))]
    >= phi_p(phi(a) - phi(b)) (c - t).

    ``phi`` is a name from ``TEST_FUNCTIONS`` or a pair (phi, phi').
    """
    f, df = TEST_FUNCTIONS[phi] if isinstance(phi, str) else phi
    rng = np.random.default_rng(seed)
    a, b = rng.normal(0.0, 2.0, (2, samples))
    c, t = rng.exponential(1.0, (2, samples))
    lhs = _phi_p(a - b, p) * (c * _phi_p(df(a), p) - t * _phi_p(df(b), p))
    rhs = _phi_p(f(a) - f(b), p) * (c - t)
    # both sides carry rounding of order eps times the size of their terms
    size = np.abs(a - b) ** (p - 1) * (c * np.abs(df(a)) ** (p - 1) + t * np.abs(df(b)) ** (p - 1))
    size = np.maximum(size, np.abs(f(a) - f(b)) ** (p - 1) * (c + t))
    slack = 64 * np.finfo(float).eps * size
    rel = np.where(rhs - lhs <= slack, np.minimum(_relative(lhs, rhs), 0.0), _relative(lhs, rhs))
    return float(rel.max())


# --- exponents and constants -------------------------------------------------


def moser_exponent(prm: Params, r: float | None = None) -> float:
    """p* when finite, else max(2p, r + 1)."""
    if math.isfinite(prm.p_star):
        return prm.p_star
    q = 2.0 * prm.p
    if r is not None:
        q = max(q, r + 1.0)
    return q


def k_sequence(p: float, q: float, count: int = 64) -> np.ndarray:
    return (q / p) ** np.arange(1, count + 1, dtype=float)


def upper_constant(p: float, q: float, count: int = 64) -> float:
    """C^* = max_{j <= count} k_j^{1/sqrt(k_j)}."""
    k = k_sequence(p, q, count)
    return float(np.max(k ** (1.0 / np.sqrt(k))))


def growth_constant(kind: str, prm: Params, **coef) -> float:
    """C_1 with |rhs(t)| <= C_1 (1 + |t|^{q-1}).

    eigen:        lambda |t|^{p-2} t         -> max(1, lambda)
    semipositone: t_+^r - gamma^r (r <= q-1) -> max(1, gamma^r)
    critical:     lambda t_+^{p-1} + t_+^{q-1} - mu f(t) -> lambda + max(1, mu)
    """
    if kind == "eigen":
        return max(1.0, float(coef["lam"]))
    if kind == "semipositone":
        return max(1.0, float(coef.get("gamma", 0.0)) ** float(coef["r"]))
    if kind == "critical":
        return float(coef.get("lam", prm.lam)) + max(1.0, float(coef.get("mu", prm.mu)))
    raise ConfigurationError(f"unknown right-hand side kind {kind!r}", field="kind")


@dataclass
class MoserConstants:
    C1: float
    Lambda: float
    S_est: float
    C_star: float
    C_upper_star: float
    bound: float = math.nan
    p: float = 2.0
    q: float = math.nan
    C2: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def c_star(C1: float, Lam: float, S_est: float, p: float, q: float) -> float:
    return 2.0 * C1 * (Lam ** (1.0 - p) + Lam ** (q - p)) / S_est**p


def compute_bound(consts: MoserConstants, norm_pstar: float, prm: Params) -> float:
    """C_*^{1/(q-p)} C^*^{(p-1)/(sqrt p (sqrt q - sqrt p))} ||u||_q."""
    p = prm.p
    q = consts.q if math.isfinite(consts.q) else prm.p_star
    if not q > p or not math.isfinite(q):
        raise ConfigurationError("the certificate needs p < q < inf", field="q")
    e1 = 1.0 / (q - p)
    e2 = (p - 1.0) / (math.sqrt(p) * (math.sqrt(q) - math.sqrt(p)))
    return consts.C_star**e1 * consts.C_upper_star**e2 * norm_pstar


# --- discrete norms ----------------------------------------------------------


def _norm(disc: Discretization, u: np.ndarray, q: float) -> float:
    return disc.lp_norm(u, q)


def tail_integral(u: GridFunction, prm: Params, Lam: float, q: float) -> float:
    disc = get_space(u.mesh, prm)
    U = np.abs(disc.interpolate(u.values))
    return disc.integrate(np.where(U >= Lam, U**q, 0.0))


def choose_lambda(
    u: GridFunction, prm: Params, S_est: float, C2: float = 1.0, q: float | None = None, max_doublings: int = 60
) -> float:
    """Smallest Lambda in {2, 4, 8, ...} with
    C2 (int_{|u| >= Lambda} |u|^q)^{(q-p)/q} < S^p / (4 (q/p)^{p-1}).
    """
    q = moser_exponent(prm) if q is None else q
    p = prm.p
    target = S_est**p / (4.0 * (q / p) ** (p - 1.0))
    Lam = 2.0
    for _ in range(max_doublings):
        tail = tail_integral(u, prm, Lam, q)
        if C2 * tail ** ((q - p) / q) < target:
            return Lam
        Lam *= 2.0
    raise ConfigurationError("no truncation level found; the tail does not vanish", field="Lambda")


def domain_sobolev_constant(mesh, prm: Params, q: float, cfg: SolveConfig | None = None) -> float:
    """min [u]^p / ||u||_q^p on the mesh (a Dirichlet constant of the domain)."""
    cfg = cfg or SolveConfig(max_iter=1000, tol=1e-9)
    disc = get_space(mesh, prm)
    p = prm.p
    free = disc.free

    def fun(x):
        u = disc.to_full(x)
        A, G = disc.energy_grad(u)
        U = disc.interpolate(u)
        Nq = disc.integrate(np.abs(U) ** q)
        dN = disc.pair_with_basis(q * np.abs(U) ** (q - 2.0) * U)
        den = Nq ** (p / q)
        Q = A / den
        g = (G - Q * (p / q) * Nq ** (p / q - 1.0) * dN) / den
        return Q, g[free]

    lin = linear_companion(disc)
    x0 = lin.solve_linear(disc.lumped_mass[free])
    scale = disc.energy(disc.to_full(x0)) / disc.lp_norm(disc.to_full(x0), q) ** p
    x0 = x0 / disc.lp_norm(disc.to_full(x0), q)
    res = lbfgs(fun, x0, cfg, precond=lambda g: scale * lin.solve_linear(g), residual=lambda g: float(np.max(np.abs(g))))
    return float(res.value)


def iteration_steps(u: GridFunction, prm: Params, consts: MoserConstants, steps: int = 3) -> list[dict]:
    """Check ||u||_{k_j q} <= C_*^{1/(p k_j)} k_j^{(p-1)/(p k_j)} ||u||_{k_{j-1} q}, j = 1..steps."""
    disc = get_space(u.mesh, prm)
    p, q = prm.p, consts.q
    out = []
    prev = _norm(disc, u.values, q)
    for j in range(1, steps + 1):
        k = (q / p) ** j
        cur = _norm(disc, u.values, k * q)
        rhs = consts.C_star ** (1.0 / (p * k)) * k ** ((p - 1.0) / (p * k)) * prev
        out.append({"j": j, "lhs": cur, "rhs": rhs, "pass": bool(cur <= rhs * (1 + 1e-12))})
        prev = cur
    return out


def verify_bound_on_solution(
    u: GridFunction,
    prm: Params,
    S_est: float,
    C1: float = 1.0,
    q: float | None = None,
    C2: float = 1.0,
) -> dict:
    """Assemble the constants for ``u`` and test ||u||_inf <= bound."""
    q = moser_exponent(prm) if q is None else q
    p = prm.p
    Lam = choose_lambda(u, prm, S_est, C2, q)
    cs = c_star(C1, Lam, S_est, p, q)
    consts = MoserConstants(C1, Lam, S_est, max(cs, 1.0), upper_constant(p, q), p=p, q=q, C2=C2)
    disc = get_space(u.mesh, prm)
    nq = _norm(disc, u.values, q)
    consts.bound = compute_bound(consts, nq, prm)
    sup = u.sup_norm()
    steps = iteration_steps(u, prm, consts) if nq > 0 else []
    return {
        **consts.to_dict(),
        "C_star_raw": cs,
        "norm_q": nq,
        "sup_norm": sup,
        "steps": steps,
        "pass": bool(sup <= consts.bound),
    }
