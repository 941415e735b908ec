"""The fractional p-Laplacian: pointwise values, energy, weak residual, gradient.

Pointwise values use the symmetrized form

    L u(x) = c * int [g(u(x)-u(x+z)) + g(u(x)-u(x-z))] |z|^{-N-sp} dz,
    g(t) = |t|^{p-2} t,

written in polar coordinates around x. The radial integral is split at
``near_fraction * d(x)``, the distances from x to the boundary and to the
kinks of u; beyond the far side of the domain both arguments vanish and
the remaining tail is integrated in closed form. The factor ``c`` is the
package normalization (see ``space.kernel_norm``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._kernels_py import phi_p
from .errors import ConfigurationError, DomainError, NumericalError, ResolutionError
from .geometry import DomainSpec
from .gridfunction import GridFunction
from .params import Params, QuadratureConfig
from .quadrature import adaptive_gk, gauss_unit
from .space import get_space, kernel_norm, sphere_area

__all__ = [
    "ClosedForm",
    "GridFunction",
    "eval_fplap_pointwise",
    "fractional_gradient",
    "gagliardo_energy",
    "weak_residual",
    "weak_gradient",
]


def _as_real(x) -> np.ndarray:
    """float64, except that extended-precision input is kept."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float)


@dataclass(frozen=True)
class ClosedForm:
    """A function given by a formula, vanishing outside ``domain``.

    ``fn`` receives coordinates (radii for balls with N >= 2). ``kinks``
    lists points where u is not smooth, used as quadrature breakpoints.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    domain: DomainSpec
    kinks: tuple[float, ...] = field(default=())

    def __call__(self, x):
        x = _as_real(x)
        lo, hi = self.domain.bounds
        # radial arguments start at the center, which belongs to the domain
        inside = ((x >= lo) if self.domain.is_radial else (x > lo)) & (x < hi)
        out = np.zeros(x.shape, dtype=x.dtype)
        if np.any(inside):
            out[inside] = self.fn(x[inside])
        return out

    def scaled(self, t: float) -> "ClosedForm":
        fn = self.fn
        return ClosedForm(lambda x: t * fn(x), self.domain, self.kinks)


_phi = phi_p


def _paired(ux, up, um, p: float) -> np.ndarray:
    """g(ux-up) + g(ux-um), with values below the rounding floor set to zero.

    For smooth u the two terms cancel as rho -> 0 and the computed sum is
    pure rounding noise (callers pass extended precision to push it down); the floor is (p-1)|t|^{p-2} times the rounding
    error of each difference, so it scales exactly like the sum.
    """
    a = ux - up
    b = ux - um
    val = _phi(a, p) + _phi(b, p)
    if p == 2.0:
        da = db = 1.0
    else:
        with np.errstate(divide="ignore"):
            da = (p - 1.0) * np.abs(a) ** (p - 2.0)
            db = (p - 1.0) * np.abs(b) ** (p - 2.0)
    eps = np.finfo(np.result_type(a, float)).eps
    noise = 8.0 * eps * (da * (np.abs(ux) + np.abs(up)) + db * (np.abs(ux) + np.abs(um)))
    return np.where(np.abs(val) <= noise, 0.0, val)


def _resolve(u, domain: DomainSpec | None):
    if isinstance(u, GridFunction):
        return u, u.mesh.domain, np.asarray(u.mesh.nodes), True
    if isinstance(u, ClosedForm):
        return u, u.domain, np.asarray(u.kinks, dtype=float), False
    if callable(u):
        if domain is None:
            raise ConfigurationError("a domain is required for plain callables", field="domain")
        cf = ClosedForm(u, domain)
        return cf, domain, np.zeros(0), False
    raise ConfigurationError("u must be a GridFunction or a callable")


def _check_grid_point(u: GridFunction, x: float, prm: Params) -> None:
    nodes = u.mesh.nodes
    h = np.diff(nodes)
    j = int(np.clip(np.searchsorted(nodes, x) - 1, 0, h.size - 1))
    at_node = min(abs(x - nodes[j]), abs(x - nodes[j + 1])) <= 1e-12 * max(1.0, abs(x))
    if at_node and prm.p * (1.0 - prm.s) <= 1.0:
        # the kink of a P1 interpolant makes the integral diverge here
        raise ResolutionError(
            "pointwise value at a mesh node diverges for p(1-s) <= 1; evaluate between nodes"
        )
    if u.mesh.radial:
        if j == h.size - 1:
            raise ResolutionError("x lies in the boundary element of the mesh")
    elif j == 0 or j == h.size - 1:
        raise ResolutionError("x lies in a boundary element of the mesh")


class _RadialIntegrand:
    """rho -> int over the sphere of the paired integrand, for radial u."""

    def __init__(self, U, r: float, R: float, N: int, nodes_per_arc: int, mode: str, ux: float, p: float):
        self.U, self.r, self.R, self.N = U, r, R, N
        self.mode, self.ux, self.p = mode, ux, p
        t, w = gauss_unit(nodes_per_arc)
        # smoothstep clustering toward both ends of every arc
        self.t = 3 * t**2 - 2 * t**3
        self.wt = w * 6 * t * (1 - t)
        self.sub_area = sphere_area(N - 1)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        r, R, N = np.longdouble(self.r), self.R, self.N
        rho = np.asarray(rho, dtype=np.longdouble)
        if r == 0.0:
            diff = self.ux - self.U(rho)
            if self.mode == "op":
                return (2.0 * sphere_area(N) * _phi(diff, self.p)).astype(float)
            return (sphere_area(N) * np.abs(diff) ** self.p).astype(float)
        # crossing angle of the sphere |x + rho w| = R on [0, pi/2]
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (R * R - r * r - rho * rho) / (2.0 * r * rho)
        c = np.clip(np.nan_to_num(c, nan=2.0, posinf=2.0, neginf=-2.0), -1.0, 1.0)
        phic = np.arccos(np.abs(c))  # in [0, pi/2]
        half = np.longdouble(0.5) * np.pi
        lo = np.stack([np.zeros_like(phic), phic], axis=1)
        hi = np.stack([phic, np.full_like(phic, half)], axis=1)
        phi = lo[..., None] + (hi - lo)[..., None] * self.t
        wphi = (hi - lo)[..., None] * self.wt
        cp = np.cos(phi)
        rr = rho[:, None, None]
        plus = np.sqrt(np.maximum(r * r + rr * rr + 2 * r * rr * cp, 0.0))
        minus = np.sqrt(np.maximum(r * r + rr * rr - 2 * r * rr * cp, 0.0))
        if self.mode == "op":
            val = _paired(self.ux, self.U(plus), self.U(minus), self.p)
            fac = 2.0
        else:
            val = np.abs(self.U(plus) - self.ux) ** self.p + np.abs(self.U(minus) - self.ux) ** self.p
            fac = 1.0
        if N > 2:
            val = val * np.sin(phi) ** (N - 2)
        return (fac * self.sub_area * np.sum(wphi * val, axis=(1, 2))).astype(float)


_CORE_FRACTION = 1e-6


def _core_term(F, rho_c: float, spv: float) -> float:
    """int_0^{rho_c} F(rho) rho^{-1-sp} from the power model F ~ F(rho_c) (rho/rho_c)^a.

    Below rho_c the differences u(x) - u(x +- rho) are dominated by rounding
    (the radial distance |x + rho w| cannot be formed exactly), so the
    integrand is not sampled there. The exponent a comes from F(2 rho_c)/F(rho_c);
    the piece carries a fraction ~ (rho_c/eps)^{a-sp} of the inner integral.
    """
    f1, f2 = (float(v) for v in F(np.array([rho_c, 2.0 * rho_c])))
    if f1 == 0.0 or not f2 / f1 > 0.0:
        return 0.0
    a = math.log2(f2 / f1)
    if not a > spv:
        raise ResolutionError("integrand too singular at rho -> 0 for this point and exponent")
    return f1 * rho_c ** (-spv) / (a - spv)


def _point_value(ufun, dom: DomainSpec, kinks: np.ndarray, x: float, prm: Params, qc: QuadratureConfig, mode: str) -> float:
    p, spv = prm.p, prm.sp
    # differences u(x) - u(x +- rho) cancel for small rho; extended precision
    # keeps the rounding noise far below the quadrature tolerance
    xl = np.longdouble(x)
    uxl = ufun(np.asarray([xl]))[0]
    ux = float(uxl)
    if dom.is_radial:
        R = dom.radius
        r = float(x)
        if not (0.0 <= r < R):
            raise DomainError("radius must lie in [0, R)")
        d = R - r
        rho_end = R + r
        breaks = [d, rho_end]
        if kinks.size:
            breaks += list(np.abs(r - kinks)) + list(r + kinks)
        integrand = _RadialIntegrand(ufun, r, R, dom.N, qc.angular_nodes, mode, uxl, p)
        F = integrand
        tail_count = 2.0 * sphere_area(dom.N) if mode == "op" else sphere_area(dom.N)
    else:
        a, b = dom.bounds
        if not (a < x < b):
            raise DomainError("x must lie in the open domain")
        d = min(x - a, b - x)
        rho_end = max(x - a, b - x)
        breaks = [x - a, b - x]
        if kinks.size:
            breaks += list(np.abs(x - kinks))

        def F(rho):
            rl = np.asarray(rho, dtype=np.longdouble)
            up = ufun(xl + rl)
            um = ufun(xl - rl)
            if mode == "op":
                out = 2.0 * _paired(uxl, up, um, p)
            else:
                out = np.abs(up - uxl) ** p + np.abs(um - uxl) ** p
            return out.astype(float)

        tail_count = 4.0 if mode == "op" else 2.0

    eps = qc.near_fraction * d
    m = qc.grade_power
    rho_c = _CORE_FRACTION * eps
    core = _core_term(F, rho_c, spv)
    # one variable v covering both pieces: rho = eps v^m on [v_c,1],
    # rho = eps + (v - 1) beyond
    v_c = _CORE_FRACTION ** (1.0 / m)
    brk = [v_c, 1.0, 1.0 + rho_end - eps]
    brk += [(bk / eps) ** (1.0 / m) for bk in breaks if rho_c < bk < eps]
    brk += [1.0 + bk - eps for bk in breaks if eps < bk < rho_end]

    def integrand(v):
        v = np.asarray(v, dtype=float)
        inner = v <= 1.0
        rho = np.where(inner, eps * np.minimum(v, 1.0) ** m, eps + (v - 1.0))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            jac = np.where(
                inner,
                eps ** (-spv) * m * v ** (-m * spv - 1.0),
                rho ** (-1.0 - spv),
            )
            val = F(rho) * jac
        return np.where(v > 0, val, 0.0)

    res = adaptive_gk(integrand, brk, qc.tol, qc.max_panels)
    if not np.isfinite(res.value):
        raise NumericalError("non-finite value in operator quadrature")
    if not res.converged:
        raise NumericalError(
            f"operator quadrature did not reach tolerance {qc.tol:g} (estimate {res.error:.3e})"
        )
    if mode == "op":
        tail = tail_count * float(_phi(np.asarray(ux), p)) * rho_end ** (-spv) / spv
    else:
        tail = tail_count * abs(ux) ** p * rho_end ** (-spv) / spv
    return kernel_norm(prm) * (res.value + core + tail)


def _evaluate(u, x, prm: Params, qc: QuadratureConfig | None, domain, mode: str):
    qc = qc or QuadratureConfig()
    ufun, dom, kinks, is_grid = _resolve(u, domain)
    if dom.is_radial != (prm.N >= 2) or (dom.is_radial and dom.N != prm.N):
        raise ConfigurationError("Params.N does not match the domain", field="N")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(xs.size)
    for i, xi in enumerate(xs):
        if is_grid:
            _check_grid_point(ufun, float(xi), prm)
        out[i] = _point_value(ufun, dom, kinks, float(xi), prm, qc, mode)
    return float(out[0]) if np.ndim(x) == 0 else out


def eval_fplap_pointwise(u, x, prm: Params, qc: QuadratureConfig | None = None, domain: DomainSpec | None = None):
    """(-Delta)_p^s u at interior points (radii for radial balls)."""
    return _evaluate(u, x, prm, qc, domain, "op")


def fractional_gradient(u, x, prm: Params, qc: QuadratureConfig | None = None, domain: DomainSpec | None = None):
    """|D^s u(x)|^p = c * int |u(x+h) - u(x)|^p |h|^{-N-sp} dh."""
    return _evaluate(u, x, prm, qc, domain, "grad")


# --- energy-based operations ------------------------------------------------


def gagliardo_energy(u: GridFunction, prm: Params, qc: QuadratureConfig | None = None) -> float:
    """[u]^p of the P1 interpolant (including the exterior interaction)."""
    return get_space(u.mesh, prm).energy(u.values)


def weak_gradient(u: GridFunction, prm: Params) -> np.ndarray:
    """Nodal values of <A(u), phi_i> = c int int g(u(x)-u(y)) (phi_i(x)-phi_i(y)) k."""
    _, grad = get_space(u.mesh, prm).energy_grad(u.values)
    out = grad / prm.p
    out[u.mesh.fixed] = 0.0
    return out


def weak_residual(u: GridFunction, rhs: GridFunction, prm: Params, qc: QuadratureConfig | None = None) -> GridFunction:
    """Per-node residual <A(u), phi_i> - int rhs phi_i (zero on boundary nodes)."""
    if not isinstance(rhs, GridFunction):
        raise ConfigurationError("rhs must be a GridFunction")
    u._check(rhs)
    disc = get_space(u.mesh, prm)
    res = weak_gradient(u, prm) - disc.load_vector(rhs.values)
    res[u.mesh.fixed] = 0.0
    return GridFunction(u.mesh, res)


def residual_norm(res: GridFunction, prm: Params) -> float:
    """max_i |r_i| / m_i with m_i the lumped mass: a strong-form residual scale."""
    disc = get_space(res.mesh, prm)
    free = res.mesh.free
    return float(np.max(np.abs(res.values[free]) / disc.lumped_mass[free]))
