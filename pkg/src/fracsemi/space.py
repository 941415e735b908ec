"""P1 finite-element discretization of the Gagliardo energy.

Every contribution to the discrete energy is written as

    A(u) = sum_k w_k |(L u)_k|^p  +  sum_{i<j} W_ij |U_i - U_j|^p ,

where ``L`` is a sparse matrix of nodal functionals (element-pair
differences and exterior point values) and ``U = B u`` are values at the
Gauss points of the far-field element pairs. Pairs of elements that touch
are integrated with singular rules (Gauss-Jacobi along the diagonal and a
Duffy split at shared nodes), so the only kernel evaluations near the
diagonal are of the smooth factor ``k(x,y)|x-y|^{1+sp}``.

Radial balls use the reduced kernel

    k(r, rho) = |S^{N-1}|^2 (r rho)^{N-1} M^{-N-sp} 2F1(nu, nu-N/2+1; N/2; (m/M)^2) ,

with ``M = max(r, rho)``, ``m = min(r, rho)``, ``nu = (N+sp)/2``.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import gamma as Gamma
from scipy.special import hyp2f1

from . import kernels
from ._kernels_py import phi_p
from .errors import ConfigurationError
from .geometry import Mesh
from .params import Params
from .quadrature import gauss_unit, jacobi_unit


def sphere_area(N: int) -> float:
    """|S^{N-1}|, with |S^0| = 2."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def fractional_laplacian_constant(N: int, s: float) -> float:
    """C_{N,s} making the p = 2 operator equal to the Fourier multiplier |xi|^{2s}."""
    return s * 4.0**s * Gamma((N + 2 * s) / 2) / (math.pi ** (N / 2) * Gamma(1 - s))


def kernel_norm(prm: Params, convention: str | None = None) -> float:
    """Front factor of the symmetrized integral and of the energy.

    ``'standard'`` uses C_{N,s}/2, for which p = 2 gives the usual fractional
    Laplacian; ``'unit'`` uses 1.
    """
    convention = convention or prm_convention(prm)
    if convention == "unit":
        return 1.0
    if convention == "standard":
        return 0.5 * fractional_laplacian_constant(prm.N, prm.s)
    raise ConfigurationError(f"unknown normalization {convention!r}", field="normalization")


_CONVENTION = {"value": "standard"}


def prm_convention(prm: Params | None = None) -> str:
    return _CONVENTION["value"]


def set_normalization(convention: str) -> None:
    """Select the global normalization ('standard' or 'unit')."""
    if convention not in ("standard", "unit"):
        raise ConfigurationError(f"unknown normalization {convention!r}", field="normalization")
    _CONVENTION["value"] = convention
    _CACHE.clear()


def radial_kernel(r: np.ndarray, rho: np.ndarray, N: int, sp_: float) -> np.ndarray:
    """Reduced kernel k(r, rho) for radial functions in dimension N."""
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    M = np.maximum(r, rho)
    m = np.minimum(r, rho)
    nu = 0.5 * (N + sp_)
    z = (m / M) ** 2
    area = sphere_area(N)
    return area * area * (r * rho) ** (N - 1) * M ** (-2 * nu) * hyp2f1(nu, nu - N / 2 + 1, N / 2, z)


def ball_exterior_kernel(r: np.ndarray, R: float, N: int, sp_: float) -> np.ndarray:
    """kappa(r) (R-r)^{sp}, where kappa(x) = int_{|y|>R} |x-y|^{-N-sp} dy.

    Uses kappa = (1/sp) int_{S^{N-1}} l(w)^{-sp} dw with l the distance to the
    sphere along w, integrated over the polar angle on geometrically graded
    panels around the direction of the nearest boundary point.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    d = R - r
    width = np.sqrt(np.maximum(d, 1e-300) / R)
    tg, wg = gauss_unit(20)
    out = np.empty_like(r)
    area_sub = sphere_area(N - 1) if N >= 2 else 1.0
    for i, (ri, wi) in enumerate(zip(r, width)):
        if ri == 0.0:
            out[i] = sphere_area(N) * R ** (-sp_) / sp_ * d[i] ** sp_
            continue
        edges = [0.0]
        e = 0.25 * wi
        while e < math.pi:
            edges.append(e)
            e *= 2.0
        edges.append(math.pi)
        edges = np.asarray(edges)
        lo, hi = edges[:-1], edges[1:]
        phi = (lo[:, None] + (hi - lo)[:, None] * tg[None, :]).ravel()
        wphi = ((hi - lo)[:, None] * wg[None, :]).ravel()
        c = np.cos(phi)
        sn = np.sin(phi)
        # distance to the sphere along direction at angle phi from x/|x|;
        # the form below avoids cancellation when phi is small
        disc = np.sqrt(R * R - ri * ri * sn * sn)
        ell = np.where(c > 0, (R * R - ri * ri) / (ri * c + disc), disc - ri * c)
        f = ell ** (-sp_) * (sn ** (N - 2) if N > 2 else 1.0)
        out[i] = area_sub * np.sum(wphi * f) / sp_ * d[i] ** sp_
    return out


@dataclass(frozen=True)
class SpaceSettings:
    far_q: int = 3
    near_q: int = 8
    near_gap: int = 3
    self_nz: int = 8
    self_ny: int = 8
    adj_nt: int = 6
    adj_nw: int = 10
    mass_q: int = 4
    ext_q: int = 8


def _interp_matrix(nodes: np.ndarray, elem: np.ndarray, xi: np.ndarray) -> sp.csr_matrix:
    """Rows giving P1 values at local coordinate xi of element elem."""
    m = elem.size
    rows = np.repeat(np.arange(m), 2)
    cols = np.stack([elem, elem + 1], axis=1).ravel()
    vals = np.stack([1.0 - xi, xi], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, nodes.size))


class Discretization:
    """Discrete energy, gradient and mass operators on one mesh.

    Vectors handled by the public methods are full nodal arrays; fixed
    nodes must hold zero.
    """

    def __init__(self, mesh: Mesh, prm: Params, settings: SpaceSettings | None = None):
        if mesh.radial and mesh.domain.N != prm.N:
            raise ConfigurationError("Params.N must match the ball dimension", field="N")
        if not mesh.radial and prm.N != 1:
            raise ConfigurationError("interval domains need N = 1", field="N")
        self.mesh = mesh
        self.prm = prm
        self.settings = settings or SpaceSettings()
        self.p = float(prm.p)
        self.norm = kernel_norm(prm)
        self.nodes = mesh.nodes
        self.n = mesh.n
        self.free = mesh.free
        self._build_mass()
        self._build_rows()
        self._build_far()
        self._stiff_chol = None
        self._stiff = None

    # ------------------------------------------------------------------ kernels
    def kernel(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        spv = self.prm.sp
        if self.mesh.radial:
            return radial_kernel(x, y, self.prm.N, spv)
        return np.abs(x - y) ** (-1.0 - spv)

    def _measure(self, x: np.ndarray) -> np.ndarray:
        if self.mesh.radial:
            return sphere_area(self.prm.N) * x ** (self.prm.N - 1)
        return np.ones_like(x)

    # --------------------------------------------------------------- mass terms
    def _build_mass(self) -> None:
        t, w = gauss_unit(self.settings.mass_q)
        h = self.mesh.h
        ne = h.size
        elem = np.repeat(np.arange(ne), t.size)
        xi = np.tile(t, ne)
        x = self.nodes[elem] + h[elem] * xi
        self.mass_points = x
        self.mass_weights = np.repeat(h, t.size) * np.tile(w, ne) * self._measure(x)
        self.B_mass = _interp_matrix(self.nodes, elem, xi)
        M = self.B_mass.T @ sp.diags(self.mass_weights) @ self.B_mass
        self.mass_matrix = sp.csr_matrix(M)
        self.lumped_mass = np.asarray(M.sum(axis=1)).ravel()

    def interpolate(self, u: np.ndarray) -> np.ndarray:
        """Values of the P1 interpolant at the mass quadrature points."""
        return self.B_mass @ u

    def integrate(self, values_at_points: np.ndarray) -> float:
        return float(np.dot(self.mass_weights, values_at_points))

    def integrate_nodal(self, fn, u: np.ndarray) -> float:
        """int F(u) dx for the P1 interpolant u."""
        return self.integrate(fn(self.interpolate(u)))

    def pair_with_basis(self, values_at_points: np.ndarray) -> np.ndarray:
        """int F phi_i dx for every node i, F given at the mass points."""
        return self.B_mass.T @ (self.mass_weights * values_at_points)

    def load_vector(self, f: np.ndarray) -> np.ndarray:
        """int f phi_i for a P1 right-hand side f (consistent mass)."""
        return self.mass_matrix @ f

    def lp_norm(self, u: np.ndarray, q: float) -> float:
        if math.isinf(q):
            return float(np.max(np.abs(u)))
        return self.integrate_nodal(lambda v: np.abs(v) ** q, u) ** (1.0 / q)

    # ------------------------------------------------------------- sparse rows
    def _build_rows(self) -> None:
        st = self.settings
        spv = self.prm.sp
        p = self.p
        nodes = self.nodes
        h = self.mesh.h
        ne = h.size
        radial = self.mesh.radial
        R_rows: list[np.ndarray] = []
        C_rows: list[np.ndarray] = []
        V_rows: list[np.ndarray] = []
        weights: list[np.ndarray] = []
        nrow = 0

        def add(cols: np.ndarray, vals: np.ndarray, w: np.ndarray) -> None:
            nonlocal nrow
            m, k = cols.shape
            R_rows.append(np.repeat(np.arange(nrow, nrow + m), k))
            C_rows.append(cols.ravel())
            V_rows.append(vals.ravel())
            weights.append(w)
            nrow += m

        # self pairs: |u(x)-u(y)| = |delta| |X-Y| on an element
        alpha = p - 1.0 - spv
        zt, zw = jacobi_unit(st.self_nz, alpha)
        if radial:
            yt, yw = gauss_unit(st.self_ny)
            Z = zt[:, None]
            Y = (1.0 - Z) * yt[None, :]
            WY = (1.0 - Z) * yw[None, :] * zw[:, None]
            wself = np.empty(ne)
            for e in range(ne):
                x1 = nodes[e] + h[e] * (Y + Z)
                x2 = nodes[e] + h[e] * Y
                mod = (h[e] * Z) ** (1.0 + spv) * self.kernel(x1, x2)
                wself[e] = 2.0 * h[e] ** (1.0 - spv) * np.sum(WY * mod)
        else:
            wself = 2.0 * h ** (1.0 - spv) * np.sum(zw * (1.0 - zt))
        cols = np.stack([np.arange(ne), np.arange(ne) + 1], axis=1)
        vals = np.tile([-1.0, 1.0], (ne, 1))
        add(cols, vals, wself)

        # adjacent pairs sharing node v, Duffy split into two triangles
        if ne >= 2:
            v = np.arange(1, ne)
            he, hf = h[v - 1], h[v]
            wt_nodes, ww = gauss_unit(st.adj_nw)
            nt = 1 if not radial else st.adj_nt
            tt, tw = jacobi_unit(nt, p - spv)
            for tri in (0, 1):
                for wv, wq in zip(wt_nodes, ww):
                    if tri == 0:
                        # a = he t, b = hf t w; diff = t (delta_e + w delta_f)
                        coef = np.array([-1.0, 1.0 - wv, wv])
                        dist_unit = he + hf * wv
                    else:
                        coef = np.array([-wv, wv - 1.0, 1.0])
                        dist_unit = hf + he * wv
                    if radial:
                        acc = np.zeros(v.size)
                        for tj, twj in zip(tt, tw):
                            if tri == 0:
                                x1 = nodes[v] - he * tj
                                x2 = nodes[v] + hf * tj * wv
                            else:
                                x1 = nodes[v] - he * tj * wv
                                x2 = nodes[v] + hf * tj
                            mod = (tj * dist_unit) ** (1.0 + spv) * self.kernel(x1, x2)
                            acc += twj * mod
                    else:
                        acc = np.full(v.size, np.sum(tw))
                    w_row = 2.0 * wq * he * hf * dist_unit ** (-1.0 - spv) * acc
                    cols = np.stack([v - 1, v, v + 1], axis=1)
                    add(cols, np.tile(coef, (v.size, 1)), w_row)

        # near pairs: tensor Gauss on element pairs with gap 2..near_gap
        tq, wq = gauss_unit(st.near_q)
        XI, ETA = np.meshgrid(tq, tq, indexing="ij")
        WQ = np.outer(wq, wq)
        for gap in range(2, st.near_gap + 1):
            if gap >= ne:
                break
            e = np.arange(ne - gap)
            f = e + gap
            x1 = nodes[e][:, None, None] + h[e][:, None, None] * XI[None]
            x2 = nodes[f][:, None, None] + h[f][:, None, None] * ETA[None]
            w = 2.0 * (h[e] * h[f])[:, None, None] * WQ[None] * self.kernel(x1, x2)
            m = e.size * XI.size
            xi = np.broadcast_to(XI[None], x1.shape).ravel()
            eta = np.broadcast_to(ETA[None], x1.shape).ravel()
            ee = np.repeat(e, XI.size)
            ff = np.repeat(f, XI.size)
            cols = np.stack([ee, ee + 1, ff, ff + 1], axis=1)
            vals = np.stack([-(1.0 - xi), -xi, 1.0 - eta, eta], axis=1)
            add(cols, vals, w.ravel())
            del m

        # exterior: 2 int |u|^p kappa
        ext_cols, ext_vals, ext_w = self._exterior_rows()
        add(ext_cols, ext_vals, ext_w)

        L = sp.csr_matrix(
            (np.concatenate(V_rows), (np.concatenate(R_rows), np.concatenate(C_rows))),
            shape=(nrow, self.n),
        )
        L.sum_duplicates()
        self.L = L
        self.row_weights = self.norm * np.concatenate(weights)

    def _exterior_rows(self):
        st = self.settings
        spv = self.prm.sp
        p = self.p
        nodes = self.nodes
        h = self.mesh.h
        ne = h.size
        tg, wg = gauss_unit(st.ext_q)
        # on a boundary element u = u_edge * t exactly, so |u|^p d^{-sp}
        # carries the weight t^{p-sp}
        tj, wj = jacobi_unit(st.ext_q, p - spv)
        cols, vals, ws = [], [], []

        def point_rows(e, xi, w):
            cols.append(np.stack([e, e + 1], axis=1))
            vals.append(np.stack([1.0 - xi, xi], axis=1))
            ws.append(w)

        def edge_row(node, w):
            cols.append(np.array([[node, node]]))
            vals.append(np.array([[1.0, 0.0]]))
            ws.append(np.array([w]))

        if self.mesh.radial:
            R = nodes[-1]
            N = self.prm.N
            e = np.repeat(np.arange(ne - 1), tg.size)
            xi = np.tile(tg, ne - 1)
            x = nodes[e] + h[e] * xi
            kap = ball_exterior_kernel(x, R, N, spv) * (R - x) ** (-spv)
            point_rows(e, xi, np.repeat(h[:-1], tg.size) * np.tile(wg, ne - 1) * kap * self._measure(x))
            he = h[-1]
            x = R - he * tj
            kap_s = ball_exterior_kernel(x, R, N, spv)
            edge_row(ne - 1, he ** (1.0 - spv) * float(np.sum(wj * kap_s * self._measure(x))))
        else:
            a, b = nodes[0], nodes[-1]
            e = np.repeat(np.arange(1, ne - 1), tg.size)
            xi = np.tile(tg, ne - 2)
            x = nodes[e] + h[e] * xi
            kap = ((x - a) ** (-spv) + (b - x) ** (-spv)) / spv
            point_rows(e, xi, np.repeat(h[1:-1], tg.size) * np.tile(wg, ne - 2) * kap)
            for e0, node in ((0, 1), (ne - 1, ne - 1)):
                he = h[e0]
                edge_row(node, he ** (1.0 - spv) * float(np.sum(wj)) / spv)
                # the far end of the interval is smooth on this element
                xg = nodes[e0] + he * tg
                far = (b - xg) ** (-spv) if e0 == 0 else (xg - a) ** (-spv)
                point_rows(np.full(tg.size, e0), tg.copy(), he * wg * far / spv)
        w = 2.0 * np.concatenate(ws)
        return np.concatenate(cols), np.concatenate(vals), w

    # ---------------------------------------------------------------- far field
    def _build_far(self) -> None:
        st = self.settings
        h = self.mesh.h
        ne = h.size
        tq, wq = gauss_unit(st.far_q)
        elem = np.repeat(np.arange(ne), tq.size)
        xi = np.tile(tq, ne)
        x = self.nodes[elem] + h[elem] * xi
        om = np.repeat(h, tq.size) * np.tile(wq, ne)
        P = x.size
        W = np.zeros((P, P))
        band = st.near_gap
        for i0 in range(0, P, 512):
            i1 = min(P, i0 + 512)
            ei = elem[i0:i1, None]
            mask = np.abs(ei - elem[None, :]) > band
            with np.errstate(divide="ignore", invalid="ignore"):
                K = self.kernel(x[i0:i1, None], x[None, :])
            blk = np.where(mask, 2.0 * om[i0:i1, None] * om[None, :] * K, 0.0)
            W[i0:i1] = blk
        W *= self.norm
        self.far_points = x
        self.B_far = _interp_matrix(self.nodes, elem, xi)
        self.W_far = np.ascontiguousarray(W)

    # ------------------------------------------------------------------ energy
    def energy(self, u: np.ndarray) -> float:
        """Discrete [u]^p."""
        p = self.p
        Lu = self.L @ u
        e_rows = float(np.dot(self.row_weights, np.abs(Lu) ** p))
        e_far = kernels.pair_energy(self.B_far @ u, self.W_far, p)
        return e_rows + float(e_far)

    def energy_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """[u]^p and its gradient with respect to all nodal values."""
        p = self.p
        Lu = self.L @ u
        g_rows = phi_p(Lu, p)
        e_rows = float(np.dot(self.row_weights, g_rows * Lu))
        grad = p * (self.L.T @ (self.row_weights * g_rows))
        e_far, gU = kernels.pair_grad(np.ascontiguousarray(self.B_far @ u), self.W_far, p)
        grad = grad + self.B_far.T @ gU
        return e_rows + float(e_far), np.asarray(grad)

    # ------------------------------------------------------- p = 2 stiffness
    def stiffness(self) -> np.ndarray:
        """Dense S (free nodes) with [u]^2 = u^T S u, built for exponent 2."""
        if self._stiff is None:
            S = self.L.T @ sp.diags(self.row_weights) @ self.L
            S = np.asarray(S.todense())
            W = self.W_far if self.p == 2.0 else None
            if W is None:
                raise ConfigurationError("stiffness() needs a p = 2 discretization")
            B = self.B_far.toarray()
            D = W.sum(axis=1)
            S += B.T @ (D[:, None] * B) - B.T @ (W @ B)
            Sf = S[np.ix_(self.free, self.free)]
            self._stiff = 0.5 * (Sf + Sf.T)
        return self._stiff

    def stiffness_factor(self):
        if self._stiff_chol is None:
            self._stiff_chol = sla.cho_factor(self.stiffness(), lower=True)
        return self._stiff_chol

    def solve_linear(self, rhs_free: np.ndarray) -> np.ndarray:
        """Solve S u = rhs on free nodes (p = 2 discretization)."""
        return sla.cho_solve(self.stiffness_factor(), rhs_free)

    # ------------------------------------------------------------ conversion
    def to_full(self, v_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n)
        u[self.free] = v_free
        return u


_CACHE: "OrderedDict[tuple, Discretization]" = OrderedDict()
_CACHE_SIZE = 6


def get_space(mesh: Mesh, prm: Params, settings: SpaceSettings | None = None) -> Discretization:
    """Cached discretization keyed by mesh nodes, domain, (s, p, N) and settings."""
    settings = settings or SpaceSettings()
    key = (
        mesh.nodes.tobytes(),
        mesh.domain,
        prm.s,
        prm.p,
        prm.N,
        settings,
        prm_convention(prm),
    )
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    disc = Discretization(mesh, prm, settings)
    _CACHE[key] = disc
    while len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return disc


def linear_companion(disc: Discretization) -> Discretization:
    """A p = 2 discretization on the same mesh, used as preconditioner.

    Its order s' = sp/2 reproduces the kernel exponent of ``disc`` when
    that keeps s' below 1.
    """
    if disc.p == 2.0:
        return disc
    s2 = 0.5 * disc.prm.sp
    if not s2 < 1.0:
        s2 = disc.prm.s
    prm2 = Params(s=s2, p=2.0, N=disc.prm.N)
    return get_space(disc.mesh, prm2, disc.settings)
