"""Boundary barriers xi = d^beta and numerical checks of their estimates.

Near the boundary xi equals d^beta; inside, the profile is blended into a
constant V >= max(delta^beta, D^beta) (D the inradius) by the quintic
smoothstep S:

    xi = d^beta (1 - S(t)) + V S(t),  t = (d - delta)/(D - delta),

so xi is C^2, agrees with d^beta to second order at d = delta, is flat at
the incenter and satisfies xi >= d^beta everywhere in the domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import DomainSpec, Mesh, ScaledDomain, build_mesh
from .gridfunction import GridFunction
from .operator import ClosedForm, _as_real, eval_fplap_pointwise
from .params import Params, QuadratureConfig


@dataclass(frozen=True)
class BarrierSpec:
    dom: DomainSpec
    beta: float
    delta: float | None = None
    extension: str = "smoothstep"

    def __post_init__(self) -> None:
        delta = self.dom.delta if self.delta is None else float(self.delta)
        if not (0 < delta < self.dom.inradius):
            raise ConfigurationError("delta must lie in (0, inradius)", field="delta")
        object.__setattr__(self, "delta", delta)
        if not self.beta > 0:
            raise ConfigurationError("beta must be positive", field="beta")
        if self.extension != "smoothstep":
            raise ConfigurationError("only the smoothstep extension is implemented", field="extension")


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    S = t**3 * (10 - 15 * t + 6 * t * t)
    S1 = 30 * t**2 * (1 - t) ** 2
    S2 = 60 * t * (1 - t) * (1 - 2 * t)
    return S, S1, S2


@dataclass(frozen=True)
class Barrier:
    """The barrier as a profile in d with exact derivatives."""

    spec: BarrierSpec
    plateau: float = field(init=False)

    def __post_init__(self) -> None:
        D = self.spec.dom.inradius
        object.__setattr__(self, "plateau", max(D**self.spec.beta, self.spec.delta**self.spec.beta))

    @property
    def domain(self) -> DomainSpec:
        return self.spec.dom

    def profile(self, d, order: int = 0):
        """xi, dxi/dd or d^2xi/dd^2 as functions of the distance d >= 0."""
        d = _as_real(d)
        beta, delta = self.spec.beta, self.spec.delta
        L = self.spec.dom.inradius - delta
        V = self.plateau
        S, S1, S2 = _smoothstep((d - delta) / L)
        with np.errstate(divide="ignore"):
            f0 = np.where(d > 0, d, 0.0) ** beta
            f1 = beta * d ** (beta - 1.0)
            f2 = beta * (beta - 1.0) * d ** (beta - 2.0)
        if order == 0:
            return f0 * (1 - S) + V * S
        if order == 1:
            return f1 * (1 - S) + (V - f0) * S1 / L
        if order == 2:
            return f2 * (1 - S) - 2 * f1 * S1 / L + (V - f0) * S2 / L**2
        raise ValueError("order must be 0, 1 or 2")

    def distance(self, x) -> np.ndarray:
        dom = self.spec.dom
        lo, hi = dom.bounds
        x = _as_real(x)
        if dom.is_radial:
            return hi - x
        return np.minimum(x - lo, hi - x)

    def __call__(self, x):
        """xi at coordinates (radii for radial balls); zero outside."""
        d = self.distance(x)
        out = np.zeros(np.shape(d), dtype=d.dtype)
        inside = d > 0
        out[inside] = self.profile(d[inside])
        return out

    def derivative(self, x, order: int = 1):
        """d^k xi/dx^k along the coordinate (x for intervals, r for balls)."""
        dom = self.spec.dom
        x = np.asarray(x, dtype=float)
        d = self.distance(x)
        val = self.profile(d, order)
        if order % 2 == 1:
            if dom.is_radial:
                sign = -1.0
            else:
                lo, hi = dom.bounds
                sign = np.where(x - lo <= hi - x, 1.0, -1.0)
            val = sign * val
        return val

    def closed_form(self) -> ClosedForm:
        dom = self.spec.dom
        lo, hi = dom.bounds
        delta = self.spec.delta
        if dom.is_radial:
            kinks = (hi - delta,)
        else:
            kinks = (lo + delta, hi - delta, 0.5 * (lo + hi))
        return ClosedForm(self, dom, kinks)

    def sample(self, mesh: Mesh) -> GridFunction:
        return GridFunction.from_callable(mesh, self)


def build_barrier(spec: BarrierSpec, prm: Params | None = None, mesh: Mesh | None = None):
    """Barrier callable plus its mesh sampling.

    ``prm`` (when given) is used to check beta against (0, sp/(p-1)).
    """
    if prm is not None:
        prm.require_beta(spec.beta)
    xi = Barrier(spec)
    if mesh is None:
        mesh = build_mesh(spec.dom, 257, "graded", 2.0)
    return xi, xi.sample(mesh)


# --- verification reports ----------------------------------------------------


@dataclass
class UpperReport:
    d: np.ndarray
    values: np.ndarray
    exponent: float
    all_negative: bool
    slope: float
    C: float
    worst_violation: float

    @property
    def bound(self) -> np.ndarray:
        return -self.C * self.d**self.exponent

    def summary(self) -> dict:
        return {
            "exponent_target": self.exponent,
            "slope": self.slope,
            "C": self.C,
            "all_negative": self.all_negative,
            "worst_violation": self.worst_violation,
            "pass": bool(self.all_negative),
        }


def default_layer_samples(delta: float, count: int = 40) -> np.ndarray:
    """``count`` distances log-spaced over [delta/100, delta), excluding delta."""
    return np.geomspace(delta / 100.0, delta, count + 1)[:-1]


def _layer_points(dom: DomainSpec, d: np.ndarray) -> np.ndarray:
    lo, hi = dom.bounds
    return hi - d if dom.is_radial else lo + d


def verify_upper_estimate(
    spec: BarrierSpec,
    prm: Params,
    sample=None,
    qc: QuadratureConfig | None = None,
) -> UpperReport:
    """Sign and exponent of -(-Delta)_p^s xi on the boundary layer.

    ``sample`` holds distances d in (0, delta); by default 40 log-spaced
    values. The reported ``C`` is the largest constant with
    value <= -C d^{beta(p-1)-sp} at every sample.
    """
    prm.require_beta(spec.beta)
    d = default_layer_samples(spec.delta) if sample is None else np.asarray(sample, dtype=float)
    if np.any(d <= 0) or np.any(d >= spec.delta):
        raise DomainError("samples must lie in the boundary layer 0 < d < delta")
    xi = Barrier(spec)
    x = _layer_points(spec.dom, d)
    vals = -np.asarray(eval_fplap_pointwise(xi.closed_form(), x, prm, qc))
    e = spec.beta * (prm.p - 1.0) - prm.sp
    neg = bool(np.all(vals < 0))
    if neg:
        slope = float(np.polyfit(np.log(d), np.log(-vals), 1)[0])
        C = float(np.min(-vals / d**e))
    else:
        slope, C = math.nan, 0.0
    return UpperReport(d, vals, e, neg, slope, C, float(np.max(vals)))


def probe_beta0(dom: DomainSpec, prm: Params, betas, qc: QuadratureConfig | None = None) -> dict:
    """Sweep beta upward; report the first value where the sign claim fails."""
    betas = np.sort(np.asarray(betas, dtype=float))
    first_fail = None
    rows = []
    for b in betas:
        if not (0 < b < prm.beta0):
            break
        rep = verify_upper_estimate(BarrierSpec(dom, float(b)), prm, qc=qc)
        rows.append((float(b), rep.all_negative, rep.worst_violation))
        if not rep.all_negative and first_fail is None:
            first_fail = float(b)
            break
    return {"rows": rows, "first_failure": first_fail}


@dataclass
class ScaledReport:
    tau: float
    d_tau: np.ndarray
    values: np.ndarray
    exponent: float
    c0: float
    all_positive: bool

    def summary(self) -> dict:
        return {"tau": self.tau, "c0": self.c0, "exponent": self.exponent, "all_positive": self.all_positive}


def scaled_barrier(sd: ScaledDomain, beta: float) -> ClosedForm:
    """xi^tau(y) = xi(x0 + tau y) as a closed form on the rescaled domain."""
    base = sd.base
    xi = Barrier(BarrierSpec(base, beta))
    dom_t = sd.as_domain()
    tau = sd.tau
    lo, hi = dom_t.bounds
    if dom_t.is_radial:
        # radial about the rescaled center: d(x0 + tau y) = R - tau |y - c_tau|
        def fn(rho):
            return xi.profile(base.radius - tau * np.asarray(rho))

        kinks = (hi - base.delta / tau, hi)
    else:
        x0 = float(np.asarray(sd.x0))

        def fn(y):
            return xi(x0 + tau * np.asarray(y))

        a, b = base.bounds
        kinks = tuple(sorted(((a + base.delta - x0) / tau, (b - base.delta - x0) / tau, (0.5 * (a + b) - x0) / tau)))
    return ClosedForm(fn, dom_t, kinks)


def _scaled_layer_points(sd: ScaledDomain, d_tau: np.ndarray) -> np.ndarray:
    dom_t = sd.as_domain()
    lo, hi = dom_t.bounds
    if dom_t.is_radial:
        return hi - d_tau
    x0 = float(np.asarray(sd.x0))
    a, b = sd.base.bounds
    # the rescaled boundary point x0 sits at y = 0
    return -d_tau if x0 == b else d_tau


def verify_scaled_estimate(
    sd: ScaledDomain,
    prm: Params,
    theta: float | None = None,
    sample=None,
    qc: QuadratureConfig | None = None,
) -> ScaledReport:
    """Largest c0 with (-Delta)_p^s xi^tau >= c0 d_tau^{sp^2-2sp-theta(p-1)} at the samples."""
    theta = prm.theta_exp if theta is None else theta
    if theta is None:
        raise ConfigurationError("theta_exp is required", field="theta_exp")
    prm.require_theta(theta)
    beta = prm.sp - theta
    delta = sd.base.delta
    d_tau = default_layer_samples(delta) if sample is None else np.asarray(sample, dtype=float)
    if np.any(d_tau <= 0) or np.any(d_tau >= delta):
        raise DomainError("samples must satisfy 0 < d_tau < delta")
    if sd.as_domain().is_radial:
        pts = _scaled_layer_points(sd, d_tau)
    else:
        pts = _scaled_layer_points(sd, d_tau)
    vals = np.asarray(eval_fplap_pointwise(scaled_barrier(sd, beta), pts, prm, qc))
    e = prm.sp * prm.p - 2 * prm.sp - theta * (prm.p - 1.0)
    c0 = float(np.min(vals / d_tau**e))
    return ScaledReport(sd.tau, d_tau, vals, e, c0, bool(np.all(vals > 0)))


def scaled_estimate_sweep(base: DomainSpec, x0, taus, prm: Params, theta: float | None = None, qc=None) -> dict:
    reports = [verify_scaled_estimate(ScaledDomain(base, x0, float(t)), prm, theta, qc=qc) for t in taus]
    c0 = np.array([r.c0 for r in reports])
    ratio = float(c0.max() / c0.min()) if np.all(c0 > 0) else math.inf
    return {
        "reports": reports,
        "c0": c0.tolist(),
        "ratio": ratio,
        "uniform": bool(ratio < 2.0),
        "lower_bound": float(c0.min()),
    }


@dataclass
class ComparisonReport:
    R: float
    margin: np.ndarray
    layer_nodes: np.ndarray
    min_margin: float
    ok: bool

    def summary(self) -> dict:
        return {"R": self.R, "min_margin": self.min_margin, "pass": self.ok}


def comparison_bound_check(
    u: GridFunction,
    sd: ScaledDomain,
    prm: Params,
    c1: float,
    theta: float | None = None,
    c0: float | None = None,
    qc: QuadratureConfig | None = None,
) -> ComparisonReport:
    """Margin v - u on the layer for v = R xi^tau with
    R = (c1/c0)^{1/(p-1)} + (tau delta)^{theta-sp} ||u||_inf.
    """
    theta = prm.theta_exp if theta is None else theta
    if theta is None:
        raise ConfigurationError("theta_exp is required", field="theta_exp")
    prm.require_theta(theta)
    if c0 is None:
        c0 = verify_scaled_estimate(sd, prm, theta, qc=qc).c0
    if not c0 > 0:
        raise ConfigurationError("c0 must be positive", field="c0")
    delta = sd.base.delta
    R = (c1 / c0) ** (1.0 / (prm.p - 1.0)) + (sd.tau * delta) ** (theta - prm.sp) * u.sup_norm()
    xi_t = scaled_barrier(sd, prm.sp - theta)
    mesh = u.mesh
    d_nodes = mesh.distance()
    layer = np.flatnonzero((d_nodes > 0) & (d_nodes < delta))
    v = R * xi_t(mesh.nodes[layer])
    margin = v - u.values[layer]
    mm = float(np.min(margin)) if margin.size else math.inf
    return ComparisonReport(float(R), margin, layer, mm, bool(mm >= 0))


def interface_continuity(spec: BarrierSpec, h: float = 1e-8) -> dict:
    """Jumps of xi and its first two derivatives across d = delta.

    Exact one-sided derivatives are compared, plus a centered finite
    difference of the first derivative for the C^2 check.
    """
    xi = Barrier(spec)
    delta = spec.delta
    beta = spec.beta
    inner = np.array([delta])
    val_jump = abs(float(xi.profile(inner)[0]) - delta**beta)
    d1_jump = abs(float(xi.profile(inner, 1)[0]) - beta * delta ** (beta - 1))
    d2_exact = abs(float(xi.profile(inner, 2)[0]) - beta * (beta - 1) * delta ** (beta - 2))
    d1p = float(xi.profile(np.array([delta + h]), 1)[0])
    d1m = float(beta * (delta - h) ** (beta - 1))
    fd2 = (d1p - d1m) / (2 * h)
    d2_fd = abs(fd2 - beta * (beta - 1) * delta ** (beta - 2))
    return {"value": val_jump, "first": d1_jump, "second": d2_exact, "second_fd": d2_fd}
