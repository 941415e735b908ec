"""Domains, meshes, distance functions and boundary-anchored rescalings.

Two shapes are supported: intervals and balls. A ball in dimension
``N >= 2`` is handled radially, so its mesh lives on ``[0, R]``; a ball
with ``N == 1`` is the interval ``(c - R, c + R)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

_BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    a: float = -1.0
    b: float = 1.0
    center: tuple[float, ...] = (0.0,)
    radius: float = 1.0
    N: int = 1
    delta: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in ("interval", "ball"):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}", field="kind")
        if self.kind == "interval":
            if not self.a < self.b:
                raise ConfigurationError("interval needs a < b", field="a")
            object.__setattr__(self, "N", 1)
        else:
            if not self.radius > 0:
                raise ConfigurationError("ball radius must be positive", field="radius")
            if int(self.N) != self.N or self.N < 1:
                raise ConfigurationError("N must be a positive integer", field="N")
            c = tuple(float(v) for v in np.atleast_1d(self.center))
            if len(c) == 1 and self.N > 1:
                c = c * self.N
            if len(c) != self.N:
                raise ConfigurationError("center dimension must equal N", field="center")
            object.__setattr__(self, "center", c)
            object.__setattr__(self, "N", int(self.N))
        if not (0.0 < self.delta < self.inradius):
            raise ConfigurationError(
                f"delta must lie in (0, inradius={self.inradius:.6g})", field="delta"
            )

    # constructors ------------------------------------------------------------
    @classmethod
    def interval(cls, a: float = -1.0, b: float = 1.0, delta: float = 0.1) -> "DomainSpec":
        return cls(kind="interval", a=float(a), b=float(b), delta=float(delta))

    @classmethod
    def ball(cls, radius: float = 1.0, N: int = 2, center=None, delta: float = 0.1) -> "DomainSpec":
        center = (0.0,) * int(N) if center is None else tuple(np.atleast_1d(center).astype(float))
        return cls(kind="ball", center=center, radius=float(radius), N=int(N), delta=float(delta))

    # derived quantities ------------------------------------------------------
    @property
    def inradius(self) -> float:
        return 0.5 * (self.b - self.a) if self.kind == "interval" else self.radius

    @property
    def is_radial(self) -> bool:
        return self.kind == "ball" and self.N >= 2

    @property
    def bounds(self) -> tuple[float, float]:
        """End points of the 1D parameter range (x for intervals, r for radial balls)."""
        if self.kind == "interval":
            return self.a, self.b
        if self.N == 1:
            return self.center[0] - self.radius, self.center[0] + self.radius
        return 0.0, self.radius

    @property
    def diameter(self) -> float:
        return self.b - self.a if self.kind == "interval" else 2.0 * self.radius

    @property
    def volume(self) -> float:
        if self.kind == "interval":
            return self.b - self.a
        n = self.N
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "a": self.a,
            "b": self.b,
            "center": list(self.center),
            "radius": self.radius,
            "N": self.N,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(
            kind=d["kind"],
            a=float(d.get("a", -1.0)),
            b=float(d.get("b", 1.0)),
            center=tuple(d.get("center", (0.0,))),
            radius=float(d.get("radius", 1.0)),
            N=int(d.get("N", 1)),
            delta=float(d.get("delta", 0.1)),
        )


def _as_points(dom: DomainSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dom.kind == "interval" or dom.N == 1:
        return x
    if x.shape[-1:] != (dom.N,):
        raise DomainError(f"points must have trailing dimension {dom.N}")
    return x


def signed_distance(dom: DomainSpec, x) -> np.ndarray:
    """Distance to the boundary, negative outside the closure."""
    x = _as_points(dom, x)
    if dom.kind == "interval":
        return np.minimum(x - dom.a, dom.b - x)
    if dom.N == 1:
        c = dom.center[0]
        return dom.radius - np.abs(x - c)
    r = np.linalg.norm(x - np.asarray(dom.center), axis=-1)
    return dom.radius - r


def distance_to_boundary(dom: DomainSpec, x):
    """d(x) = dist(x, boundary) for x in the closed domain.

    Raises ``DomainError`` outside the closure. Scalars come back as floats.
    """
    d = signed_distance(dom, x)
    if np.any(d < -_BOUNDARY_SLACK * max(1.0, dom.diameter)):
        raise DomainError("point outside the closed domain")
    d = np.maximum(d, 0.0)
    return float(d) if np.ndim(d) == 0 else d


def radial_distance(dom: DomainSpec, r):
    """d as a function of the radius for a ball (r in [0, R])."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > dom.radius * (1 + _BOUNDARY_SLACK)):
        raise DomainError("radius outside [0, R]")
    d = np.maximum(dom.radius - r, 0.0)
    return float(d) if d.ndim == 0 else d


def in_layer(dom: DomainSpec, x, delta: float | None = None):
    """Membership in the boundary layer {x in domain : d(x) < delta}."""
    delta = dom.delta if delta is None else delta
    d = signed_distance(dom, x)
    return (d > 0) & (d < delta)


def boundary_points(dom: DomainSpec, count: int = 64, rng=None) -> np.ndarray:
    """Sample points of the boundary."""
    if dom.kind == "interval":
        return np.array([dom.a, dom.b])
    if dom.N == 1:
        c = dom.center[0]
        return np.array([c - dom.radius, c + dom.radius])
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal((count, dom.N))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(dom.center) + dom.radius * v


# --- rescaled domains --------------------------------------------------------


@dataclass(frozen=True)
class ScaledDomain:
    """The blow-up domain {y : x0 + tau*y in the base domain}."""

    base: DomainSpec
    x0: float | tuple[float, ...]
    tau: float

    def __post_init__(self) -> None:
        # tau = 1 is admitted so that sweeps can include the unscaled domain
        if not (0.0 < self.tau <= 1.0):
            raise ConfigurationError("tau must lie in (0,1]", field="tau")
        x0 = np.asarray(self.x0, dtype=float)
        d = signed_distance(self.base, x0)
        if abs(float(d)) > 1e-12 * max(1.0, self.base.diameter):
            raise DomainError("x0 must lie on the boundary")
        object.__setattr__(self, "x0", float(x0) if x0.ndim == 0 else tuple(x0))

    def to_base(self, y):
        return np.asarray(self.x0) + self.tau * np.asarray(y, dtype=float)

    def contains(self, y):
        return signed_distance(self.base, self.to_base(y)) > 0

    def as_domain(self) -> DomainSpec:
        """The rescaled domain as a DomainSpec with the same layer width."""
        b = self.base
        x0 = np.asarray(self.x0, dtype=float)
        if b.kind == "interval":
            lo, hi = sorted(((b.a - x0) / self.tau, (b.b - x0) / self.tau))
            return DomainSpec.interval(float(lo), float(hi), delta=b.delta)
        c = (np.asarray(b.center) - x0) / self.tau
        return DomainSpec.ball(b.radius / self.tau, b.N, center=c, delta=b.delta)


def scaled_distance(sd: ScaledDomain, y):
    """d_tau(y) = d(x0 + tau*y)/tau."""
    x = sd.to_base(y)
    d = signed_distance(sd.base, x)
    if np.any(d < -_BOUNDARY_SLACK * max(1.0, sd.base.diameter)):
        raise DomainError("point outside the scaled domain")
    out = np.maximum(d, 0.0) / sd.tau
    return float(out) if np.ndim(out) == 0 else out


# --- meshes ------------------------------------------------------------------


@dataclass(frozen=True)
class Mesh:
    """Nodes of a 1D parameter grid.

    For intervals ``nodes`` are coordinates; for radial balls they are radii
    in ``[0, R]`` with the last node on the sphere. ``fixed`` flags the nodes
    pinned to zero by the exterior condition.
    """

    domain: DomainSpec
    nodes: np.ndarray
    grading: str = "uniform"
    exponent: float = 1.0
    fixed: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ConfigurationError("mesh nodes must be a 1D array")
        if not np.all(np.diff(nodes) > 0):
            raise ConfigurationError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if self.fixed is None:
            fixed = np.zeros(nodes.size, dtype=bool)
            fixed[-1] = True
            if not self.domain.is_radial:
                fixed[0] = True
            fixed.setflags(write=False)
            object.__setattr__(self, "fixed", fixed)

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def radial(self) -> bool:
        return self.domain.is_radial

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    def distance(self) -> np.ndarray:
        """d at every node."""
        lo, hi = self.domain.bounds
        if self.radial:
            return np.maximum(hi - self.nodes, 0.0)
        return np.maximum(np.minimum(self.nodes - lo, hi - self.nodes), 0.0)

    def points(self) -> np.ndarray:
        """Node coordinates in physical space (radial nodes on the first axis)."""
        if not self.radial:
            return self.nodes.copy()
        pts = np.zeros((self.n, self.domain.N))
        pts[:, 0] = self.nodes
        return pts + np.asarray(self.domain.center)

    # serialization -----------------------------------------------------------
    def save(self, path: str | Path) -> tuple[Path, Path]:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r" if self.radial else "x"])
            for v in self.nodes:
                w.writerow([f"{v:.17g}"])
        side = path.with_suffix(".json")
        meta = {
            "domain": self.domain.to_dict(),
            "grading": self.grading,
            "exponent": self.exponent,
            "n": self.n,
        }
        side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path, side

    @classmethod
    def load(cls, path: str | Path) -> "Mesh":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        nodes = np.array([float(r[0]) for r in rows])
        return cls(
            domain=DomainSpec.from_dict(meta["domain"]),
            nodes=nodes,
            grading=meta["grading"],
            exponent=float(meta["exponent"]),
        )


def _grade_symmetric(t: np.ndarray, k: float) -> np.ndarray:
    out = np.where(t <= 0.5, 0.5 * (2 * t) ** k, 1 - 0.5 * (2 * (1 - t)) ** k)
    out[0], out[-1] = 0.0, 1.0
    return out


def build_mesh(dom: DomainSpec, n: int, grading: str = "uniform", exponent: float = 2.0) -> Mesh:
    """Mesh with ``n`` nodes on the closed domain (radial grid for balls).

    ``grading='graded'`` applies a power map clustering nodes toward the
    boundary; intervals are graded at both ends, radial grids at r = R.
    """
    if int(n) != n or n < 8:
        raise ConfigurationError(f"mesh needs at least 8 nodes, got {n}", field="n")
    n = int(n)
    if grading not in ("uniform", "graded"):
        raise ConfigurationError(f"unknown grading {grading!r}", field="grading")
    if grading == "graded" and not exponent >= 1.0:
        raise ConfigurationError("grading exponent must be >= 1", field="exponent")
    t = np.linspace(0.0, 1.0, n)
    lo, hi = dom.bounds
    if grading == "uniform":
        u = t
        exponent = 1.0
    elif dom.is_radial:
        u = 1.0 - (1.0 - t) ** exponent
    else:
        u = _grade_symmetric(t, exponent)
    nodes = lo + (hi - lo) * u
    nodes[0], nodes[-1] = lo, hi
    return Mesh(domain=dom, nodes=nodes, grading=grading, exponent=float(exponent))
