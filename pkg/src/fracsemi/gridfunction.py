"""Piecewise-linear functions on a mesh, extended by zero outside the domain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import Mesh


@dataclass(frozen=True)
class GridFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n,):
            raise ConfigurationError("values must have one entry per mesh node")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("grid function values must be finite")
        if np.any(v[self.mesh.fixed] != 0.0):
            raise ConfigurationError("grid function must vanish on boundary nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, mesh: Mesh, fn) -> "GridFunction":
        """Sample ``fn`` at the nodes (radius for radial meshes); boundary nodes set to 0."""
        v = np.asarray(fn(mesh.nodes), dtype=float) * np.ones(mesh.n)
        v = v.copy()
        v[mesh.fixed] = 0.0
        return cls(mesh, v)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "GridFunction":
        return cls(mesh, np.zeros(mesh.n))

    @classmethod
    def from_free(cls, mesh: Mesh, free_values: np.ndarray) -> "GridFunction":
        v = np.zeros(mesh.n)
        v[mesh.free] = free_values
        return cls(mesh, v)

    @property
    def free_values(self) -> np.ndarray:
        return self.values[self.mesh.free]

    def __call__(self, x) -> np.ndarray:
        """Interpolate at 1D coordinates (radii for radial meshes); zero outside."""
        x = np.asarray(x)
        nodes = self.mesh.nodes
        if self.mesh.radial:
            if np.any(x < 0):
                raise DomainError("radial grid functions take radii >= 0")
        if x.dtype != np.longdouble:
            return np.interp(x.astype(float), nodes, self.values, left=0.0, right=0.0)
        # extended-precision path used by the pointwise operator
        j = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2)
        x0, x1 = nodes[j].astype(np.longdouble), nodes[j + 1].astype(np.longdouble)
        t = (x - x0) / (x1 - x0)
        out = self.values[j] + t * (self.values[j + 1] - self.values[j])
        return np.where((x < nodes[0]) | (x > nodes[-1]), 0.0, out)

    @property
    def kinks(self) -> np.ndarray:
        return self.mesh.nodes

    def _check(self, other: "GridFunction") -> None:
        if other.mesh is not self.mesh and not np.array_equal(other.mesh.nodes, self.mesh.nodes):
            raise ConfigurationError("grid functions live on different meshes")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.mesh, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.mesh, self.values - other.values)
        return NotImplemented

    def __mul__(self, t):
        return GridFunction(self.mesh, float(t) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.mesh, -self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))
