"""Parameter bundles: exponents, quadrature and solver settings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigurationError


@dataclass(frozen=True)
class Params:
    """Exponents and coefficients of the model problems.

    Only ``s``, ``p`` and ``N`` are validated at construction; the
    problem-specific ranges are checked by ``require_*`` helpers at the
    point of use, since a single bundle is shared by very different runs.
    """

    s: float = 0.5
    p: float = 2.0
    N: int = 1
    r: float | None = None
    q: float | None = None
    lam: float = 0.0
    mu: float = 0.0
    gamma: float = 0.0
    beta: float | None = None
    theta_exp: float | None = None
    theta_ratio: float = 2.0

    def __post_init__(self) -> None:
        if not (0.0 < self.s < 1.0):
            raise ConfigurationError(f"s must lie in (0,1), got {self.s}", field="s")
        if not self.p > 1.0:
            raise ConfigurationError(f"p must exceed 1, got {self.p}", field="p")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N}", field="N")
        object.__setattr__(self, "N", int(self.N))
        for name in ("mu", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative", field=name)
        if self.theta_ratio <= 1.0:
            raise ConfigurationError("theta_ratio must exceed 1", field="theta_ratio")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def p_star(self) -> float:
        """Critical Sobolev exponent Np/(N-sp); ``inf`` when sp >= N."""
        if self.sp >= self.N:
            return math.inf
        return self.N * self.p / (self.N - self.sp)

    @property
    def beta0(self) -> float:
        """Upper end sp/(p-1) of the admissible barrier exponents."""
        return self.sp / (self.p - 1.0)

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    # --- validation helpers -------------------------------------------------
    def require_barrier_range(self) -> None:
        if not self.p > 2.0 / (2.0 - self.s):
            raise ConfigurationError("barrier estimates need p > 2/(2-s)", field="p")

    def require_beta(self, beta: float) -> None:
        self.require_barrier_range()
        if not (0.0 < beta < self.beta0):
            raise ConfigurationError(
                f"beta must lie in (0, sp/(p-1)) = (0, {self.beta0:.6g}), got {beta}",
                field="beta",
            )

    def require_theta(self, theta: float) -> None:
        # theta in (sp - beta0, sp) is the same as beta = sp - theta in (0, beta0)
        if not (self.sp - self.beta0 < theta < self.sp):
            raise ConfigurationError(
                f"theta_exp must lie in ({self.sp - self.beta0:.6g}, {self.sp:.6g})",
                field="theta_exp",
            )
        self.require_beta(self.sp - theta)

    def require_r(self) -> float:
        if self.r is None:
            raise ConfigurationError("exponent r is required", field="r")
        if not (self.p - 1.0 < self.r < self.p_star - 1.0):
            raise ConfigurationError(
                f"r must lie in (p-1, p*-1) = ({self.p - 1:.6g}, {self.p_star - 1:.6g})",
                field="r",
            )
        return float(self.r)

    def require_q(self) -> float:
        if self.q is None:
            raise ConfigurationError("exponent q is required", field="q")
        if not (self.p - 1.0 < self.q < self.p_star - 1.0):
            raise ConfigurationError("q must lie in (p-1, p*-1)", field="q")
        return float(self.q)

    def require_critical(self) -> None:
        if not math.isfinite(self.p_star):
            raise ConfigurationError("critical problems need sp < N", field="N")
        if self.p < 2.0:
            raise ConfigurationError("critical problems need p >= 2", field="p")


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for pointwise operator evaluation.

    ``near_fraction`` sets the radius ``near_fraction * d(x)`` of the inner
    panel, which is integrated after the substitution rho = c t**grade_power.
    """

    near_fraction: float = 0.25
    grade_power: int = 5
    panels: int = 4
    max_panels: int = 20000
    r_far_factor: float = 10.0
    tol: float = 1e-8
    angular_nodes: int = 48

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigurationError(f"{f.name} must be positive", field=f.name)
        if not self.tol < 1.0:
            raise ConfigurationError("tol must be below 1", field="tol")
        if not (0 < self.near_fraction <= 1):
            raise ConfigurationError("near_fraction must lie in (0,1]", field="near_fraction")
        if self.r_far_factor < 10.0:
            raise ConfigurationError("r_far_factor must be at least 10", field="r_far_factor")


@dataclass(frozen=True)
class SolveConfig:
    max_iter: int = 2000
    tol: float = 1e-8
    memory: int = 12
    armijo: float = 1e-4
    backtrack: float = 0.5
    initial_guess: str = "linear"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1", field="max_iter")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive", field="tol")
        if not (0 < self.armijo < 0.5):
            raise ConfigurationError("armijo must lie in (0, 1/2)", field="armijo")
        if not (0 < self.backtrack < 1):
            raise ConfigurationError("backtrack must lie in (0,1)", field="backtrack")
        if self.initial_guess not in ("zero", "linear"):
            raise ConfigurationError("initial_guess must be 'zero' or 'linear'", field="initial_guess")
