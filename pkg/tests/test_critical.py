from __future__ import annotations

import math

import numpy as np
import pytest

from fracsemi.critical import (
    BubbleSpec,
    PathConfig,
    build_bubble,
    cutoff_slope,
    energy_E_mu,
    estimate_sobolev_constant,
    from_critical_form,
    gradient_E_mu,
    gradient_norm,
    model_profile,
    mountain_pass_solve,
    nehari_residual,
    ps_threshold,
    ps_threshold_check,
    scaled_profile,
    sobolev_quotient,
    sobolev_sweep,
    sobolev_mesh,
    truncation_f,
)
from fracsemi.dirichlet import principal_eigenpair
from fracsemi.errors import ConfigurationError
from fracsemi.geometry import DomainSpec, build_mesh
from fracsemi.gridfunction import GridFunction
from fracsemi.params import Params
from fracsemi.space import get_space

DISK = Params(s=0.5, p=2, N=2)


@pytest.fixture(scope="module")
def disk_mesh():
    return build_mesh(DomainSpec.ball(1.0, 2), 129, "graded")


@pytest.fixture(scope="module")
def crit(disk_mesh):
    lam1 = principal_eigenpair(DISK, mesh=disk_mesh).lambda1
    return DISK.with_(lam=0.5 * lam1, mu=0.01)


@pytest.fixture(scope="module")
def bubble(crit, disk_mesh):
    return build_bubble(BubbleSpec(0.1, 0.4, 2.0), crit, disk_mesh)


@pytest.fixture(scope="module")
def mp(crit, bubble):
    return mountain_pass_solve(crit, PathConfig(), bubble)


# --- truncation --------------------------------------------------------------


def test_truncation_examples():
    assert truncation_f(2.0, 2) == 1.0
    assert truncation_f(-0.5, 2) == 0.5
    assert truncation_f(-3.0, 2) == 0.0
    assert truncation_f(-0.5, 3) == pytest.approx(0.75)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_truncation_continuity_and_monotonicity(p):
    e = 1e-300
    assert truncation_f(-e, p) == pytest.approx(truncation_f(0.0, p), abs=1e-15)
    assert truncation_f(-1.0 + 1e-16, p) == pytest.approx(truncation_f(-1.0, p), abs=1e-15)
    t = np.linspace(-1.0, 0.0, 1001)
    assert np.all(np.diff(truncation_f(t, p)) >= 0)


# --- energy and gradient -----------------------------------------------------


def test_energy_at_zero(crit, disk_mesh):
    assert energy_E_mu(GridFunction(disk_mesh, np.zeros(disk_mesh.n)), crit) == 0.0


def test_measure_term_for_deep_negative_state():
    prm = Params(s=0.25, p=2, N=1, lam=0.5, mu=0.3)
    mesh = build_mesh(DomainSpec.interval(-1.0, 1.0), 129, "uniform")
    u = GridFunction(mesh, np.where(mesh.fixed, 0.0, -2.0))
    bulk = energy_E_mu(u, prm) - get_space(mesh, prm).energy(u.values) / 2
    # interior plateau gives -(1 - 1/p)|{u <= -1}|; each boundary element
    # ramps 0 -> -2 and contributes int (t + t^2/2) over half of it
    h = mesh.nodes[1] - mesh.nodes[0]
    exact = 0.3 * (-0.5 * (2.0 - 2 * h) - 2 * 5 * h / 12)
    assert bulk == pytest.approx(exact, rel=1e-3)
    assert bulk == pytest.approx(-0.3 * 0.5 * 2.0, rel=0.02)


def test_nonnegative_branch(crit, disk_mesh):
    u = GridFunction.from_callable(disk_mesh, lambda r: 2.0 * (1 - r**2))
    disc = get_space(disk_mesh, crit)
    U = disc.interpolate(u.values)
    q = crit.p_star
    expected = (
        disc.energy(u.values) / 2
        - crit.lam / 2 * disc.integrate(U**2)
        - disc.integrate(U**q) / q
        + crit.mu * disc.integrate(U)
    )
    assert energy_E_mu(u, crit) == pytest.approx(expected, rel=1e-13)


def test_gradient_at_zero_is_the_push(crit, disk_mesh):
    g = gradient_E_mu(GridFunction(disk_mesh, np.zeros(disk_mesh.n)), crit)
    disc = get_space(disk_mesh, crit)
    v = np.where(disk_mesh.fixed, 0.0, 1.0 - disk_mesh.nodes**2)
    assert g.values @ v == pytest.approx(crit.mu * disc.integrate(disc.interpolate(v)), rel=1e-13)


def test_gradient_matches_finite_differences(crit, disk_mesh):
    rng = np.random.default_rng(7)
    r = disk_mesh.nodes
    worst = 0.0
    for _ in range(20):
        a, b = rng.normal(0.0, 2.0, (2, 4))
        u = sum(a[k] * np.cos((k + 0.5) * np.pi * r) for k in range(4))
        v = sum(b[k] * np.cos((k + 0.5) * np.pi * r) for k in range(4))
        u, v = (GridFunction(disk_mesh, np.where(disk_mesh.fixed, 0.0, w)) for w in (u, v))
        an = gradient_E_mu(u, crit).values @ v.values
        errs = []
        for h in (1e-3, 1e-4):
            fd = (energy_E_mu(u + v * h, crit) - energy_E_mu(u - v * h, crit)) / (2 * h)
            errs.append(abs(fd - an))
        rel = errs[1] / max(abs(an), 1.0)
        worst = max(worst, rel)
        # second order: a tenfold smaller step cuts the error by ~100, down
        # to the rounding floor eps |E| / h of the difference quotient
        floor = 64 * np.finfo(float).eps * max(abs(energy_E_mu(u, crit)), 1.0) / 1e-4
        assert errs[1] <= 0.05 * errs[0] + floor
    assert worst < 1e-5


# --- bubbles -----------------------------------------------------------------


def test_bubble_cutoff_exact(crit, bubble, disk_mesh):
    r = disk_mesh.nodes
    U = scaled_profile(r, 0.1, crit)
    inner = r <= 0.4
    assert np.array_equal(bubble.values[inner], U[inner])
    assert np.all(bubble.values[r >= 0.8] == 0.0)
    mid = (r > 0.4) & (r < 0.8)
    assert np.all(bubble.values[mid] > 0) and np.all(bubble.values[mid] < U[mid])


def test_cutoff_slope_exceeds_one(crit):
    for eps in (0.05, 0.1, 0.2):
        assert cutoff_slope(BubbleSpec(eps, 0.4, 2.0), crit) > 1.0


def test_bubble_spec_validation(crit, disk_mesh):
    with pytest.raises(ConfigurationError):
        BubbleSpec(0.3, 0.4)
    with pytest.raises(ConfigurationError):
        BubbleSpec(0.1, 0.4, theta_ratio=1.0)
    with pytest.raises(ConfigurationError):
        build_bubble(BubbleSpec(0.1, 0.6, 2.0), crit, disk_mesh)


@pytest.mark.parametrize("s,p,N", [(0.5, 2, 2), (0.4, 3, 2), (0.25, 2, 1)])
def test_decay_sandwich(s, p, N):
    prm = Params(s=s, p=p, N=N)
    r = np.geomspace(1.0, 1e6, 200)
    ratio = model_profile(r, prm) * r ** ((N - s * p) / (p - 1))
    c1, c2 = ratio.min(), ratio.max()
    assert 0 < c1 <= c2 < math.inf
    # the envelope is attained at infinity: the ratio settles to kappa
    assert ratio[-1] == pytest.approx(1.0, rel=1e-5)


# --- Sobolev constant --------------------------------------------------------


def test_sobolev_quotient_scale_invariant():
    prm = Params(s=0.5, p=2, N=2)
    mesh = sobolev_mesh(prm, 8.0)
    u = GridFunction(mesh, np.where(mesh.fixed, 0.0, model_profile(mesh.nodes, prm) - model_profile(8.0, prm)))
    assert sobolev_quotient(u * 7.0, prm) == pytest.approx(sobolev_quotient(u, prm), rel=1e-13)


@pytest.mark.parametrize("prm", [Params(s=0.5, p=2, N=2), Params(s=0.25, p=2, N=1)])
def test_sobolev_sweep_monotone_and_stable(prm):
    sw = sobolev_sweep(prm)
    v = np.array(sw["values"])
    assert np.all(np.diff(v) < 0)
    assert sw["last_change"] < 0.01
    assert sw["extrapolated"] <= sw["estimate"]


def test_sobolev_needs_finite_exponent():
    with pytest.raises(ConfigurationError):
        estimate_sobolev_constant(Params(s=0.5, p=2, N=1))


# --- mountain pass -----------------------------------------------------------


def test_mountain_pass_geometry(mp):
    rep = mp.report
    assert rep["E_start"] == 0.0
    assert rep["E_end"] <= 0.0
    assert max(rep["path_profile"]) >= rep["c0"] > 0
    assert mp.c_mu >= rep["c0"]
    assert rep["level_ok"]


def test_mountain_pass_critical_point(mp, crit):
    assert gradient_norm(gradient_E_mu(mp.u_mu, crit), crit) <= 1e-5
    assert mp.report["gradient_norm"] <= 1e-5
    assert mp.c_mu > 0
    assert mp.report["hopf_min"] > 0
    assert mp.u_mu.free_values.min() > 0


def test_mountain_pass_refinement(mp, crit, bubble):
    fine = mountain_pass_solve(crit, PathConfig(nodes=65), bubble)
    assert fine.c_mu <= mp.c_mu + 1e-6
    # the discrete path maximum sits just below the saddle level
    assert mp.c_mu - mp.report["path_level"] < 0.01 * mp.c_mu


def test_path_config_validation():
    with pytest.raises(ConfigurationError):
        PathConfig(nodes=7)
    with pytest.raises(ConfigurationError):
        PathConfig(R=2.0, rho=3.0)


# --- diagnostics -------------------------------------------------------------


def test_ps_threshold_examples():
    prm = Params(s=0.5, p=2, N=2)
    assert ps_threshold_check(0.0, 0.0, 1.0, prm, math.pi)
    t = ps_threshold(0.01, 1.774, prm, math.pi)
    assert not ps_threshold_check(t, 0.01, 1.774, prm, math.pi)
    assert t == pytest.approx(0.25 * 1.774**2 - 0.5 * 0.01 * math.pi)
    with pytest.raises(ConfigurationError):
        ps_threshold_check(0.0, 0.0, 0.0, prm, 1.0)


def test_ps_threshold_on_computed_level(mp, crit):
    S = estimate_sobolev_constant(DISK)
    assert S == pytest.approx(1.774, rel=5e-3)
    assert ps_threshold_check(mp.c_mu, crit.mu, S, crit, math.pi)


def test_nehari_residuals(mp, crit, disk_mesh):
    assert nehari_residual(mp.u_mu, crit) <= 1e-4
    assert nehari_residual(mp.u_mu * 2.0, crit) > 0.1
    phi = principal_eigenpair(DISK, mesh=disk_mesh).phi1
    assert nehari_residual(phi, crit) > 1e-3
    with pytest.raises(ConfigurationError):
        nehari_residual(mp.u_mu * -1.0, crit)


def test_critical_form_round_trip(mp, crit):
    v = mp.u_mu
    out = from_critical_form(v, 0.01, crit)
    q = crit.p_star
    assert out["mu"] == pytest.approx(0.01 ** ((q - 2) / (q - 1)), rel=1e-14)
    np.testing.assert_allclose((out["v"] * (out["mu"] ** (1 / (q - 2)))).values, v.values, rtol=1e-14)
