from __future__ import annotations

import math

import numpy as np
import pytest

from fracsemi.dirichlet import default_mesh, principal_eigenpair
from fracsemi.errors import ConfigurationError
from fracsemi.gridfunction import GridFunction
from fracsemi.moser import (
    MoserConstants,
    c_star,
    check_lemma_A1,
    check_lemma_A2,
    choose_lambda,
    compute_bound,
    domain_sobolev_constant,
    growth_constant,
    k_sequence,
    moser_exponent,
    tail_integral,
    upper_constant,
    verify_bound_on_solution,
)
from fracsemi.params import Params
from fracsemi.semipositone import solve_lane_emden
from fracsemi.space import get_space

LE = Params(s=0.5, p=2, r=3)
SAMPLES = 100_000


@pytest.fixture(scope="module")
def lane_emden():
    return solve_lane_emden(LE).solution


@pytest.fixture(scope="module")
def S4(lane_emden):
    return domain_sobolev_constant(lane_emden.mesh, LE, 4.0)


# --- elementary inequalities -------------------------------------------------


@pytest.mark.parametrize("p", [2.0, 2.5, 3.0])
@pytest.mark.parametrize("beta", [1.0, 2.0, 3.5])
def test_truncated_power_inequality(p, beta):
    assert check_lemma_A1(SAMPLES, p, beta, seed=1) <= 1e-9


@pytest.mark.parametrize("p", [2.0, 2.5, 3.0])
@pytest.mark.parametrize("phi", ["square", "soft_abs"])
def test_convex_composition_inequality(p, phi):
    assert check_lemma_A2(SAMPLES, p, phi, seed=2) <= 1e-9


def test_truncated_power_linear_reduction():
    rng = np.random.default_rng(3)
    a, b, t = rng.exponential(1.0, (3, 10_000))
    at, bt = np.minimum(a, t), np.minimum(b, t)
    assert np.all((a - b) * (at - bt) >= (at - bt) ** 2 - 1e-15)
    assert check_lemma_A1(10_000, 2.0, 1.0, seed=3) <= 1e-12


def test_convex_composition_identity_is_equality():
    assert abs(check_lemma_A2(10_000, 2.5, "identity", seed=4)) <= 1e-12


def test_convex_composition_custom_pair():
    f = (lambda x: np.exp(x), lambda x: np.exp(x))
    assert check_lemma_A2(10_000, 2.0, f, seed=5) <= 1e-9


def test_truncated_power_preconditions():
    with pytest.raises(ConfigurationError):
        check_lemma_A1(10, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        check_lemma_A1(10, 2.0, 0.5)


# --- exponents and sums ------------------------------------------------------


def test_moser_exponent_rules():
    assert moser_exponent(Params(s=0.5, p=2, N=2)) == 4.0
    assert moser_exponent(Params(s=0.5, p=2, N=1)) == 4.0
    assert moser_exponent(Params(s=0.5, p=2, N=1), r=5) == 6.0


@pytest.mark.parametrize("p,q", [(2.0, 4.0), (2.0, 10.0), (3.0, 4.5)])
def test_upper_constant_is_the_supremum(p, q):
    k = k_sequence(p, q, 300)
    vals = k ** (1.0 / np.sqrt(k))
    peak = int(np.argmax(vals))
    assert np.all(np.diff(vals[peak:]) <= 0)
    assert vals[-1] == pytest.approx(1.0, abs=1e-12)
    assert abs(upper_constant(p, q) - vals.max()) <= 1e-12
    assert upper_constant(p, q) > 1


@pytest.mark.parametrize("p,q", [(2.0, 4.0), (2.0, 10.0), (3.0, 4.5)])
def test_geometric_sums(p, q):
    j = np.arange(1, 201)
    assert np.sum((p / q) ** j) == pytest.approx(p / (q - p), abs=1e-12)
    assert np.sum((p / q) ** (j / 2)) == pytest.approx(math.sqrt(p) / (math.sqrt(q) - math.sqrt(p)), abs=1e-12)


def test_growth_constant_rules():
    prm = Params(s=0.5, p=2, N=2, lam=1.0, mu=0.01)
    assert growth_constant("eigen", prm, lam=1.158) == 1.158
    assert growth_constant("eigen", prm, lam=0.5) == 1.0
    assert growth_constant("semipositone", prm, r=3, gamma=0.5) == 1.0
    assert growth_constant("semipositone", prm, r=3, gamma=2.0) == 8.0
    assert growth_constant("critical", prm) == 2.0
    assert growth_constant("critical", prm, lam=0.5, mu=3.0) == 3.5
    with pytest.raises(ConfigurationError):
        growth_constant("other", prm)


# --- Lambda and the bound ----------------------------------------------------


def test_choose_lambda_bounded_function(S4):
    mesh = default_mesh(LE, 129)
    u = GridFunction.from_callable(mesh, lambda x: 3.0 * (1 - x**2))
    assert u.sup_norm() == 3.0
    assert choose_lambda(u, LE, S4, q=4.0) <= 4.0
    assert tail_integral(u, LE, 4.0, 4.0) == 0.0


def test_choose_lambda_zero(S4):
    mesh = default_mesh(LE, 65)
    assert choose_lambda(GridFunction(mesh, np.zeros(65)), LE, S4, q=4.0) == 2.0


def test_tail_decreases(lane_emden):
    levels = np.linspace(0.0, 1.3, 14)
    tails = [tail_integral(lane_emden, LE, L, 4.0) for L in levels]
    assert np.all(np.diff(tails) < 0)
    assert tail_integral(lane_emden, LE, 2.0, 4.0) == 0.0


def test_compute_bound_arithmetic():
    prm = Params(s=0.5, p=2, N=1)
    consts = MoserConstants(1.0, 2.0, 1.0, 4.0, 2.0, q=10.0)
    b = compute_bound(consts, 1.0, prm)
    assert b == pytest.approx(4 ** (1 / 8) * 2 ** (1 / (math.sqrt(2) * (math.sqrt(10) - math.sqrt(2)))), rel=1e-14)
    assert b == pytest.approx(1.574, abs=1e-3)
    assert compute_bound(consts, 0.0, prm) == 0.0
    assert compute_bound(consts, 2.0, prm) == pytest.approx(2 * b, rel=1e-15)


def test_compute_bound_needs_q_above_p():
    with pytest.raises(ConfigurationError):
        compute_bound(MoserConstants(1.0, 2.0, 1.0, 4.0, 2.0, q=2.0), 1.0, Params(s=0.5, p=2, N=1))


def test_c_star_formula():
    assert c_star(1.0, 2.0, 1.0, 2.0, 4.0) == pytest.approx(2 * (0.5 + 4.0))
    assert c_star(1.0, 2.0, 2.0, 2.0, 4.0) == pytest.approx(2 * 4.5 / 4)


# --- certificates ------------------------------------------------------------


def test_certificate_lane_emden(lane_emden, S4):
    rep = verify_bound_on_solution(lane_emden, LE, S4, C1=growth_constant("semipositone", LE, r=3), q=4.0)
    assert rep["pass"]
    assert rep["C_star_raw"] > 1
    assert rep["C_upper_star"] > 1
    assert rep["C2"] == 1.0
    assert len(rep["steps"]) == 3 and all(s["pass"] for s in rep["steps"])
    assert rep["sup_norm"] <= rep["bound"]


def test_certificate_eigenfunction():
    prm = Params(s=0.5, p=2)
    res = principal_eigenpair(prm, mesh=default_mesh(prm, 257))
    q = moser_exponent(prm)
    S = domain_sobolev_constant(res.phi1.mesh, prm, q)
    rep = verify_bound_on_solution(res.phi1, prm, S, C1=growth_constant("eigen", prm, lam=res.lambda1), q=q)
    assert rep["pass"]


def test_certificate_zero(S4):
    mesh = default_mesh(LE, 65)
    rep = verify_bound_on_solution(GridFunction(mesh, np.zeros(65)), LE, S4, q=4.0)
    assert rep["pass"] and rep["bound"] == 0.0 and rep["steps"] == []


def test_certificate_tracks_amplitude(lane_emden, S4):
    # rescaling u moves Lambda, so the margin is not scale-blind
    one = verify_bound_on_solution(lane_emden, LE, S4, q=4.0)
    ten = verify_bound_on_solution(lane_emden * 10.0, LE, S4, q=4.0)
    assert ten["Lambda"] > one["Lambda"]
    assert ten["sup_norm"] / ten["bound"] < one["sup_norm"] / one["bound"]


def test_domain_sobolev_constant_scale(lane_emden):
    S4 = domain_sobolev_constant(lane_emden.mesh, LE, 4.0)
    S6 = domain_sobolev_constant(lane_emden.mesh, LE, 6.0)
    assert S4 > 0 and S6 > 0
    # a Rayleigh-type upper bound: any competitor's quotient dominates the minimum
    disc = get_space(lane_emden.mesh, LE)
    v = lane_emden.values
    assert S4 <= disc.energy(v) / disc.lp_norm(v, 4.0) ** 2 * (1 + 1e-9)
