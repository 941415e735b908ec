from __future__ import annotations

import numpy as np
import pytest

from fracsemi.dirichlet import default_mesh, hopf_quotient
from fracsemi.errors import ConfigurationError
from fracsemi.gridfunction import GridFunction
from fracsemi.operator import residual_norm, weak_residual
from fracsemi.params import Params, SolveConfig
from fracsemi.semipositone import (
    ContinuationConfig,
    continue_in_gamma,
    gamma_star,
    gidas_spruck_rescale,
    residual_S,
    solve_lane_emden,
    solve_original,
    unscale_to_original,
)

LE = Params(s=0.5, p=2, r=3)
TOL = SolveConfig().tol
GRID = tuple(np.round(np.arange(0.0, 1.0001, 0.1), 10))


@pytest.fixture(scope="module")
def lane_emden():
    return solve_lane_emden(LE)


@pytest.fixture(scope="module")
def branch(lane_emden):
    return continue_in_gamma(ContinuationConfig(gammas=GRID), LE, start=lane_emden)


def test_lane_emden_weak_residual(lane_emden):
    w = lane_emden.solution
    rhs = GridFunction(w.mesh, np.maximum(w.values, 0.0) ** 3)
    assert residual_norm(weak_residual(w, rhs, LE), LE) <= TOL
    assert lane_emden.extra["weak_residual"] <= TOL


def test_lane_emden_sup_floor(lane_emden):
    assert lane_emden.extra["lambda1"] == pytest.approx(1.158, rel=0.02)
    assert lane_emden.extra["sup_floor"] == pytest.approx(1.076, abs=2e-3)
    assert lane_emden.solution.sup_norm() >= lane_emden.extra["sup_floor"]
    assert lane_emden.extra["nontrivial"]


def test_lane_emden_nonnegative_and_hopf(lane_emden):
    w = lane_emden.solution
    assert w.free_values.min() > 0
    assert lane_emden.hopf_min > 0
    assert hopf_quotient(w, LE)["min"] == pytest.approx(lane_emden.hopf_min)


def test_lane_emden_needs_r():
    with pytest.raises(ConfigurationError):
        solve_lane_emden(Params(s=0.5, p=2))


def test_residual_S_at_lane_emden(lane_emden):
    assert residual_S(0.0, lane_emden.solution, LE) <= 2 * TOL


def test_zero_is_not_a_solution_for_positive_gamma():
    w = GridFunction(default_mesh(LE, 129), np.zeros(129))
    assert residual_S(1.0, w, LE) > 0.5


def test_branch_starts_at_lane_emden(branch, lane_emden):
    assert branch[0].gamma == 0.0
    np.testing.assert_array_equal(branch[0].w.values, lane_emden.solution.values)


def test_branch_points_certified(branch):
    assert sum(bp.gamma > 0 for bp in branch) >= 5
    for bp in branch:
        assert bp.residual <= 2 * TOL
        assert residual_S(bp.gamma, bp.w, LE) <= 2 * TOL
        assert bp.positive == (bp.hopf_min > 0 and bp.interior_min > 0)
        assert bp.positive


def test_branch_sup_norm_continuous(branch):
    sup = np.array([bp.sup_norm for bp in branch])
    assert np.all(np.abs(np.diff(sup)) / sup[:-1] < 0.10)
    # the amplitude grows as the sink gets stronger
    assert np.all(np.diff(sup) > 0)


def test_gamma_star_bracketed(branch):
    gs = gamma_star(branch)
    assert gs == max(bp.gamma for bp in branch)
    assert 0.9 <= gs < 1.0
    # the stored point closest to loss of positivity has a small Hopf margin
    assert branch[-1].hopf_min < 0.05


def test_unscale_examples(lane_emden):
    w = lane_emden.solution
    out = unscale_to_original(w, 1.0, LE)
    np.testing.assert_array_equal(out["u"].values, w.values)
    assert out["mu"] == 1.0
    out = unscale_to_original(w, 0.1, LE)
    assert out["mu"] == pytest.approx(0.01, rel=1e-14)
    np.testing.assert_allclose((out["u"] * 0.1).values, w.values, rtol=1e-15)
    with pytest.raises(ZeroDivisionError):
        unscale_to_original(w, 0.0, LE)


def test_unscaling_consistency(branch):
    bp = next(b for b in branch if b.gamma == pytest.approx(0.3))
    un = unscale_to_original(bp.w, bp.gamma, LE)
    u, res, _ = solve_original(un["mu"], LE, u0=un["u"])
    assert res <= TOL
    assert np.max(np.abs(u.values - un["u"].values)) <= 2 * TOL


def test_gidas_spruck_normalization(lane_emden):
    out = gidas_spruck_rescale(lane_emden.solution, LE)
    v = out["v"]
    k = int(np.argmax(v.values))
    assert v.mesh.nodes[k] == 0.0
    assert v.values[k] == 1.0
    assert v.values.max() == 1.0 and v.values.min() >= 0.0
    assert out["mu_k"] == pytest.approx(out["M_k"] ** -2.0)


def test_gidas_spruck_scale_example():
    mesh = default_mesh(LE, 65)
    u = GridFunction.from_callable(mesh, lambda x: 16.0 * (1 - x**2))
    out = gidas_spruck_rescale(u, Params(s=0.5, p=2, q=3))
    assert out["M_k"] == 16.0
    assert out["mu_k"] == pytest.approx(1 / 256, rel=1e-14)
    assert out["v"].mesh.domain.bounds == pytest.approx((-256.0, 256.0))


def test_gidas_spruck_rejects_zero():
    mesh = default_mesh(LE, 33)
    with pytest.raises(ConfigurationError):
        gidas_spruck_rescale(GridFunction(mesh, np.zeros(33)), LE)


@pytest.mark.parametrize(
    "kw",
    [
        {"gammas": (0.1, 0.2)},
        {"gammas": (0.0, 0.2, 0.1)},
        {"gammas": (0.0,)},
        {"omega": 0.0},
        {"omega": 1.5},
    ],
)
def test_continuation_config_validation(kw):
    with pytest.raises(ConfigurationError):
        ContinuationConfig(**kw)
