"""Acceptance criteria 1-10, one pass/fail line each.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import functools
import math
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fracsemi.barrier import BarrierSpec, verify_scaled_estimate, verify_upper_estimate  # noqa: E402
from fracsemi.cli import OUTPUT_ROOT_ENV, run  # noqa: E402
from fracsemi.critical import (  # noqa: E402
    BubbleSpec,
    PathConfig,
    build_bubble,
    energy_E_mu,
    estimate_sobolev_constant,
    gradient_E_mu,
    gradient_norm,
    mountain_pass_solve,
    nehari_residual,
    ps_threshold_check,
)
from fracsemi.dirichlet import comparison_check, default_mesh, principal_eigenpair  # noqa: E402
from fracsemi.geometry import DomainSpec, ScaledDomain, build_mesh  # noqa: E402
from fracsemi.gridfunction import GridFunction  # noqa: E402
from fracsemi.moser import (  # noqa: E402
    MoserConstants,
    check_lemma_A1,
    check_lemma_A2,
    compute_bound,
    domain_sobolev_constant,
    growth_constant,
    moser_exponent,
    verify_bound_on_solution,
)
from fracsemi.operator import ClosedForm, eval_fplap_pointwise  # noqa: E402
from fracsemi.params import Params, QuadratureConfig, SolveConfig  # noqa: E402
from fracsemi.semipositone import ContinuationConfig, continue_in_gamma, residual_S, solve_lane_emden  # noqa: E402

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RESULTS: dict[int, tuple[bool, str]] = {}

FUNCTIONS = {
    "sqrt": (lambda x: np.sqrt(np.maximum(1 - x**2, 0.0)), ()),
    "hat": (lambda x: 1 - np.abs(x), (0.0,)),
    "parabola": (lambda x: 1 - x**2, ()),
    "bump": (lambda x: (1 - x**2) ** 2, ()),
    "skew": (lambda x: (1 - x**2) * (1 + 0.5 * x), ()),
}


def _closed(name, dom=None, scale=1.0):
    fn, kinks = FUNCTIONS[name]
    return ClosedForm(lambda x: fn(np.asarray(x) / scale), dom or DomainSpec.interval(), tuple(scale * k for k in kinks))


def record(k: int, ok: bool, detail: str) -> None:
    RESULTS[k] = (bool(ok), detail)
    assert ok, detail


def criterion(k: int):
    """Record an exception raised before ``record`` as a failure of criterion k."""

    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except Exception as exc:
                RESULTS.setdefault(k, (False, f"{type(exc).__name__}: {exc}"))
                raise

        return inner

    return wrap


# --- shared solves -----------------------------------------------------------

HALF = Params(s=0.5, p=2)
LE = Params(s=0.5, p=2, r=3)
DISK = Params(s=0.5, p=2, N=2)


@functools.cache
def eigen(n: int):
    return principal_eigenpair(HALF, mesh=default_mesh(HALF, n))


@functools.cache
def branch():
    start = solve_lane_emden(LE)
    grid = tuple(np.round(np.arange(0.0, 1.0001, 0.1), 10))
    return start, continue_in_gamma(ContinuationConfig(gammas=grid), LE, start=start)


@functools.cache
def critical():
    mesh = build_mesh(DomainSpec.ball(1.0, 2), 129, "graded")
    lam1 = principal_eigenpair(DISK, mesh=mesh).lambda1
    prm = DISK.with_(lam=0.5 * lam1, mu=0.01)
    bub = build_bubble(BubbleSpec(0.1, 0.4, 2.0), prm, mesh)
    return prm, mountain_pass_solve(prm, PathConfig(), bub)


# --- criteria ----------------------------------------------------------------


@criterion(1)
def test_criterion_1_linear_operator_oracle():
    x = np.linspace(-1, 1, 102)[1:-1]
    t0 = time.perf_counter()
    vals = eval_fplap_pointwise(_closed("sqrt"), x, HALF, QuadratureConfig(tol=1e-8))
    dt = time.perf_counter() - t0
    dev = float(np.max(np.abs(vals - vals.mean())) / abs(vals.mean()))
    record(1, dev <= 0.01 and dt < 10.0, f"max deviation {dev:.2e} (<= 1e-2), {x.size} points in {dt:.2f} s (< 10 s)")


@criterion(2)
def test_criterion_2_invariants():
    qc = QuadratureConfig(tol=1e-10)
    prm = Params(s=0.4, p=3)
    x = np.array([-0.6, 0.1, 0.85])
    hom = scal = 0.0
    tau = 0.37
    for name in FUNCTIONS:
        base = eval_fplap_pointwise(_closed(name), x, prm, qc)
        for t in (0.5, 3.0):
            v = eval_fplap_pointwise(_closed(name).scaled(t), x, prm, qc)
            hom = max(hom, float(np.max(np.abs(v - t ** (prm.p - 1) * base) / np.abs(base))))
        small = eval_fplap_pointwise(_closed(name, DomainSpec.interval(-tau, tau, delta=0.01), tau), tau * x, prm, qc)
        scal = max(scal, float(np.max(np.abs(small - tau ** (-prm.sp) * base) / np.abs(base))))
    record(2, hom <= 1e-10 and scal <= 1e-6, f"homogeneity {hom:.2e} (<= 1e-10), scaling law {scal:.2e} (<= 1e-6), 5 functions")


@criterion(3)
def test_criterion_3_barrier_exponent():
    t0 = time.perf_counter()
    rep = verify_upper_estimate(BarrierSpec(DomainSpec.interval(delta=0.1), 0.2), Params(s=0.4, p=3))
    dt = time.perf_counter() - t0
    ok = rep.d.size == 40 and rep.all_negative and abs(rep.slope + 0.8) <= 0.05 and dt < 60
    record(3, ok, f"{rep.d.size} samples all negative={rep.all_negative}, slope {rep.slope:.4f} (-0.8 +/- 0.05), {dt:.1f} s")


@criterion(4)
def test_criterion_4_scaled_barrier():
    prm = Params(s=0.4, p=3)
    c0 = np.array([verify_scaled_estimate(ScaledDomain(DomainSpec.interval(), 1.0, t), prm, 1.1).c0 for t in (1.0, 0.5, 0.25)])
    ratio = float(c0.max() / c0.min()) if np.all(c0 > 0) else math.inf
    record(4, ratio < 2.0, f"c0 = {np.array2string(c0, precision=4)}, max/min {ratio:.4f} (< 2)")


@criterion(5)
def test_criterion_5_comparison():
    prm = Params(s=0.4, p=3)
    mesh = default_mesh(prm, 129)
    rng = np.random.default_rng(20)
    k = np.arange(1, 5)

    def smooth():
        a = rng.normal(0, 1, 4)
        v = (a[None, :] * np.cos(0.5 * np.pi * np.outer(mesh.nodes, k) + k)).sum(axis=1)
        return np.where(mesh.fixed, 0.0, v)

    worst = math.inf
    for _ in range(20):
        f1 = smooth()
        f2 = f1 + np.abs(smooth())
        worst = min(worst, comparison_check(GridFunction(mesh, f1), GridFunction(mesh, f2), prm)["min_difference"])
    record(5, worst >= -1e-6, f"min K(f2) - K(f1) over 20 pairs {worst:.3e} (>= -1e-6)")


@criterion(6)
def test_criterion_6_eigenpair():
    e1, e2 = eigen(513), eigen(1025)
    change = abs(e2.lambda1 - e1.lambda1) / e2.lambda1
    err = abs(e1.lambda1 - 1.158) / 1.158
    pos = bool(np.all(e1.phi1.free_values > 0) and np.all(e2.phi1.free_values > 0))
    record(
        6,
        change < 0.01 and err <= 0.02 and pos,
        f"lambda1 {e1.lambda1:.6f} -> {e2.lambda1:.6f} (change {change:.1e} < 1e-2), "
        f"vs 1.158 {err:.1e} (<= 2e-2), phi1 > 0 {pos}",
    )


@criterion(7)
def test_criterion_7_semipositone_branch():
    start, br = branch()
    tol = SolveConfig().tol
    pts = [b for b in br if b.gamma > 0]
    res = max(residual_S(b.gamma, b.w, LE) for b in br)
    imin = min(b.interior_min for b in br)
    hmin = min(b.hopf_min for b in br)
    floor = start.extra["lambda1"] ** (1.0 / (LE.r - LE.p + 1.0))
    sup0 = br[0].sup_norm
    ok = len(pts) >= 5 and res <= 2 * tol and imin > 0 and hmin > 0 and sup0 >= 0.98 * floor
    record(
        7,
        ok,
        f"{len(pts)} points with gamma > 0 (>= 5), max residual_S {res:.1e} (<= {2 * tol:.0e}), "
        f"interior min {imin:.3e}, hopf min {hmin:.3e}, |w0| {sup0:.4f} >= 0.98*{floor:.4f}",
    )


@criterion(8)
def test_criterion_8_critical():
    prm, mp = critical()
    g = gradient_norm(gradient_E_mu(mp.u_mu, prm), prm)
    S = estimate_sobolev_constant(DISK)
    ps = ps_threshold_check(mp.c_mu, prm.mu, S, prm, math.pi)
    neh = nehari_residual(mp.u_mu, prm)
    hq = mp.report["hopf_min"]
    # finite-difference consistency at the critical point and at a generic state
    mesh = mp.u_mu.mesh
    r = mesh.nodes
    rng = np.random.default_rng(8)
    fd_err = 0.0
    for u in (mp.u_mu, GridFunction(mesh, np.where(mesh.fixed, 0.0, 2 * np.cos(1.3 * r) - 0.5))):
        for _ in range(5):
            b = rng.normal(size=4)
            v = GridFunction(mesh, np.where(mesh.fixed, 0.0, sum(b[j] * np.cos((j + 0.5) * np.pi * r) for j in range(4))))
            an = gradient_E_mu(u, prm).values @ v.values
            h = 1e-4
            fd = (energy_E_mu(u + v * h, prm) - energy_E_mu(u - v * h, prm)) / (2 * h)
            fd_err = max(fd_err, abs(fd - an) / max(abs(an), 1.0))
    ok = g <= 1e-5 and mp.c_mu > 0 and ps and neh <= 1e-4 and hq > 0 and fd_err <= 1e-5
    record(
        8,
        ok,
        f"|DE| {g:.1e} (<= 1e-5), c_mu {mp.c_mu:.5f} > 0, ps_threshold {ps} (S = {S:.4f}), "
        f"nehari {neh:.1e} (<= 1e-4), hopf min {hq:.3f}, FD rel {fd_err:.1e} (<= 1e-5)",
    )


@criterion(9)
def test_criterion_9_moser():
    checks = []
    # eigenfunctions from criterion 6
    for n in (513, 1025):
        e = eigen(n)
        q = moser_exponent(HALF)
        S = domain_sobolev_constant(e.phi1.mesh, HALF, q)
        checks.append(verify_bound_on_solution(e.phi1, HALF, S, growth_constant("eigen", HALF, lam=e.lambda1), q)["pass"])
    # every branch point from criterion 7
    _, br = branch()
    q = moser_exponent(LE, LE.r)
    S = domain_sobolev_constant(br[0].w.mesh, LE, q)
    for b in br:
        C1 = growth_constant("semipositone", LE, r=LE.r, gamma=b.gamma)
        checks.append(verify_bound_on_solution(b.w, LE, S, C1, q)["pass"])
    # the mountain-pass solution from criterion 8
    prm, mp = critical()
    S = estimate_sobolev_constant(DISK)
    checks.append(verify_bound_on_solution(mp.u_mu, prm, S, growth_constant("critical", prm))["pass"])
    worst = -math.inf
    for p in (2.0, 2.5, 3.0):
        for beta in (1.0, 2.0):
            worst = max(worst, check_lemma_A1(100_000, p, beta, seed=11))
        for phi in ("square", "soft_abs"):
            worst = max(worst, check_lemma_A2(100_000, p, phi, seed=12))
    arith = compute_bound(MoserConstants(1.0, 2.0, 1.0, 4.0, 2.0, q=10.0), 1.0, Params(s=0.5, p=2, N=1))
    ok = all(checks) and worst <= 1e-9 and abs(arith - 1.574) <= 1e-3
    record(
        9,
        ok,
        f"certificates {sum(checks)}/{len(checks)} pass, inequality suites worst {worst:.1e} (<= 1e-9), "
        f"example bound {arith:.5f} (1.574 +/- 1e-3)",
    )


@criterion(10)
def test_criterion_10_determinism(monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    names = ("critical.ini", "branch.ini", "barrier.ini")
    with tempfile.TemporaryDirectory() as tmp:
        roots = [Path(tmp) / "a", Path(tmp) / "b"]
        for root in roots:
            root.mkdir()
            for name in names:
                assert run(shutil.copy(CONFIGS / name, root / name)) == 0
        files = sorted(f.relative_to(roots[0]) for f in roots[0].rglob("*.csv"))
        same = sum((roots[0] / f).read_bytes() == (roots[1] / f).read_bytes() for f in files)
    record(10, len(files) > 0 and same == len(files), f"{same}/{len(files)} CSV files byte-identical across repeated runs")


def summary_lines() -> list[str]:
    out = []
    for k in range(1, 11):
        if k in RESULTS:
            ok, detail = RESULTS[k]
            out.append(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            out.append(f"criterion {k:2d}: not run")
    return out


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
