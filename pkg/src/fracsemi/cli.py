"""Batch runner: ``fracsemi run CONFIG`` and ``fracsemi emit-plotdata DIR``.

Configs are INI files. ``[run]`` names the subcommand, output directory
and seed; ``[params]``, ``[domain]``, ``[mesh]`` and ``[solver]`` hold the
shared settings; each subcommand reads its own section of the same name.
Relative output directories resolve against ``$FRACSEMI_OUTPUT_ROOT`` when
it is set.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import ConfigurationError, FracSemiError
from .geometry import DomainSpec, Mesh, ScaledDomain, build_mesh
from .gridfunction import GridFunction
from .io import read_csv, sha256, write_csv, write_json
from .params import Params, QuadratureConfig, SolveConfig

SUBCOMMANDS = (
    "eval-op",
    "verify-barrier",
    "solve-dirichlet",
    "eigen",
    "semipositone-branch",
    "critical-mp",
    "moser-certify",
)

OUTPUT_ROOT_ENV = "FRACSEMI_OUTPUT_ROOT"


# --- config parsing ----------------------------------------------------------


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {key} = {raw!r}", field=key) from exc


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _opt_float(raw: str):
    return None if raw.lower() in ("", "none") else float(raw)


@dataclass
class ExperimentConfig:
    subcommand: str
    params: Params
    domain: DomainSpec
    n: int
    grading: str
    exponent: float
    solve: SolveConfig
    output: Path
    seed: int
    sections: dict = field(default_factory=dict)
    echo: dict = field(default_factory=dict)

    def section(self, name: str):
        return self.sections.get(name)

    def mesh(self) -> Mesh:
        return build_mesh(self.domain, self.n, self.grading, self.exponent)


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}", field="config")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}", field="config") from exc
    if "run" not in cp:
        raise ConfigurationError("missing [run] section", field="run")
    run = cp["run"]
    sub = run.get("subcommand", "").strip()
    if sub not in SUBCOMMANDS:
        raise ConfigurationError(f"unknown subcommand {sub!r}", field="subcommand")
    seed = _get(run, "seed", int, 0)
    out = Path(run.get("output", f"runs/{sub}"))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    elif not out.is_absolute():
        out = path.parent / out

    ps = cp["params"] if "params" in cp else None
    params = Params(
        s=_get(ps, "s", float, 0.5),
        p=_get(ps, "p", float, 2.0),
        N=_get(ps, "N", int, 1),
        r=_get(ps, "r", _opt_float, None),
        q=_get(ps, "q", _opt_float, None),
        lam=_get(ps, "lambda", float, 0.0),
        mu=_get(ps, "mu", float, 0.0),
        gamma=_get(ps, "gamma", float, 0.0),
        beta=_get(ps, "beta", _opt_float, None),
        theta_exp=_get(ps, "theta", _opt_float, None),
        theta_ratio=_get(ps, "theta_ratio", float, 2.0),
    )
    ds = cp["domain"] if "domain" in cp else None
    kind = _get(ds, "kind", str, "interval" if params.N == 1 else "ball")
    delta = _get(ds, "delta", float, 0.1)
    if kind == "interval":
        domain = DomainSpec.interval(_get(ds, "a", float, -1.0), _get(ds, "b", float, 1.0), delta=delta)
    elif kind == "ball":
        domain = DomainSpec.ball(_get(ds, "radius", float, 1.0), _get(ds, "N", int, params.N), delta=delta)
    else:
        raise ConfigurationError(f"unknown domain kind {kind!r}", field="kind")
    ms = cp["mesh"] if "mesh" in cp else None
    n = _get(ms, "n", int, 257)
    grading = _get(ms, "grading", str, "graded")
    exponent = _get(ms, "exponent", float, 2.0)
    ss = cp["solver"] if "solver" in cp else None
    solve = SolveConfig(
        max_iter=_get(ss, "max_iter", int, 2000),
        tol=_get(ss, "tol", float, 1e-8),
        memory=_get(ss, "memory", int, 12),
    )
    sections = {name: cp[name] for name in cp.sections()}
    echo = {name: dict(cp[name]) for name in cp.sections()}
    cfg = ExperimentConfig(sub, params, domain, n, grading, exponent, solve, out, seed, sections, echo)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    prm = cfg.params
    # mesh construction checks n and grading
    if cfg.n < 8:
        raise ConfigurationError("mesh n must be at least 8", field="n")
    if cfg.grading not in ("uniform", "graded"):
        raise ConfigurationError("grading must be 'uniform' or 'graded'", field="grading")
    if cfg.domain.is_radial != (prm.N >= 2):
        raise ConfigurationError("N must match the domain", field="N")
    sub = cfg.subcommand
    if sub == "verify-barrier":
        sec = cfg.section("verify-barrier")
        beta = _get(sec, "beta", _opt_float, prm.beta)
        if beta is None:
            raise ConfigurationError("verify-barrier needs beta", field="beta")
        prm.require_beta(beta)
        theta = _get(sec, "theta", _opt_float, prm.theta_exp)
        if theta is not None:
            prm.require_theta(theta)
    elif sub in ("semipositone-branch",):
        prm.require_r()
    elif sub == "critical-mp":
        prm.require_critical()
    elif sub == "moser-certify":
        src = _get(cfg.section("moser-certify"), "source", str, "lane-emden")
        if src not in ("lane-emden", "eigen"):
            raise ConfigurationError(f"unknown source {src!r}", field="source")
        if src == "lane-emden":
            prm.require_r()


# --- subcommand runners ------------------------------------------------------


def _closed_form(name: str, dom: DomainSpec, prm: Params):
    from .operator import ClosedForm

    lo, hi = dom.bounds
    if dom.is_radial:
        R = dom.radius

        def xhat(x):
            return np.asarray(x) / R

        kinks = ()
    else:
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)

        def xhat(x):
            return (np.asarray(x) - c) / h

        kinks = ()
    if name == "torsion":
        return ClosedForm(lambda x: np.maximum(1.0 - xhat(x) ** 2, 0.0) ** prm.s, dom, kinks)
    if name == "parabola":
        return ClosedForm(lambda x: 1.0 - xhat(x) ** 2, dom, kinks)
    raise ConfigurationError(f"unknown function {name!r}", field="function")


def run_eval_op(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .operator import eval_fplap_pointwise

    sec = cfg.section("eval-op")
    name = _get(sec, "function", str, "torsion")
    count = _get(sec, "points", int, 100)
    tol = _get(sec, "tol", float, 1e-8)
    u = _closed_form(name, cfg.domain, cfg.params)
    lo, hi = cfg.domain.bounds
    if cfg.domain.is_radial:
        x = np.linspace(0.0, hi, count + 2)[:-2]
    else:
        x = np.linspace(lo, hi, count + 2)[1:-1]
    vals = np.asarray(eval_fplap_pointwise(u, x, cfg.params, QuadratureConfig(tol=tol)))
    mean = float(vals.mean())
    files = [write_csv(out / "op.csv", ["x", "value"], zip(x, vals))]
    summary = {"function": name, "mean": mean, "max_rel_deviation": float(np.max(np.abs(vals - mean)) / abs(mean))}
    files.append(write_json(out / "op.json", summary))
    return files


def run_verify_barrier(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .barrier import BarrierSpec, scaled_estimate_sweep, verify_upper_estimate

    sec = cfg.section("verify-barrier")
    prm = cfg.params
    beta = _get(sec, "beta", _opt_float, prm.beta)
    rep = verify_upper_estimate(BarrierSpec(cfg.domain, beta), prm)
    files = [write_csv(out / "barrier.csv", ["d", "value", "bound"], zip(rep.d, rep.values, rep.bound))]
    summary = {"slope": rep.slope, "C": rep.C, "c0": None, "pass": rep.all_negative, "exponent": rep.exponent}
    summary["slope_ok"] = bool(abs(rep.slope - rep.exponent) <= 0.05)
    theta = _get(sec, "theta", _opt_float, prm.theta_exp)
    if theta is not None:
        taus = _get(sec, "taus", _floats, (1.0, 0.5, 0.25))
        lo, hi = cfg.domain.bounds
        x0 = hi if not cfg.domain.is_radial else tuple([cfg.domain.radius] + [0.0] * (cfg.domain.N - 1))
        sw = scaled_estimate_sweep(cfg.domain, x0, taus, prm, theta)
        files.append(write_csv(out / "scaled.csv", ["tau", "c0"], zip(taus, sw["c0"])))
        summary.update({"c0": sw["lower_bound"], "c0_ratio": sw["ratio"], "c0_uniform": sw["uniform"]})
    files.append(write_json(out / "barrier.json", summary))
    return files


def run_solve_dirichlet(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .dirichlet import solve_K, write_solution_csv

    sec = cfg.section("solve-dirichlet")
    value = _get(sec, "f", float, 1.0)
    mesh = cfg.mesh()
    f = GridFunction.from_callable(mesh, lambda x: np.full(np.shape(x), value))
    rep = solve_K(f, cfg.params, cfg.solve)
    return [write_solution_csv(rep.solution, cfg.params.s, out / "solution.csv"), write_json(out / "report.json", rep.to_dict())]


def run_eigen(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .dirichlet import principal_eigenpair, write_solution_csv

    res = principal_eigenpair(cfg.params, cfg.solve, cfg.mesh())
    return [
        write_json(out / "lambda1.json", res.to_dict()),
        write_solution_csv(res.phi1, cfg.params.s, out / "phi1.csv"),
    ]


def run_semipositone(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .dirichlet import write_solution_csv
    from .semipositone import ContinuationConfig, continue_in_gamma, gamma_star

    sec = cfg.section("semipositone-branch")
    step = _get(sec, "step", float, 0.1)
    gmax = _get(sec, "gamma_max", float, 2.0)
    gammas = _get(sec, "gammas", _floats, None)
    if gammas is None:
        gammas = tuple(np.round(np.arange(0.0, gmax + 0.5 * step, step), 12))
    cc = ContinuationConfig(gammas=gammas, solve=cfg.solve, omega=_get(sec, "omega", float, 0.3))
    branch = continue_in_gamma(cc, cfg.params, cfg.mesh())
    header = ["gamma", "sup_norm", "hopf_min", "residual", "positive_flag"]
    files = [write_csv(out / "branch.csv", header, ([bp.row()[h] for h in header] for bp in branch))]
    for i, bp in enumerate(branch):
        files.append(write_solution_csv(bp.w, cfg.params.s, out / f"branch_{i:03d}.csv"))
    files.append(write_json(out / "branch.json", {"points": len(branch), "gamma_star": gamma_star(branch)}))
    return files


def run_critical(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .critical import (
        BubbleSpec,
        PathConfig,
        build_bubble,
        estimate_sobolev_constant,
        mountain_pass_solve,
        nehari_residual,
        ps_threshold,
        ps_threshold_check,
    )
    from .dirichlet import principal_eigenpair, write_solution_csv

    sec = cfg.section("critical-mp")
    mesh = cfg.mesh()
    prm = cfg.params
    base = Params(s=prm.s, p=prm.p, N=prm.N)
    lam_frac = _get(sec, "lambda_fraction", _opt_float, None)
    if lam_frac is not None:
        lam1 = principal_eigenpair(base, cfg.solve, mesh).lambda1
        prm = prm.with_(lam=lam_frac * lam1)
    bub = build_bubble(
        BubbleSpec(_get(sec, "epsilon", float, 0.1), _get(sec, "delta_cut", float, 0.4), prm.theta_ratio), prm, mesh
    )
    pc = PathConfig(R=_get(sec, "R", float, 4.0), nodes=_get(sec, "path_nodes", int, 33), seed=cfg.seed)
    res = mountain_pass_solve(prm, pc, bub, cfg.solve)
    S = estimate_sobolev_constant(base)
    vol = cfg.domain.volume
    rep = dict(res.report)
    profile = rep.pop("path_profile")
    t = np.linspace(0.0, 1.0, len(profile))
    summary = {
        **rep,
        "lambda": prm.lam,
        "mu": prm.mu,
        "c_mu": res.c_mu,
        "S_est": S,
        "ps_threshold": ps_threshold(prm.mu, S, prm, vol),
        "ps_ok": ps_threshold_check(res.c_mu, prm.mu, S, prm, vol),
        "nehari_residual": nehari_residual(res.u_mu, prm),
    }
    return [
        write_csv(out / "path.csv", ["t", "energy"], zip(t, profile)),
        write_solution_csv(res.u_mu, prm.s, out / "critical.csv"),
        write_json(out / "critical.json", summary),
    ]


def run_moser(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .dirichlet import principal_eigenpair
    from .moser import domain_sobolev_constant, growth_constant, moser_exponent, verify_bound_on_solution
    from .semipositone import solve_lane_emden

    sec = cfg.section("moser-certify")
    src = _get(sec, "source", str, "lane-emden")
    prm = cfg.params
    mesh = cfg.mesh()
    if src == "eigen":
        res = principal_eigenpair(prm, cfg.solve, mesh)
        u, C1, q = res.phi1, growth_constant("eigen", prm, lam=res.lambda1), moser_exponent(prm)
    else:
        le = solve_lane_emden(prm, cfg.solve, mesh)
        u, C1, q = le.solution, growth_constant("semipositone", prm, r=prm.r), moser_exponent(prm, prm.r)
    S = domain_sobolev_constant(mesh, prm, q) if not math.isfinite(prm.p_star) else None
    if S is None:
        from .critical import estimate_sobolev_constant

        S = estimate_sobolev_constant(Params(s=prm.s, p=prm.p, N=prm.N))
    rep = verify_bound_on_solution(u, prm, S, C1=C1, q=q)
    rep["source"] = src
    return [write_json(out / "certificate.json", rep)]


RUNNERS = {
    "eval-op": run_eval_op,
    "verify-barrier": run_verify_barrier,
    "solve-dirichlet": run_solve_dirichlet,
    "eigen": run_eigen,
    "semipositone-branch": run_semipositone,
    "critical-mp": run_critical,
    "moser-certify": run_moser,
}


# --- manifest and entry points -----------------------------------------------


def _versions() -> dict:
    import scipy

    return {
        "fracsemi": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernel_backend": kernels.BACKEND,
    }


def _write_manifest(out: Path, cfg_echo: dict, files: list[Path], timings: dict, status: str) -> Path:
    entries = [{"file": f.name, "sha256": sha256(f)} for f in sorted(files, key=lambda f: f.name)]
    return write_json(
        out / "manifest.json",
        {"config": cfg_echo, "versions": _versions(), "timings": timings, "files": entries, "status": status},
    )


def _error_payload(exc: BaseException) -> dict:
    if isinstance(exc, FracSemiError):
        return exc.to_dict()
    return {"error": type(exc).__name__, "message": str(exc), "field": None}


def _write_partial(cfg: ExperimentConfig, out: Path, exc: FracSemiError) -> dict:
    """Best iterate (as partial.csv) and scalar diagnostics from a failed solve."""
    pay = exc.payload if isinstance(exc.payload, dict) else {}
    info = {k: v for k, v in pay.items() if isinstance(v, (int, float))}
    for key in ("solution", "w", "u"):
        vals = pay.get(key)
        if isinstance(vals, np.ndarray) and vals.ndim == 1:
            try:
                mesh = cfg.mesh()
            except FracSemiError:
                break
            if vals.size == mesh.n:
                write_csv(out / "partial.csv", ["x", "value"], zip(mesh.nodes, vals))
                info["partial"] = key
            break
    return info


def run(config_path: str | Path) -> int:
    """Execute one config; returns the process exit code."""
    try:
        cfg = parse_config(config_path)
    except (ConfigurationError, ValueError) as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return 2
    np.random.seed(cfg.seed)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        files = RUNNERS[cfg.subcommand](cfg, out)
    except ConfigurationError as exc:
        write_json(out / "error.json", _error_payload(exc))
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return 2
    except FracSemiError as exc:
        write_json(out / "error.json", {**_error_payload(exc), "diagnostics": _write_partial(cfg, out, exc)})
        partial = [p for p in out.iterdir() if p.is_file() and p.name not in ("manifest.json",)]
        _write_manifest(out, cfg.echo, partial, {"total_s": time.perf_counter() - t0}, "failed")
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return exc.exit_code
    _write_manifest(out, cfg.echo, files, {"total_s": time.perf_counter() - t0}, "ok")
    return 0


def emit_plotdata(run_dir: str | Path) -> int:
    """Long-format plotting tables derived from a finished run directory."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        print(json.dumps({"error": "ConfigurationError", "message": "run directory not found", "field": "run_dir"}), file=sys.stderr)
        return 2
    made = []
    if (run_dir / "barrier.csv").is_file():
        _, data = read_csv(run_dir / "barrier.csv")
        d, v = data[:, 0], data[:, 1]
        keep = v < 0
        made.append(write_csv(run_dir / "barrier_fit.csv", ["log_d", "log_neg_value"], zip(np.log(d[keep]), np.log(-v[keep]))))
    if (run_dir / "branch.csv").is_file():
        header, data = read_csv(run_dir / "branch.csv")
        gi, hi = header.index("gamma"), header.index("hopf_min")
        made.append(write_csv(run_dir / "branch_plot.csv", ["gamma", "hopf_min"], data[:, [gi, hi]]))
    if (run_dir / "path.csv").is_file():
        _, data = read_csv(run_dir / "path.csv")
        made.append(write_csv(run_dir / "path_plot.csv", ["t", "energy"], data))
    for name in ("phi1.csv", "solution.csv", "critical.csv"):
        if (run_dir / name).is_file():
            _, data = read_csv(run_dir / name)
            made.append(write_csv(run_dir / f"{Path(name).stem}_plot.csv", ["x", "u"], data[:, :2]))
    if not made:
        print(json.dumps({"error": "ConfigurationError", "message": "no plottable inputs", "field": "run_dir"}), file=sys.stderr)
        return 2
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="fracsemi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config file")
    p_run.add_argument("config")
    p_plot = sub.add_parser("emit-plotdata", help="derive plotting CSVs from a run directory")
    p_plot.add_argument("run_dir")
    args = ap.parse_args(argv)
    if args.command == "run":
        return run(args.config)
    return emit_plotdata(args.run_dir)


if __name__ == "__main__":
    sys.exit(main())
