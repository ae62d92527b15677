"""Experiment runner: declarative configs in, CSV artifacts out.

Subcommands:

* ``run <config.json>``   -- execute one experiment, write trajectory CSVs,
  an error-report CSV and a manifest recording every numerical knob.
* ``report <run-dir>``    -- print the error table of a finished run.
* ``oracle``              -- print the closed-form reference values used to
  validate the quadrature layer.

Reruns with identical configs are bit-identical: the pipeline contains no
randomness and floats are written in shortest round-trip form.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, closure, fpsolver, spectral
from .errors import DynMaxEntError, MissingArtifacts, NotApplicable
from .model import (
    OBS_A_SCALAR,
    OBS_A_VECTOR,
    OBS_B_SCALAR,
    OBS_B_VECTOR,
    ModelParams,
    ObservableSet,
)

_MIN_FP_EXPONENT = 0.2  # discrete scheme unreliable below this exponent


class ConfigError(Exception):
    """Invalid or inadmissible experiment configuration."""


_EXPERIMENTS = (
    "scalar_compare",
    "scalar_modified_only",
    "vector_compare",
    "vector_modified_only",
    "covariance_sweep",
    "spectral_gap",
    "moment_match",
)

_SCALINGS = {"exponent": None, "2mu": 2.0, "2Nmu": 2.0, "4Nmu": 4.0}


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _scalar_exponent(value: float, scaling: str, N: float) -> float:
    # "alpha" in configs is mapped to the density exponent sigma
    if scaling == "exponent":
        return float(value)
    if scaling == "2mu":
        return 4.0 * N * (float(value) / 2.0)
    if scaling == "2Nmu":
        return 4.0 * N * (float(value) / (2.0 * N))
    if scaling == "4Nmu":
        return float(value)
    raise ConfigError(f"unknown scaling {scaling!r}; pick one of {sorted(_SCALINGS)}")


def _vector_params(spec: dict, N: float, gamma_sign: float, where: str) -> ModelParams:
    _require(isinstance(spec, dict), f"{where} must be an object")
    unknown = set(spec) - {"gamma", "eta", "mu", "four_mu"}
    _require(not unknown, f"{where}: unknown keys {sorted(unknown)}")
    _require("gamma" in spec and "eta" in spec, f"{where}: gamma and eta are required")
    _require(
        ("mu" in spec) != ("four_mu" in spec),
        f"{where}: give exactly one of mu or four_mu",
    )
    mu = float(spec["mu"]) if "mu" in spec else float(spec["four_mu"]) / 4.0
    _require(mu > 0.0, f"{where}: mutation rate must be positive (partition integral)")
    return ModelParams.vector(
        gamma=float(spec["gamma"]),
        eta=float(spec["eta"]),
        mu=mu,
        N=N,
        gamma_sign=gamma_sign,
    )


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _require(isinstance(cfg, dict), "config root must be a JSON object")
    return cfg


def validate_config(cfg: dict) -> dict:
    """Full validation before any compute; returns a normalized plan."""
    kind = cfg.get("experiment")
    _require(kind in _EXPERIMENTS, f"experiment must be one of {_EXPERIMENTS}, got {kind!r}")
    plan = {"experiment": kind}
    plan["N"] = float(cfg.get("N", 1.0))
    _require(plan["N"] > 0.0, "N must be positive")
    plan["out"] = cfg.get("out", "run-output")
    plan["grid_n"] = int(cfg.get("grid_n", 512))
    _require(plan["grid_n"] >= 16, "grid_n must be at least 16")
    plan["dt"] = None if cfg.get("dt") is None else float(cfg["dt"])
    plan["dt_closure"] = None if cfg.get("dt_closure") is None else float(cfg["dt_closure"])
    plan["horizon"] = None if cfg.get("horizon") is None else float(cfg["horizon"])
    plan["horizon_cap"] = float(cfg.get("horizon_cap", 200.0))
    plan["sample_every"] = int(cfg.get("sample_every", 20))
    plan["equilibrium_tol"] = float(cfg.get("equilibrium_tol", 0.01))
    plan["scalar_rhs_convention"] = cfg.get("scalar_rhs_convention", "cross-ab")
    _require(
        plan["scalar_rhs_convention"] in ("cross-ab", "literal-bb"),
        "scalar_rhs_convention must be cross-ab or literal-bb",
    )
    gs = cfg.get("gamma_sign", -1)
    _require(gs in (-1, 1, -1.0, 1.0), "gamma_sign must be -1 or +1")
    plan["gamma_sign"] = float(gs)
    scaling = cfg.get("scaling", "exponent")
    _require(scaling in _SCALINGS, f"scaling must be one of {sorted(_SCALINGS)}")
    plan["scaling"] = scaling
    N = plan["N"]

    if kind in ("scalar_compare", "scalar_modified_only"):
        _require("alpha0" in cfg, "scalar experiments require alpha0")
        _require(
            "alpha_targets" in cfg and isinstance(cfg["alpha_targets"], list)
            and cfg["alpha_targets"],
            "scalar experiments require a nonempty alpha_targets list",
        )
        sig0 = _scalar_exponent(cfg["alpha0"], scaling, N)
        sigs = [_scalar_exponent(a, scaling, N) for a in cfg["alpha_targets"]]
        for s in [sig0, *sigs]:
            _require(s > 0.0, f"exponent {s} is inadmissible (must be positive)")
            _require(
                s >= _MIN_FP_EXPONENT,
                f"exponent {s} is below {_MIN_FP_EXPONENT}; the discrete scheme "
                f"is unreliable there and the run is refused",
            )
        if kind == "scalar_compare":
            for s in [sig0, *sigs]:
                _require(
                    s > 1.0,
                    f"original method is not applicable at exponent {s}: the "
                    f"mobility moment <xi (d ln xi)^2> is only finite above 1",
                )
        plan["sigma0"] = sig0
        plan["sigma_targets"] = sigs
        plan["labels"] = [repr(float(a)) for a in cfg["alpha_targets"]]
    elif kind in ("vector_compare", "vector_modified_only"):
        _require("initial" in cfg, "vector experiments require initial parameters")
        _require(
            "targets" in cfg and isinstance(cfg["targets"], list) and cfg["targets"],
            "vector experiments require a nonempty targets list",
        )
        p0 = _vector_params(cfg["initial"], N, plan["gamma_sign"], "initial")
        pts = [
            _vector_params(t, N, plan["gamma_sign"], f"targets[{i}]")
            for i, t in enumerate(cfg["targets"])
        ]
        for p in [p0, *pts]:
            _require(
                p.exponent >= _MIN_FP_EXPONENT,
                f"exponent 4*N*mu = {p.exponent} is below {_MIN_FP_EXPONENT}; "
                f"the discrete scheme is unreliable there and the run is refused",
            )
        if kind == "vector_compare":
            for p in [p0, *pts]:
                _require(
                    p.exponent > 1.0,
                    f"original method is not applicable at exponent 4*N*mu = "
                    f"{p.exponent}: the mobility moment <xi (d ln xi)^2> is "
                    f"only finite above 1",
                )
        plan["params0"] = p0
        plan["params_targets"] = pts
        plan["labels"] = [f"target{i}" for i in range(len(pts))]
    elif kind == "covariance_sweep":
        lo = float(cfg.get("alpha_min", 0.01))
        hi = float(cfg.get("alpha_max", 200.0))
        npts = int(cfg.get("points", 120))
        _require(0.0 < lo < hi, "need 0 < alpha_min < alpha_max")
        _require(npts >= 2, "points must be at least 2")
        plan["alphas"] = list(np.geomspace(lo, hi, npts))
    elif kind == "spectral_gap":
        sigmas = cfg.get("four_n_mu", [1.5, 2.0, 3.0])
        _require(isinstance(sigmas, list) and sigmas, "four_n_mu must be a nonempty list")
        for s in sigmas:
            _require(
                float(s) >= 1.5,
                f"spectral solve needs 4*N*mu >= 3/2 (potential bounded below); got {s}",
            )
        plan["four_n_mu"] = [float(s) for s in sigmas]
        plan["grids"] = [int(g) for g in cfg.get("grids", [512, 1024])]
    elif kind == "moment_match":
        targets = cfg.get("targets_lnxi")
        _require(
            isinstance(targets, list) and targets,
            "moment_match requires a nonempty targets_lnxi list",
        )
        ln4 = math.log(0.25)
        for t in targets:
            _require(float(t) < ln4, f"target {t} is not below ln(1/4) = {ln4:.6f}")
        plan["targets_lnxi"] = [float(t) for t in targets]
    return plan


def _closure_specs(plan, scalar: bool):
    conv = plan["scalar_rhs_convention"]
    if scalar:
        a, b = OBS_A_SCALAR, OBS_B_SCALAR
    else:
        a, b = OBS_A_VECTOR, OBS_B_VECTOR
    return (
        closure.ClosureSpec("original", obs_a=a, scalar_rhs_convention=conv),
        closure.ClosureSpec("modified", obs_a=a, obs_b=b, scalar_rhs_convention=conv),
    )


def run_fp_to_equilibrium(p0, pt, plan, obs: ObservableSet):
    """Solver run ending when every moment is within tolerance of the
    discrete equilibrium value (or at the configured horizon)."""
    grid = fpsolver.Grid1D(plan["grid_n"])
    u0 = fpsolver.project_density(p0, grid)
    op = fpsolver.ChangCooperOperator(pt, grid)
    a_mat = fpsolver.moment_matrix(pt, grid, obs, "weighted")
    m_eq = grid.h * (a_mat @ op.stationary().u)
    m_0 = grid.h * (a_mat @ u0.u)
    tol = plan["equilibrium_tol"] * np.maximum(np.abs(m_eq), np.abs(m_0 - m_eq))
    stop = None
    horizon = plan["horizon"]
    if horizon is None:
        horizon = plan["horizon_cap"]

        def stop(t, row):
            return t > 0.0 and bool(np.all(np.abs(row - m_eq) <= tol))

    traj = fpsolver.solve(
        pt,
        u0,
        T=horizon,
        dt=plan["dt"],
        sample_every=plan["sample_every"],
        obs=obs,
        stop_condition=stop,
    )
    return traj


def _run_closure(spec, p0, pt, T, plan, obs):
    dt = plan["dt_closure"]
    if dt is None:
        dt = closure.default_time_step(spec, p0, pt, frac=0.001)
    return closure.integrate(spec, p0, pt, T=T, dt=dt, sample_every=5, report_obs=obs)


def _trajectory_rows(times, columns):
    return [(t, *[c[i] for c in columns]) for i, t in enumerate(times)]


def _closure_param_columns(ctraj, scalar: bool):
    if scalar:
        return ("alpha_star",), (ctraj.theta[:, 0],)
    n2 = 2.0 * ctraj.template.N
    sign = ctraj.template.gamma_sign
    order = {o.label: i for i, o in enumerate(ctraj.obs_a)}
    g1 = ctraj.theta[:, order["xiprime"]]
    g2 = ctraj.theta[:, order["xi"]]
    sg = ctraj.theta[:, order["lnxi"]]
    return ("gamma_star", "eta_star", "mu_star"), (sign * g1 / n2, g2 / (2 * n2), sg / (2 * n2))


def run_moment_experiment(plan, out: Path) -> dict:
    scalar = plan["experiment"].startswith("scalar")
    obs = OBS_A_SCALAR if scalar else OBS_A_VECTOR
    with_original = plan["experiment"].endswith("_compare")
    spec_o, spec_m = _closure_specs(plan, scalar)
    variants = [("original", spec_o)] * with_original + [("modified", spec_m)]

    if scalar:
        p0 = ModelParams.scalar_toy(plan["sigma0"], N=plan["N"])
        targets = [ModelParams.scalar_toy(s, N=plan["N"]) for s in plan["sigma_targets"]]
    else:
        p0 = plan["params0"]
        targets = plan["params_targets"]

    error_rows = []
    manifest_runs = []
    for label, pt in zip(plan["labels"], targets):
        tag = label.replace(".", "p")
        traj = run_fp_to_equilibrium(p0, pt, plan, obs)
        T = float(traj.times[-1])
        _write_csv(
            out / f"fp_{tag}.csv",
            ("t", *obs.labels),
            _trajectory_rows(traj.times, [traj.moments[:, k] for k in range(len(obs))]),
        )
        run_info = {"target": label, "T": T, "fp_steps": len(traj.times)}
        for method, spec in variants:
            ctraj = _run_closure(spec, p0, pt, T, plan, obs)
            pnames, pcols = _closure_param_columns(ctraj, scalar)
            _write_csv(
                out / f"closure_{method}_{tag}.csv",
                ("t", *pnames, *obs.labels),
                _trajectory_rows(
                    ctraj.times,
                    [*pcols, *[ctraj.moments[:, k] for k in range(len(obs))]],
                ),
            )
            for lab in obs.labels:
                e = analysis.error_indicator(traj, ctraj, lab)
                error_rows.append((label, method, lab, e, math.sqrt(e)))
            run_info[f"closure_dt_{method}"] = float(ctraj.times[1] - ctraj.times[0]) / 5.0
            run_info[f"halvings_{method}"] = ctraj.halvings
        manifest_runs.append(run_info)

    _write_csv(
        out / "errors.csv",
        ("target", "method", "observable", "error_ratio", "error_rel"),
        error_rows,
    )
    return {"runs": manifest_runs}


def run_covariance_sweep(plan, out: Path) -> dict:
    points = analysis.covariance_sweep(plan["alphas"])
    _write_csv(
        out / "sweep.csv",
        ("alpha", "cov_xi_lnxi", "converged"),
        [(a, c, str(ok).lower()) for a, c, ok in points],
    )
    return {"points": len(points)}


def run_spectral(plan, out: Path) -> dict:
    rows = []
    for sig in plan["four_n_mu"]:
        params = ModelParams.vector(gamma=0.0, eta=0.0, mu=sig / (4.0 * plan["N"]), N=plan["N"])
        for n in plan["grids"]:
            res = spectral.spectral_gap(params, n)
            rows.append((sig, n, res.eigenvalues[0], res.eigenvalues[1], res.gap))
    _write_csv(out / "spectral.csv", ("four_n_mu", "n_grid", "lambda0", "lambda1", "gap"), rows)
    return {"rows": len(rows)}


def run_moment_match(plan, out: Path) -> dict:
    rows = [(t, analysis.solve_moment_equation(t)) for t in plan["targets_lnxi"]]
    _write_csv(out / "match.csv", ("target_lnxi", "alpha"), rows)
    return {"rows": len(rows)}


def run(config_path: str, overrides: dict | None = None) -> Path:
    """Validate, execute and persist one experiment; returns the run dir."""
    cfg = load_config(config_path)
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    plan = validate_config(cfg)
    out = Path(plan["out"])
    out.mkdir(parents=True, exist_ok=True)
    kind = plan["experiment"]
    if kind in ("scalar_compare", "scalar_modified_only", "vector_compare", "vector_modified_only"):
        extra = run_moment_experiment(plan, out)
    elif kind == "covariance_sweep":
        extra = run_covariance_sweep(plan, out)
    elif kind == "spectral_gap":
        extra = run_spectral(plan, out)
    else:
        extra = run_moment_match(plan, out)
    manifest = {
        "version": __version__,
        "config": cfg,
        "resolved": {
            k: v
            for k, v in plan.items()
            if k not in ("params0", "params_targets")
        },
        **extra,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return out


def report(run_dir: str) -> str:
    """Format the error table of a finished run (relative L2 errors)."""
    path = Path(run_dir) / "errors.csv"
    if not path.exists():
        raise MissingArtifacts(f"no errors.csv under {run_dir}")
    rows = [line.strip().split(",") for line in path.read_text().splitlines()[1:]]
    if not rows:
        raise MissingArtifacts(f"errors.csv under {run_dir} is empty")
    targets = list(dict.fromkeys(r[0] for r in rows))
    methods = list(dict.fromkeys(r[1] for r in rows))
    observables = list(dict.fromkeys(r[2] for r in rows))
    err = {(r[0], r[1], r[2]): float(r[4]) for r in rows}
    lines = []
    # scalar tables: methods x targets; vector tables: methods x observables
    if len(observables) == 1:
        header = [""] + [f"alpha={t}" for t in targets]
        lines.append("  ".join(f"{h:>12}" for h in header))
        for m in methods:
            cells = [f"{err[(t, m, observables[0])]:.2e}" for t in targets]
            lines.append("  ".join(f"{c:>12}" for c in [m, *cells]))
    else:
        for t in targets:
            lines.append(f"target {t}:")
            header = [""] + [f"<{o}>" for o in observables]
            lines.append("  ".join(f"{h:>12}" for h in header))
            for m in methods:
                cells = [f"{err[(t, m, o)]:.2e}" for o in observables]
                lines.append("  ".join(f"{c:>12}" for c in [m, *cells]))
    return "\n".join(lines)


def oracle_table() -> str:
    """Closed-form reference values backing the test suite."""
    from scipy.special import gammaln, polygamma

    def lnB(a, b):
        return gammaln(a) + gammaln(b) - gammaln(a + b)

    psi = lambda x: polygamma(0, x)
    psi1 = lambda x: polygamma(1, x)
    lines = [
        "Closed-form reference values for the symmetric exponent family",
        "(Beta integrals, digamma/trigamma identities):",
        "",
        f"{'alpha':>6} {'B(a,a)':>14} {'<xi>':>12} {'<lnxi>':>12} "
        f"{'Var(lnxi)':>12} {'cov(xi,lnxi)':>13} {'<(xip)^2/xi>':>13}",
    ]
    for a in (0.2, 0.3, 0.5, 1.0, 1.1, 2.0, 2.5, 3.0, 5.0, 10.0, 20.0):
        z = math.exp(lnB(a, a))
        mean_xi = a / (2 * (2 * a + 1))
        mean_ln = 2 * psi(a) - 2 * psi(2 * a)
        var_ln = 2 * psi1(a) - 4 * psi1(2 * a)
        cov = 1.0 / (2 * (2 * a + 1) ** 2)
        mob = math.exp(lnB(a - 1, a - 1) - lnB(a, a)) - 4.0 if a > 1 else float("nan")
        lines.append(
            f"{a:>6} {z:>14.8g} {mean_xi:>12.8g} {mean_ln:>12.8g} "
            f"{var_ln:>12.8g} {cov:>13.8g} {mob:>13.8g}"
        )
    lines += [
        "",
        "identities: <xi> = a/(2(2a+1));  <lnxi> = 2 psi(a) - 2 psi(2a);",
        "Var(lnxi) = 2 psi'(a) - 4 psi'(2a);  cov(xi, lnxi) = 1/(2(2a+1)^2);",
        "<(xi')^2/xi> = B(a-1,a-1)/B(a,a) - 4 (finite only for a > 1);",
        "<(xi')^2> = 1/(2a+1);  <xi ln xi> = <xi> * (2 psi(a+1) - 2 psi(2a+2)).",
    ]
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dynmaxent",
        description="Degenerate Fokker-Planck solver and moment-closure experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--grid-n", type=int, default=None, dest="grid_n")
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--horizon", type=float, default=None)
    p_run.add_argument("--out", default=None)
    p_rep = sub.add_parser("report", help="print the error table of a run directory")
    p_rep.add_argument("run_dir")
    sub.add_parser("oracle", help="print closed-form oracle values")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            overrides = {
                "grid_n": args.grid_n,
                "dt": args.dt,
                "horizon": args.horizon,
                "out": args.out,
            }
            out = run(args.config, overrides)
            print(f"run complete: {out}")
        elif args.command == "report":
            print(report(args.run_dir))
        else:
            print(oracle_table())
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DynMaxEntError, NotApplicable) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
