"""Command-line driver: ``sbpsat <command> [options]``.

Exit codes: 0 when every declared tolerance holds, 1 when one is violated,
2 for invalid input or configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from sbpsat import analysis, experiments
from sbpsat.errors import NonFiniteState, SbpError
from sbpsat.operators import (
    as_order,
    build_first_derivative,
    build_second_derivative,
    verify_first_derivative,
    verify_second_derivative,
)
from sbpsat.timestepping import (
    SbpTimeProblem,
    TimeGrid,
    cfl_timestep,
    rk4_integrate,
    sbp_time_solve,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

RATE_TOL = 0.25
FUNCTIONAL_RATE_TOL = 0.3
ENERGY_AUDIT_TOL = 1e-11
SBP_TIME_TOL = 1e-10
CONSERVATION_TOL = 1e-12
SLOPE_TOL = 0.1


class ConfigError(ValueError):
    pass


# -- parsing helpers ---------------------------------------------------------

def parse_order(text):
    """``"4"`` -> (4, 2); ``"4,2"`` or ``[4, 2]`` -> (4, 2)."""
    if isinstance(text, (list, tuple)):
        return as_order(tuple(text))
    if isinstance(text, int):
        return as_order(text)
    parts = str(text).replace("(", "").replace(")", "").split(",")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"cannot parse order {text!r}") from None
    return as_order(values[0] if len(values) == 1 else tuple(values))


def parse_complex(text) -> complex:
    """Parse ``"a+bi"`` (``i`` or ``j``) into a complex number."""
    if isinstance(text, (int, float, complex)):
        return complex(text)
    s = str(text).strip().replace(" ", "").replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        raise ConfigError(f"cannot parse complex number {text!r}") from None


def parse_levels(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse levels {text!r}") from None


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must be a flat JSON object")
    return data


def merged_options(args, defaults: dict) -> dict:
    """Defaults, then config file keys, then explicit command-line flags."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        config = load_config(args.config)
        unknown = set(config) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update(config)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            opts[key] = value
    return opts


# -- output ------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def output_dir(opts) -> Path:
    out = opts.get("out_dir") or os.environ.get("SBPSAT_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    write_atomic(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def emit(summary: dict, opts: dict, name: str):
    text = dump_json(summary)
    write_atomic(output_dir(opts) / name, text)
    sys.stdout.write(text)


def _order_dict(order):
    return {"p": order.p, "r": order.r}


# -- commands ----------------------------------------------------------------

def cmd_verify_ops(args) -> int:
    order = parse_order(args.order)
    if args.second_derivative:
        report = verify_second_derivative(build_second_derivative(order, args.n))
    else:
        report = verify_first_derivative(build_first_derivative(order, args.n))
    sys.stdout.write(dump_json(report.to_dict()))
    return EXIT_OK if report.passed else EXIT_FAIL


PHYSICAL_KEYS = ("a", "eps", "sigma", "sigma_l", "sigma_r", "amplitude")

CONVERGE_DEFAULTS = {
    "problem": "advection", "order": "4,2", "levels": None, "t_final": None,
    "cfl": 0.5, "a": None, "eps": None, "sigma": None, "sigma_l": None,
    "sigma_r": None, "amplitude": None, "allow_unstable": False,
    "out_dir": None, "seed": 0,
}


def _study_from(opts, **extra):
    order = parse_order(opts["order"])
    params = {k: float(opts[k]) for k in PHYSICAL_KEYS if opts.get(k) is not None}
    params["allow_unstable"] = bool(opts.get("allow_unstable"))
    params.update(extra)
    with warnings.catch_warnings():
        # admissibility is decided by the study builder; the flag is kept on
        # the system itself
        warnings.simplefilter("ignore")
        study = experiments.build_study(opts["problem"], order, **params)
    return order, study


def cmd_converge(args) -> int:
    opts = merged_options(args, CONVERGE_DEFAULTS)
    order, study = _study_from(opts)
    if study.exact is None:
        raise ConfigError(f"problem {opts['problem']!r} has no exact solution to converge to")
    levels = parse_levels(opts["levels"]) if opts["levels"] else list(study.levels)
    t_final = float(opts["t_final"] or study.t_final)
    cfl = float(opts["cfl"])
    summary = {
        "command": "converge", "problem": study.name, "order": _order_dict(order),
        "levels": levels, "t_final": t_final, "cfl": cfl,
        "expected_rate": study.expected_rate,
        "tolerances": {"rate": RATE_TOL, "r_squared": analysis.MIN_R_SQUARED},
        "allow_unstable": bool(opts["allow_unstable"]),
    }

    def factory(n):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return study.factory(n)

    summary["flags"] = sorted(factory(levels[0]).flags)
    try:
        report = analysis.run_convergence_study(
            factory, study.exact, levels, t_final, cfl,
            expected_rate=study.expected_rate, label=study.name)
    except NonFiniteState as exc:
        summary.update(blowup={"step": exc.step, "time": exc.time}, passed=False)
        emit(summary, opts, "converge_summary.json")
        return EXIT_FAIL

    rows = [(order.p, order.r, lv.n, lv.h, lv.error_P, lv.error_max, report.fitted_rate)
            for lv in report.levels]
    write_csv(output_dir(opts) / "converge.csv",
              ("order_p", "order_r", "n", "h", "err_P", "err_max", "fitted_rate"), rows)
    passed = report.passes(RATE_TOL) if study.expected_rate is not None else True
    summary.update(
        fitted_rate=report.fitted_rate, r_squared=report.r_squared,
        dropped_coarsest=report.dropped_coarsest, local_rates=report.local_rates,
        blowup=None, passed=passed)
    emit(summary, opts, "converge_summary.json")
    return EXIT_OK if passed else EXIT_FAIL


ENERGY_DEFAULTS = {
    "problem": "advection", "order": "4,2", "n": 65, "t_final": None, "cfl": 0.5,
    "initial": "exact", "homogeneous": False, "seed": 0, "sample_every": 1,
    "a": None, "eps": None, "sigma": None, "sigma_l": None, "sigma_r": None,
    "amplitude": None, "allow_unstable": False, "out_dir": None,
}
INITIAL_CHOICES = ("exact", "zero", "random", "bump")


def _initial_state(kind, study, system, seed):
    if kind == "zero":
        return np.zeros(system.state_dim)
    if kind == "random":
        return experiments.random_state(system, np.random.default_rng(seed))
    if kind == "exact":
        return study.initial_state(system.nodes)
    if kind == "bump":
        return np.ravel(study.initial(system.nodes))
    raise ConfigError(f"initial must be one of {INITIAL_CHOICES}, got {kind!r}")


def cmd_energy(args) -> int:
    opts = merged_options(args, ENERGY_DEFAULTS)
    order, study = _study_from(opts, homogeneous=bool(opts["homogeneous"]))
    system = study.factory(int(opts["n"]))
    u0 = _initial_state(opts["initial"], study, system, int(opts["seed"]))
    t_final = float(opts["t_final"] or study.t_final)
    grid = TimeGrid.from_max_dt(t_final, cfl_timestep(system, float(opts["cfl"]),
                                                      u0=u0))
    summary = {
        "command": "energy", "problem": study.name, "order": _order_dict(order),
        "n": int(opts["n"]), "t_final": t_final, "n_steps": grid.n_steps,
        "initial": opts["initial"], "seed": int(opts["seed"]),
        "homogeneous": bool(opts["homogeneous"]), "flags": sorted(system.flags),
        "tolerances": {"audit": ENERGY_AUDIT_TOL,
                       "scaling": "1 + E + E^(3/2)"},
    }
    traj = rk4_integrate(system, u0, grid, sample_every=int(opts["sample_every"]),
                         raise_on_blowup=False)
    rows = list(traj.csv_rows())
    write_csv(output_dir(opts) / "energy.csv",
              ("t", "energy", "measured_rate", "predicted_rate", "residual"), rows)
    e = traj.energies
    scaled = [r[4] / (1 + en + en**1.5) for r, en in zip(rows, e)]
    passed = traj.blowup_step is None and max(scaled) <= ENERGY_AUDIT_TOL
    summary.update(
        max_scaled_residual=max(scaled), energy_initial=e[0], energy_final=e[-1],
        energy_max=e.max(), monotone=bool(np.all(np.diff(e) <= 1e-12 * e[:-1])),
        blowup_step=traj.blowup_step, passed=passed)
    emit(summary, opts, "energy_summary.json")
    return EXIT_OK if passed else EXIT_FAIL


TIME_SBP_DEFAULTS = {
    "lam": "-1", "f": "1", "t_final": 1.0, "nodes": 21, "order": "4,2",
    "sweep": None, "out_dir": None,
}


def cmd_time_sbp(args) -> int:
    opts = merged_options(args, TIME_SBP_DEFAULTS)
    order = parse_order(opts["order"])
    lam, f = parse_complex(opts["lam"]), parse_complex(opts["f"])
    t_final = float(opts["t_final"])
    problem = SbpTimeProblem(lam, f, t_final, int(opts["nodes"]), order)
    U, diag = sbp_time_solve(problem)
    passed = diag.relative_residual <= SBP_TIME_TOL
    bounded = None
    if lam.real < 0:
        bounded = bool(abs(U[-1]) <= abs(f) + SBP_TIME_TOL)
        passed = passed and bounded
    summary = {
        "command": "time-sbp", "order": _order_dict(order), "lam": lam, "f": f,
        "t_final": t_final, "nodes": int(opts["nodes"]), "U_N": complex(U[-1]),
        "identity_residual": diag.identity_residual,
        "relative_residual": diag.relative_residual,
        "initial_mismatch": diag.initial_mismatch, "bounded": bounded,
        "flagged_unstable": diag.flagged_unstable,
        "tolerances": {"identity_relative": SBP_TIME_TOL},
    }
    if opts["sweep"]:
        nodes = parse_levels(opts["sweep"])
        exact = f * np.exp(lam * t_final)
        errs, hs = [], []
        for n in nodes:
            Un, _ = sbp_time_solve(SbpTimeProblem(lam, f, t_final, n, order))
            errs.append(abs(Un[-1] - exact))
            hs.append(t_final / (n - 1))
        summary["sweep"] = [{"nodes": n, "error": e} for n, e in zip(nodes, errs)]
        summary["observed_rate"] = analysis.fit_rate(hs, errs)[0]
    else:
        summary["observed_rate"] = None
    summary["passed"] = passed
    emit(summary, opts, "time_sbp_summary.json")
    return EXIT_OK if passed else EXIT_FAIL


FUNCTIONAL_DEFAULTS = {"order": "4,2", "levels": "17,33,65,129,257", "out_dir": None}


def cmd_functional(args) -> int:
    opts = merged_options(args, FUNCTIONAL_DEFAULTS)
    order = parse_order(opts["order"])
    levels = parse_levels(opts["levels"])
    exact_u, forcing, exact_j = experiments.steady_transport_exact()
    study = analysis.run_functional_study(order, levels, forcing, exact_u, exact_j)
    expected_solution = float(min(order.r + 1, order.p))
    expected_functional = float(order.p)
    sol_rate = study.solution.fitted_rate
    passed = (abs(sol_rate - expected_solution) <= RATE_TOL
              and abs(study.functional_rate - expected_functional) <= FUNCTIONAL_RATE_TOL)
    rows = [(order.p, order.r, lv.n, lv.h, lv.error_P, fl[2], v)
            for lv, fl, v in zip(study.solution.levels, study.functional_levels,
                                 study.values)]
    write_csv(output_dir(opts) / "functional.csv",
              ("order_p", "order_r", "n", "h", "err_P", "functional_error",
               "functional"), rows)
    summary = {
        "command": "functional", "order": _order_dict(order), "levels": levels,
        "exact_functional": exact_j, "solution_rate": sol_rate,
        "functional_rate": study.functional_rate,
        "expected_solution_rate": expected_solution,
        "expected_functional_rate": expected_functional,
        "tolerances": {"solution_rate": RATE_TOL,
                       "functional_rate": FUNCTIONAL_RATE_TOL},
        "passed": passed,
    }
    emit(summary, opts, "functional_summary.json")
    return EXIT_OK if passed else EXIT_FAIL


INTERFACE_DEFAULTS = {
    "order": "4,2", "n": 49, "sigma_l": 0.0, "a": 1.0, "t_final": 0.5,
    "deltas": "1e-3,1e-2,1e-1", "out_dir": None,
}


def interface_residuals(order, n, sigma_l, a, t_final, deltas):
    """Conservation residuals for the conservative coupling and each perturbation."""
    def phi(x):
        # vanishes at both outer boundaries x = -1 and x = 1
        return np.cos(0.5 * np.pi * x)

    results = []
    for delta in [0.0, *deltas]:
        sigma_r = None if delta == 0 else sigma_l - a + delta
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            study = experiments.two_block(order, a=a, sigma_l=sigma_l, sigma_r=sigma_r)
        system = study.factory(n)
        grid = TimeGrid.from_max_dt(t_final, cfl_timestep(system))
        traj = rk4_integrate(system, study.initial_state(system.nodes), grid,
                             sample_every=max(1, grid.n_steps // 10))
        results.append((delta, analysis.interface_conservation_check(system, phi, traj)))
    return results


def cmd_interface(args) -> int:
    opts = merged_options(args, INTERFACE_DEFAULTS)
    order = parse_order(opts["order"])
    deltas = [float(d) for d in str(opts["deltas"]).split(",")] \
        if not isinstance(opts["deltas"], list) else [float(d) for d in opts["deltas"]]
    if any(d <= 0 for d in deltas) or len(deltas) < 2:
        raise ConfigError("deltas must be at least two positive perturbations")
    results = interface_residuals(order, int(opts["n"]), float(opts["sigma_l"]),
                                  float(opts["a"]), float(opts["t_final"]), deltas)
    base = results[0][1]
    slope = float(np.polyfit(np.log(deltas),
                             np.log([r.residual for _, r in results[1:]]), 1)[0])
    passed = (base.relative <= CONSERVATION_TOL and abs(slope - 1.0) <= SLOPE_TOL)
    summary = {
        "command": "interface", "order": _order_dict(order), "n": int(opts["n"]),
        "sigma_l": float(opts["sigma_l"]),
        "conservative": {"residual": base.residual, "scale": base.scale,
                         "relative": base.relative},
        "perturbed": [{"delta": d, "residual": r.residual, "relative": r.relative}
                      for d, r in results[1:]],
        "slope": slope,
        "tolerances": {"relative_residual": CONSERVATION_TOL, "slope": SLOPE_TOL},
        "passed": passed,
    }
    emit(summary, opts, "interface_summary.json")
    return EXIT_OK if passed else EXIT_FAIL


# -- argument parser ---------------------------------------------------------

def _add_common(p, physical=True):
    p.add_argument("--config", help="JSON file with flat option keys")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (overrides SBPSAT_OUT)")
    p.add_argument("--order", help="interior order p or pair 'p,r'")
    if physical:
        for key in PHYSICAL_KEYS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float)
        p.add_argument("--allow-unstable", dest="allow_unstable", action="store_true",
                       help="run even when a penalty violates its stability condition")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbpsat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-ops", help="certify an SBP operator")
    p.add_argument("--order", default="4", help="interior order p or pair 'p,r'")
    p.add_argument("--n", type=int, default=65)
    p.add_argument("--second-derivative", action="store_true")
    p.set_defaults(func=cmd_verify_ops)

    problems = sorted(experiments.STUDIES)
    p = sub.add_parser("converge", help="grid-convergence study")
    _add_common(p)
    p.add_argument("--problem", choices=problems)
    p.add_argument("--levels", help="comma-separated node counts")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("energy", help="energy trajectory with identity audit")
    _add_common(p)
    p.add_argument("--problem", choices=problems)
    p.add_argument("--n", type=int)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--initial", choices=INITIAL_CHOICES)
    p.add_argument("--homogeneous", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-every", dest="sample_every", type=int)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("time-sbp", help="SBP-SAT in time for u' = lam u")
    _add_common(p, physical=False)
    p.add_argument("--lam", help="complex rate as 'a+bi'")
    p.add_argument("--f", help="initial value, complex allowed")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--sweep", help="comma-separated node counts for a rate sweep")
    p.set_defaults(func=cmd_time_sbp)

    p = sub.add_parser("functional", help="steady-transport functional superconvergence")
    _add_common(p, physical=False)
    p.add_argument("--levels")
    p.set_defaults(func=cmd_functional)

    p = sub.add_parser("interface", help="two-block interface conservation check")
    _add_common(p, physical=False)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma-l", dest="sigma_l", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--deltas", help="comma-separated sigma_r perturbations")
    p.set_defaults(func=cmd_interface)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, SbpError, ValueError) as exc:
        sys.stderr.write(f"sbpsat {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
