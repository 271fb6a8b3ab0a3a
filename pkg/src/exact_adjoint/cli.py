"""Command-line entry point: ``exact-adjoint {integrate,gradient,verify-tableau,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 gradient disagrees with the requested oracle beyond ``--tol``,
5 tableau conditions violated under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidParamError, NumericalError, TableauParseError
from .integrate import SolverConfig, format_float, write_stage_sidecar, write_trajectory_csv
from .methods import METHOD_NAMES
from .ode import PROBLEMS, PartitionedOdeSystem, builtin_problem
from .oracle import compare, fd_gradient, forward_sensitivity_gradient, linear_exact_gradient
from .sensitivity import exact_gradient, forward, resolve_method, summed_terminal_gradient
from .tableau import (
    ButcherTableau,
    GprkTableau,
    PartitionedTableau,
    check_gprk_conditions,
    check_rk_adjoint_conditions,
    check_symplecticity_conditions,
    load_tableau,
    save_tableau,
    synthesize_adjoint_rk,
    synthesize_gprk,
)

log = logging.getLogger("exact_adjoint")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOL, EXIT_STRICT = 0, 2, 3, 4, 5

DEFAULTS = {
    "problem": "harmonic",
    "method": "rk4",
    "tableau": None,
    "theta": None,
    "target": None,
    "cost": None,
    "param": [],
    "h": None,
    "N": None,
    "solver": "fixed-point",
    "stage_tol": 1e-13,
    "max_iters": 100,
    "out": "out",
    "seed": 0,
    "oracle": "none",
    "eps": 1e-6,
    "tol": None,
    "summed": False,
    "stages": False,
    "sweep_h": None,
    "sweep_eps": None,
    "adjoint_perturb": 0.0,
}


class ToleranceFailure(Exception):
    pass


class StrictFailure(Exception):
    pass


def _setup_logging():
    level = os.environ.get("EXACT_ADJOINT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _common(p: argparse.ArgumentParser):
    # every option defaults to None so config-file values can fill the gaps
    p.add_argument("--config", help="JSON file with option values (flags override it)")
    p.add_argument("--problem", choices=sorted(PROBLEMS), default=None)
    p.add_argument("--param", action="append", default=None, metavar="KEY=VALUE",
                   help="problem parameter, repeatable")
    p.add_argument("--method", default=None, help=f"one of {', '.join(METHOD_NAMES)}")
    p.add_argument("--tableau", default=None, metavar="FILE",
                   help="tableau file (overrides --method)")
    p.add_argument("--theta", default=None, help="initial state: inline '1,0' or a file")
    p.add_argument("--target", default=None,
                   help="cost target x*: inline, a file, or 'final' for x* = x_N")
    p.add_argument("--cost", default=None, help="cost kind (quadratic, quartic, energy)")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--solver", choices=["fixed-point", "newton"], default=None)
    p.add_argument("--stage-tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exact-adjoint",
        description="Exact gradients of RK/PRK numerical solutions via adjoint sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="forward integration, trajectory CSV")
    _common(p)
    p.add_argument("--stages", action="store_true", default=None,
                   help="also write the stage values sidecar")

    p = sub.add_parser("gradient", help="exact gradient of the terminal cost")
    _common(p)
    p.add_argument("--oracle", choices=["fd", "forward-sensitivity", "linear", "none"], default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="fail with exit 4 if rel_err vs the oracle exceeds this")
    p.add_argument("--summed", action="store_true", default=None,
                   help="gradient of sum_{n=1..N} C(x_n) (N adjoint sweeps)")

    p = sub.add_parser("verify-tableau", help="check coefficient conditions")
    p.add_argument("paths", nargs="*", help="tableau files (one, or forward + adjoint)")
    p.add_argument("--method", default=None, help="use a registry method instead of a file")
    p.add_argument("--check-symplectic", action="store_true")
    p.add_argument("--synthesize", action="store_true",
                   help="write the adjoint/GPRK partner tableau file")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--tol", type=float, default=1e-14)
    p.add_argument("--out", default=None, metavar="DIR")

    p = sub.add_parser("sweep", help="h- or eps-refinement study, CSV output")
    _common(p)
    p.add_argument("--sweep-h", default=None, help="comma-separated step sizes")
    p.add_argument("--sweep-eps", default=None, help="comma-separated fd increments")
    p.add_argument("--oracle", choices=["fd", "forward-sensitivity", "linear"], default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--adjoint-perturb", type=float, default=None,
                   help="add this to every adjoint stage coefficient (non-canonical control)")
    return parser


def _resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for key, val in file_cfg.items():
            cfg[key.replace("-", "_")] = val
    for key, val in vars(args).items():
        if val is not None:
            cfg[key] = val
    return cfg


def _parse_vector(text, what):
    if isinstance(text, (list, tuple)):
        return np.array(text, dtype=float)
    path = Path(text)
    if path.is_file():
        raw = path.read_text()
        try:
            return np.array(json.loads(raw), dtype=float).reshape(-1)
        except json.JSONDecodeError:
            return np.array(raw.split(), dtype=float)
    try:
        return np.array([float(v) for v in str(text).replace(",", " ").split()], dtype=float)
    except ValueError:
        raise InvalidParamError(what, f"cannot parse {text!r} as a vector or file") from None


def _parse_params(items) -> dict:
    if isinstance(items, dict):
        return dict(items)
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InvalidParamError(item, "expected KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def _setup(cfg):
    params = _parse_params(cfg["param"])
    if cfg["cost"] is not None:
        params["cost"] = cfg["cost"]
    target_final = cfg["target"] == "final"
    if cfg["target"] is not None and not target_final:
        params["target"] = _parse_vector(cfg["target"], "target")
    problem = builtin_problem(cfg["problem"], params)
    method = load_tableau(cfg["tableau"]) if cfg["tableau"] else resolve_method(cfg["method"])
    if isinstance(method, GprkTableau):
        raise ConfigError("a GPRK tableau cannot drive the forward integration")
    theta = problem.theta if cfg["theta"] is None else _parse_vector(cfg["theta"], "theta")
    if theta.size != problem.dim:
        raise InvalidParamError("theta", f"expected {problem.dim} entries, got {theta.size}")
    h = problem.h if cfg["h"] is None else float(cfg["h"])
    N = problem.N if cfg["N"] is None else int(cfg["N"])
    if not h > 0:
        raise InvalidParamError("h", "must be > 0")
    if N < 1:
        raise InvalidParamError("N", "must be >= 1")
    solver = SolverConfig(cfg["solver"], float(cfg["stage_tol"]), int(cfg["max_iters"]))
    if isinstance(method, PartitionedTableau) and not isinstance(problem.system, PartitionedOdeSystem):
        raise InvalidParamError("method", f"partitioned method needs a partitioned problem, "
                                          f"{problem.name!r} is not")
    if target_final:
        xN = forward(problem, method, theta, h, N, solver).final
        problem = builtin_problem(cfg["problem"], {**params, "target": xN})
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return problem, method, theta, h, N, solver, out


def _oracle_gradient(kind, problem, method, theta, h, N, solver, eps):
    if kind == "fd":
        return fd_gradient(problem, method, theta, h, N, eps=eps, scheme="central", cfg=solver)
    if kind == "forward-sensitivity":
        return forward_sensitivity_gradient(problem, method, theta, h, N, solver)
    if kind == "linear":
        if problem.linear_matrix is None:
            raise InvalidParamError("oracle", f"problem {problem.name!r} is not linear")
        dim1 = getattr(problem.system, "dim1", None)
        return linear_exact_gradient(problem.linear_matrix, method, problem.cost, theta, h, N, dim1)
    raise InvalidParamError("oracle", f"unknown oracle {kind!r}")


def _fmt_vec(v):
    return "[" + ", ".join(f"{x: .10e}" for x in v) + "]"


def cmd_integrate(cfg) -> int:
    problem, method, theta, h, N, solver, out = _setup(cfg)
    t0 = time.perf_counter()
    traj = forward(problem, method, theta, h, N, solver)
    wall = time.perf_counter() - t0
    write_trajectory_csv(traj, out / "trajectory.csv")
    if cfg["stages"]:
        write_stage_sidecar(traj, out / "stages.json")
    print(f"problem={problem.name} method={getattr(method, 'name', '') or cfg['method']} h={h:g} N={N}")
    print(f"final state: {_fmt_vec(traj.final)}")
    print(f"wall time: {wall:.3f} s")
    print(f"wrote {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_gradient(cfg) -> int:
    problem, method, theta, h, N, solver, out = _setup(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    if cfg["summed"]:
        grad = summed_terminal_gradient(problem, method, theta, h, N, solver)
        report = {"gradient": [float(v) for v in grad], "pairing_drift": None,
                  "iterations": {}, "objective": "summed"}
    else:
        delta0 = rng.standard_normal(problem.dim)
        res = exact_gradient(problem, method, theta, h, N, solver, delta0=delta0)
        grad = res.gradient
        report = res.to_dict()
    comparisons = []
    failed = False
    if cfg["oracle"] != "none":
        if cfg["summed"]:
            raise ConfigError("oracles are only available for terminal-cost gradients")
        ref = _oracle_gradient(cfg["oracle"], problem, method, theta, h, N, solver, float(cfg["eps"]))
        cmp_ = compare(cfg["oracle"], ref, grad)
        cmp_.write(out / f"comparison_{cfg['oracle']}.csv")
        summary = cmp_.summary()
        if cfg["tol"] is not None:
            summary["tol"] = float(cfg["tol"])
            summary["passed"] = bool(cmp_.rel_err <= float(cfg["tol"]))
            failed = not summary["passed"]
        comparisons.append(summary)
    report["comparisons"] = comparisons
    (out / "gradient.json").write_text(json.dumps(report, indent=2) + "\n")

    print(f"problem={problem.name} h={h:g} N={N}")
    print(f"gradient: {_fmt_vec(grad)}")
    if report.get("pairing_drift") is not None:
        print(f"pairing drift: {report['pairing_drift']:.3e}")
    for c in comparisons:
        line = f"vs {c['reference']:<20s} abs_err={c['abs_err']:.3e} rel_err={c['rel_err']:.3e}"
        if "passed" in c:
            line += f"  tol={c['tol']:.1e} {'PASS' if c['passed'] else 'FAIL'}"
        print(line)
    if failed:
        raise ToleranceFailure("gradient disagrees with oracle beyond tolerance")
    return EXIT_OK


def _print_report(title, report):
    print(f"{title}: max_residual={report.max_residual:.3e}")
    for fam in report.families:
        print(f"  {fam:<12s} {report.family_max(fam):.3e}")


def cmd_verify_tableau(args) -> int:
    if args.method:
        tabs = [resolve_method(args.method)]
    elif args.paths:
        tabs = [load_tableau(p) for p in args.paths]
    else:
        raise ConfigError("give tableau files or --method")
    out = Path(args.out) if args.out else None
    stem = Path(args.paths[0]).stem if args.paths else args.method
    reports = []
    fwd = tabs[0]
    if len(tabs) == 2:
        adj = tabs[1]
        if isinstance(fwd, ButcherTableau) and isinstance(adj, ButcherTableau):
            reports.append(("adjoint RK conditions", check_rk_adjoint_conditions(fwd, adj)))
        elif isinstance(fwd, PartitionedTableau) and isinstance(adj, GprkTableau):
            reports.append(("GPRK conditions", check_gprk_conditions(fwd, adj)))
        else:
            raise ConfigError("expected (RK, RK) or (PRK pair, GPRK) files")
    elif len(tabs) != 1:
        raise ConfigError("give one or two tableau files")
    elif isinstance(fwd, GprkTableau):
        raise ConfigError("a GPRK file must be checked together with its forward pair")

    if args.check_symplectic:
        if not isinstance(fwd, PartitionedTableau):
            raise ConfigError("--check-symplectic needs a partitioned tableau")
        reports.append(("symplecticity conditions", check_symplecticity_conditions(fwd)))

    if args.synthesize or (len(tabs) == 1 and not args.check_symplectic):
        if isinstance(fwd, PartitionedTableau):
            partner = synthesize_gprk(fwd)
            reports.append(("GPRK conditions (synthesized)", check_gprk_conditions(fwd, partner)))
            suffix = "gprk"
        else:
            partner = synthesize_adjoint_rk(fwd)
            reports.append(("adjoint RK conditions (synthesized)",
                            check_rk_adjoint_conditions(fwd, partner)))
            suffix = "adjoint"
        if args.synthesize:
            target_dir = out or Path(".")
            target_dir.mkdir(parents=True, exist_ok=True)
            path = target_dir / f"{stem}.{suffix}.json"
            save_tableau(partner, path)
            print(f"wrote {path}")

    violated = False
    for title, rep in reports:
        _print_report(title, rep)
        violated |= rep.max_residual > args.tol
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "conditions.json").write_text(
            json.dumps({t: r.to_dict() for t, r in reports}, indent=2) + "\n")
    if violated and args.strict:
        raise StrictFailure("coefficient conditions violated")
    return EXIT_OK


def _perturbed_adjoint(method, delta):
    if isinstance(method, PartitionedTableau):
        g = synthesize_gprk(method)
        kw = {}
        for blk in ("11", "12", "21", "22"):
            kw["B" + blk] = g.weights(blk)
            kw["A" + blk] = g.matrix(blk) + delta
        return GprkTableau(**kw)
    a = synthesize_adjoint_rk(method)
    return ButcherTableau(a.a + delta, a.b)


def _float_list(text, what):
    try:
        vals = [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise InvalidParamError(what, f"cannot parse {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise InvalidParamError(what, "needs positive values")
    return vals


def cmd_sweep(cfg) -> int:
    problem, method, theta, h0, N0, solver, out = _setup(cfg)
    oracle = cfg["oracle"] if cfg["oracle"] != "none" else "forward-sensitivity"
    rows = []
    if cfg["sweep_h"] and cfg["sweep_eps"]:
        raise ConfigError("choose one of --sweep-h and --sweep-eps")
    if cfg["sweep_h"]:
        T = h0 * N0
        adj = _perturbed_adjoint(method, float(cfg["adjoint_perturb"])) \
            if cfg["adjoint_perturb"] else None
        header = "h,N,gradient_error,integration_error"
        for h in _float_list(cfg["sweep_h"], "sweep-h"):
            N = max(1, round(T / h))
            res = exact_gradient(problem, method, theta, h, N, solver, adjoint_tableau=adj)
            ref = _oracle_gradient(oracle, problem, method, theta, h, N, solver, float(cfg["eps"]))
            err = compare(oracle, ref, res.gradient).rel_err
            ierr = _integration_error(problem, theta, res.trajectory)
            rows.append(f"{format_float(h)},{N},{format_float(err)},{format_float(ierr)}")
    elif cfg["sweep_eps"]:
        header = "eps,gradient_error,integration_error"
        exact = exact_gradient(problem, method, theta, h0, N0, solver)
        ierr = _integration_error(problem, theta, exact.trajectory)
        for eps in _float_list(cfg["sweep_eps"], "sweep-eps"):
            fd = fd_gradient(problem, method, theta, h0, N0, eps=eps, scheme="central", cfg=solver)
            err = compare("adjoint", exact.gradient, fd).rel_err
            rows.append(f"{format_float(eps)},{format_float(err)},{format_float(ierr)}")
    else:
        raise ConfigError("sweep needs --sweep-h or --sweep-eps")
    path = out / "sweep.csv"
    path.write_text("\n".join([header] + rows) + "\n")
    print(header)
    for r in rows:
        print(r)
    print(f"wrote {path}")
    return EXIT_OK


def _integration_error(problem, theta, traj):
    if problem.exact_solution is None:
        return math.nan
    exact = problem.exact_solution(theta, traj.h * traj.N)
    return float(np.abs(traj.final - exact).max())


COMMANDS = {
    "integrate": cmd_integrate,
    "gradient": cmd_gradient,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-tableau":
            return cmd_verify_tableau(args)
        return COMMANDS[args.command](_resolve(args))
    except ToleranceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOL
    except StrictFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRICT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, TableauParseError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
