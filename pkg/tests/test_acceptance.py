"""Acceptance criteria, one test per criterion.

Every test records a verdict that the terminal summary prints as a
PASS/FAIL line, then asserts it.
"""

import json

import numpy as np

from conftest import record
from exact_adjoint.cli import main
from exact_adjoint.integrate import SolverConfig, integrate
from exact_adjoint.methods import METHOD_NAMES, PRK_METHODS, classical_order, get_method
from exact_adjoint.ode import builtin_problem
from exact_adjoint.oracle import fd_gradient, forward_sensitivity_gradient, linear_exact_gradient
from exact_adjoint.sensitivity import (
    adjoint_gprk,
    adjoint_rk,
    exact_gradient,
    forward,
    pairing_drift,
    pairings,
    variational_prk,
    variational_rk,
)
from exact_adjoint.tableau import (
    ButcherTableau,
    PartitionedTableau,
    check_gprk_conditions,
    check_rk_adjoint_conditions,
    check_symplecticity_conditions,
    is_reducible_to_prk,
    synthesize_adjoint_rk,
    synthesize_gprk,
)

H, N, DRAWS = 0.05, 100, 5
STAGE_TOL = 1e-13

RK_CASES = [(m, p) for m in ("euler", "midpoint", "rk4") for p in ("linear", "harmonic")]
PRK_CASES = [(m, p) for m in ("stormer-verlet", "lobatto3", "sympeuler")
             for p in ("harmonic", "kepler", "pendulum")] + [("sprk-embedded", "heat-advection")]


def rel(a, b):
    return float(np.abs(a - b).max() / np.abs(b).max())


def draws(problem_name, seed):
    """Seeded (theta, target) pairs around the problem's default initial state."""
    base = builtin_problem(problem_name)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(DRAWS):
        scale = 0.05 if problem_name == "kepler" else 0.3
        theta = base.theta + scale * rng.standard_normal(base.dim)
        target = rng.standard_normal(base.dim)
        out.append((builtin_problem(problem_name, {"target": target}), theta))
    return out


def exactness_errors(cases, seed):
    worst = {}
    cfg = SolverConfig(tol=STAGE_TOL)
    for method, pname in cases:
        for problem, theta in draws(pname, seed):
            g = exact_gradient(problem, method, theta, H, N, cfg).gradient
            ref = forward_sensitivity_gradient(problem, method, theta, H, N, cfg)
            worst[(method, pname)] = max(worst.get((method, pname), 0.0), rel(g, ref))
    return worst


def bound(method):
    return 1e-10 if get_method(method).is_explicit else 1e-9


def check_exactness(criterion, cases, seed):
    worst = exactness_errors(cases, seed)
    bad = {k: v for k, v in worst.items() if v > bound(k[0])}
    top = max(worst.items(), key=lambda kv: kv[1])
    record(criterion, not bad,
           f"exactness over {len(cases)} method/problem pairs x {DRAWS} draws, "
           f"worst rel err {top[1]:.2e} ({top[0][0]} on {top[0][1]})")
    assert not bad, bad


def test_criterion_01_rk_exactness():
    check_exactness(1, RK_CASES, seed=1)


def test_criterion_02_gprk_exactness():
    check_exactness(2, PRK_CASES, seed=2)


def test_criterion_03_pairing_conservation():
    rng = np.random.default_rng(3)
    worst, where = 0.0, None
    for method, pname in RK_CASES + PRK_CASES:
        problem = builtin_problem(pname)
        t = get_method(method)
        theta = problem.theta + (0.05 if pname == "kepler" else 0.3) * rng.standard_normal(problem.dim)
        traj = forward(problem, t, theta, H, N)
        d0 = rng.standard_normal(problem.dim)
        lamN = rng.standard_normal(problem.dim)
        if isinstance(t, PartitionedTableau):
            run = adjoint_gprk(problem.system, t, synthesize_gprk(t), traj, lamN)
            delta = variational_prk(problem.system, t, traj, d0)
        else:
            run = adjoint_rk(problem.system, t, synthesize_adjoint_rk(t), traj, lamN)
            delta = variational_rk(problem.system, t, traj, d0)
        scale = np.abs(pairings(delta, run)).max()
        r = pairing_drift(delta, run) / scale
        if r >= worst:
            worst, where = r, (method, pname)
    ok = worst <= 1e-12
    record(3, ok, f"max relative pairing drift {worst:.2e} ({where[0]} on {where[1]})")
    assert ok


def test_criterion_04_condition_residuals():
    worst = 0.0
    for name in METHOD_NAMES:
        t = get_method(name)
        if isinstance(t, PartitionedTableau):
            r = check_gprk_conditions(t, synthesize_gprk(t)).max_residual
        else:
            r = check_rk_adjoint_conditions(t, synthesize_adjoint_rk(t)).max_residual
        worst = max(worst, r)
    sv = check_symplecticity_conditions(get_method("stormer-verlet")).max_residual
    lob = check_symplecticity_conditions(get_method("lobatto3")).max_residual
    # Stormer-Verlet coefficients are dyadic, so its residual is exactly 0.
    # Lobatto coefficients (1/6, 2/3, 5/24, ...) are rounded on storage; the
    # residual is then bounded by that rounding, below one unit roundoff.
    ok = worst <= 1e-14 and sv == 0.0 and lob <= np.finfo(float).eps / 2
    record(4, ok, f"synthesized residual max {worst:.2e}; symplecticity stormer-verlet {sv:.1e}, "
                  f"lobatto3 {lob:.1e} (coefficient rounding)")
    assert ok


def test_criterion_05_reduction():
    verdicts = {}
    for name in PRK_METHODS:
        t = get_method(name)
        same = np.array_equal(t.first.b, t.second.b)
        verdicts[name] = (is_reducible_to_prk(synthesize_gprk(t)), same)
    ok = all(red == same for red, same in verdicts.values())
    ok &= not verdicts["sprk-embedded"][0] and not verdicts["ruth3"][0]
    reducible = sorted(k for k, v in verdicts.items() if v[0])
    record(5, ok, f"reducible: {', '.join(reducible)}; not reducible: sprk-embedded, ruth3")
    assert ok


def test_criterion_06_separable_fast_path():
    worst_path, worst_oracle = 0.0, 0.0
    t = get_method("ruth3")
    assert not np.array_equal(t.first.b, t.second.b)
    for pname in ("harmonic", "kepler"):
        problem = builtin_problem(pname, {"target": np.linspace(-0.5, 0.5, builtin_problem(pname).dim)})
        full = exact_gradient(problem, t, h=H, N=N).gradient
        fast = exact_gradient(problem, t, h=H, N=N, separable=True).gradient
        ref = forward_sensitivity_gradient(problem, t, h=H, N=N)
        worst_path = max(worst_path, float(np.abs(full - fast).max()))
        worst_oracle = max(worst_oracle, rel(full, ref), rel(fast, ref))
    ok = worst_path <= 1e-14 and worst_oracle <= 1e-10
    record(6, ok, f"ruth3 fast vs full {worst_path:.2e}, vs forward sensitivity {worst_oracle:.2e}")
    assert ok


def test_criterion_07_negative_control():
    t = get_method("euler")
    bad = ButcherTableau(synthesize_adjoint_rk(t).a + 0.1, t.b)
    problem = builtin_problem("harmonic", {"target": [0.3, -0.2]})
    errs = []
    for k in range(4):
        h, n = 0.1 / 2**k, 10 * 2**k
        g = exact_gradient(problem, t, h=h, N=n, adjoint_tableau=bad).gradient
        ref = forward_sensitivity_gradient(problem, t, h=h, N=n)
        errs.append(float(np.abs(g - ref).max()))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    p = classical_order("euler")
    ok = errs[0] > 1e-4 and bool(np.all(np.abs(orders - p) <= 0.5))
    record(7, ok, f"perturbed euler adjoint: error {errs[0]:.2e} at h=0.1, observed orders "
                  + ", ".join(f"{o:.2f}" for o in orders))
    assert ok


def test_criterion_08_oracle_sanity():
    problem = builtin_problem("linear", {"cost": "quartic", "target": np.full(6, 0.3)})
    truth = exact_gradient(problem, "rk4").gradient
    eps = [10.0**-k for k in range(2, 11)]
    errs = [rel(fd_gradient(problem, "rk4", eps=e), truth) for e in eps]
    k = int(np.argmin(errs))
    monotone = all(a > b for a, b in zip(errs[:k], errs[1:k + 1]))
    decades = np.log10(errs[0] / errs[k])
    second_order = 70 <= errs[0] / errs[1] <= 130
    floor = k < len(errs) - 1 and errs[-1] > errs[k]
    lin = linear_exact_gradient(problem.linear_matrix, "rk4", problem.cost, problem.theta,
                                problem.h, problem.N)
    agree = rel(lin, forward_sensitivity_gradient(problem, "rk4"))
    ok = monotone and decades >= 3 and second_order and floor and agree <= 1e-12
    record(8, ok, f"fd V-shape: {decades:.1f} decades down to eps={eps[k]:.0e}, "
                  f"first ratio {errs[0] / errs[1]:.0f}; linear vs forward sensitivity {agree:.1e}")
    assert ok


def test_criterion_09_integrator_orders():
    problem = builtin_problem("harmonic")
    T = 1.0
    ratios = {}
    for name in METHOD_NAMES:
        e = []
        for h in (0.1, 0.05):
            traj = integrate(problem.system, get_method(name), problem.theta, h, int(round(T / h)))
            e.append(np.abs(traj.final - problem.exact_solution(problem.theta, T)).max())
        ratios[name] = e[0] / e[1]
    bad = {k: r for k, r in ratios.items() if abs(r / 2 ** classical_order(k) - 1) > 0.25}
    record(9, not bad, "h-halving ratios " + ", ".join(f"{k} {r:.1f}" for k, r in ratios.items()))
    assert not bad, bad


def test_criterion_10_cli(tmp_path, capsys):
    reports = []
    for k in (1, 2):
        out = tmp_path / f"run{k}"
        assert main(["gradient", "--problem", "pendulum", "--method", "lobatto3", "--seed", "11",
                     "--oracle", "forward-sensitivity", "--out", str(out)]) == 0
        reports.append(((out / "gradient.json").read_bytes(),
                        (out / "comparison_forward-sensitivity.csv").read_bytes()))
    identical = reports[0] == reports[1]
    codes = {
        "unknown-method": main(["gradient", "--method", "rk5", "--out", str(tmp_path)]),
        "non-convergence": main(["gradient", "--method", "midpoint", "--max-iters", "1",
                                 "--out", str(tmp_path)]),
        "tolerance": main(["gradient", "--oracle", "fd", "--tol", "1e-12", "--out", str(tmp_path)]),
    }
    expected = {"unknown-method": 2, "non-convergence": 3, "tolerance": 4}
    ok = identical and codes == expected
    assert json.loads(reports[0][0])["gradient"]
    record(10, ok, f"byte-identical reports: {identical}; exit codes "
                   + ", ".join(f"{k}={v}" for k, v in codes.items()))
    assert ok
