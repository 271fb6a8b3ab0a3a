import numpy as np
import pytest

from exact_adjoint.errors import DimensionMismatchError, InvalidParamError, NonConvergenceError
from exact_adjoint.integrate import (
    SolverConfig,
    integrate,
    integrate_prk,
    integrate_rk,
    solve_stages,
    stage_coefficients,
    write_stage_sidecar,
    write_trajectory_csv,
)
from exact_adjoint.methods import (
    METHOD_NAMES,
    classical_order,
    explicit_euler,
    get_method,
    implicit_midpoint,
    lobatto_iiia_iiib3,
    rk4,
    stormer_verlet,
    symplectic_euler,
)
from exact_adjoint.ode import OdeSystem, builtin_problem, plain_view

DECAY = OdeSystem(1, lambda x: -x, lambda x: -np.eye(1), name="decay")


def harmonic_error(method, h, T=1.0):
    problem = builtin_problem("harmonic")
    N = int(round(T / h))
    traj = integrate(problem.system, get_method(method), problem.theta, h, N)
    return np.abs(traj.final - problem.exact_solution(problem.theta, T)).max()


def test_explicit_euler_closed_form(rng):
    L = builtin_problem("linear").linear_matrix
    sys = OdeSystem(6, lambda x: L @ x, lambda x: L)
    x0 = rng.standard_normal(6)
    traj = integrate_rk(sys, explicit_euler(), x0, 0.05, 20)
    x = x0
    for n in range(20):
        x = (np.eye(6) + 0.05 * L) @ x
        np.testing.assert_allclose(traj.states[n + 1], x, rtol=1e-14, atol=1e-15)
    assert traj.states[0].tolist() == x0.tolist()


def test_rk4_harmonic_order():
    e1, e2 = harmonic_error("rk4", 0.1), harmonic_error("rk4", 0.05)
    assert 14 <= e1 / e2 <= 18


def test_implicit_midpoint_scalar():
    traj = integrate_rk(DECAY, implicit_midpoint(), [3.0], 1.0, 1)
    assert traj.final[0] == pytest.approx(1.0, abs=1e-13)
    assert traj.stages[0, 0, 0] == pytest.approx(2.0, abs=1e-13)


@pytest.mark.parametrize("name", METHOD_NAMES)
def test_classical_orders_on_harmonic(name):
    p = classical_order(name)
    e1, e2 = harmonic_error(name, 0.1), harmonic_error(name, 0.05)
    assert 0.75 * 2**p <= e1 / e2 <= 1.25 * 2**p


def test_stormer_verlet_energy_bounded():
    problem = builtin_problem("harmonic")
    traj = integrate_prk(problem.system, stormer_verlet(), (1.0, 0.0), 0.1, 10_000)
    H = 0.5 * (traj.states**2).sum(axis=1)
    assert np.abs(H - H[0]).max() <= 0.01


def test_symplectic_euler_one_step():
    problem = builtin_problem("harmonic")
    h, q0, p0 = 0.1, 0.4, -0.3
    traj = integrate_prk(problem.system, symplectic_euler(), (q0, p0), h, 1)
    p1 = p0 - h * q0
    q1 = q0 + h * p1
    np.testing.assert_allclose(traj.final, [q1, p1], rtol=1e-15)


def test_lobatto_kepler_self_convergence():
    problem = builtin_problem("kepler")
    t, T = lobatto_iiia_iiib3(), 1.0
    finals = [integrate(problem.system, t, problem.theta, h, int(round(T / h))).final
              for h in (0.1, 0.05, 0.025)]
    ratio = np.abs(finals[0] - finals[1]).max() / np.abs(finals[1] - finals[2]).max()
    assert 14 <= ratio <= 18


def test_explicit_stages_reproduce_states():
    problem = builtin_problem("kepler")
    traj = integrate(problem.system, rk4(), problem.theta, 0.01, 50)
    assert not traj.iterations.any()
    sys = plain_view(problem.system)
    for n in range(traj.N):
        K = np.array([sys.f(X) for X in traj.stages[n]])
        x1 = traj.states[n] + traj.h * rk4().b @ K
        np.testing.assert_allclose(x1, traj.states[n + 1], rtol=1e-15, atol=1e-16)


def test_implicit_stage_residual_within_tolerance():
    problem = builtin_problem("pendulum")
    t = lobatto_iiia_iiib3()
    traj = integrate(problem.system, t, problem.theta, 0.05, 20)
    sys = plain_view(problem.system)
    coef, weights = stage_coefficients(t, sys.dim, traj.dim1)
    for n in range(traj.N):
        K = np.array([sys.f(X) for X in traj.stages[n]])
        resid = traj.stages[n] - traj.states[n] - traj.h * np.einsum("ijr,jr->ir", coef, K)
        assert np.abs(resid).max() <= 1e-12
        x1 = traj.states[n] + traj.h * np.einsum("ir,ir->r", weights, K)
        np.testing.assert_allclose(x1, traj.states[n + 1], atol=1e-15)


def test_explicit_solve_has_no_iterations():
    coef, _ = stage_coefficients(rk4(), 1)
    X, K, it = solve_stages(DECAY, np.array([1.0]), 0.1, coef, True)
    assert it == 0
    np.testing.assert_array_equal(K, -X)


def test_fixed_point_and_newton_on_decay():
    coef, _ = stage_coefficients(implicit_midpoint(), 1)
    x0, h = np.array([1.0]), 0.5
    X, _, it_fp = solve_stages(DECAY, x0, h, coef, False, SolverConfig("fixed-point"))
    assert X[0, 0] == pytest.approx(1 / (1 + h / 2), abs=1e-13)
    X, _, it_nt = solve_stages(DECAY, x0, h, coef, False, SolverConfig("newton"))
    assert X[0, 0] == pytest.approx(1 / (1 + h / 2), abs=1e-15)
    assert it_nt <= 2 < it_fp


def test_non_convergence_reports_step():
    with pytest.raises(NonConvergenceError) as exc:
        integrate_rk(DECAY, implicit_midpoint(), [1.0], 0.1, 3, SolverConfig(max_iters=1))
    assert exc.value.step == 0 and exc.value.iterations == 1


def test_newton_handles_stiff_heat_advection():
    problem = builtin_problem("heat-advection")
    cfg = SolverConfig("newton")
    traj = integrate(problem.system, get_method("sympeuler"), problem.theta, 0.05, 10, cfg)
    assert np.isfinite(traj.states).all()
    assert traj.iterations.max() <= 3


@pytest.mark.parametrize("kwargs", [dict(mode="bisection"), dict(tol=0.0), dict(max_iters=0)])
def test_solver_config_validation(kwargs):
    with pytest.raises(InvalidParamError):
        SolverConfig(**kwargs)


def test_argument_validation():
    with pytest.raises(DimensionMismatchError):
        integrate_rk(DECAY, rk4(), [1.0, 2.0], 0.1, 1)
    with pytest.raises(InvalidParamError):
        integrate_rk(DECAY, rk4(), [1.0], -0.1, 1)
    with pytest.raises(InvalidParamError):
        integrate_rk(DECAY, rk4(), [1.0], 0.1, 0)
    problem = builtin_problem("kepler")
    with pytest.raises(DimensionMismatchError):
        integrate_prk(problem.system, stormer_verlet(), ([1.0], [0, 0]), 0.1, 1)
    with pytest.raises(TypeError):
        integrate_prk(DECAY, stormer_verlet(), [1.0], 0.1, 1)


def test_trajectory_views():
    problem = builtin_problem("kepler")
    traj = integrate(problem.system, stormer_verlet(), problem.theta, 0.01, 5)
    assert traj.partitioned and traj.stages_of(1).shape == (5, 2, 2)
    np.testing.assert_allclose(traj.times, 0.01 * np.arange(6))
    with pytest.raises(ValueError):
        traj.states[0, 0] = 1.0


def test_trajectory_csv_format(tmp_path):
    problem = builtin_problem("harmonic")
    traj = integrate(problem.system, rk4(), problem.theta, 0.1, 100)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "t,x_1,x_2" and len(lines) == 102
    last = [float(v) for v in lines[-1].split(",")]
    assert abs(last[1] - np.cos(10)) < 1e-5 and abs(last[2] + np.sin(10)) < 1e-5
    assert float(lines[5].split(",")[1]) == traj.states[4, 0]    # 17 digits round-trip
    side = tmp_path / "stages.json"
    write_stage_sidecar(traj, side)
    assert side.read_text().startswith("{")
