import numpy as np
import pytest

from exact_adjoint.errors import DomainError, InvalidParamError, UnknownProblemError
from exact_adjoint.ode import (
    PROBLEMS,
    PartitionedOdeSystem,
    as_plain,
    builtin_problem,
    load_matrix,
    plain_view,
    quadratic_cost,
    quartic_cost,
)


def sample_states(problem, rng, n):
    """States near the default initial condition (inside every problem's domain)."""
    return problem.theta + 0.2 * rng.standard_normal((n, problem.dim))


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_jacobian_matches_central_differences(name, rng):
    problem = builtin_problem(name)
    sys = plain_view(problem.system)
    measured = 0
    for x in sample_states(problem, rng, 100):
        v = rng.standard_normal(problem.dim)
        J = sys.jacobian(x) @ v
        errs = []
        for eps in (1e-3, 1e-4):
            fd = (sys.f(x + eps * v) - sys.f(x - eps * v)) / (2 * eps)
            errs.append(np.linalg.norm(fd - J))
        # round-off of the difference quotient at eps = 1e-4
        noise = 1e-16 * max(1.0, np.abs(sys.f(x)).max()) / 1e-4 * 10
        if problem.linear_matrix is not None or name == "harmonic":
            assert max(errs) < 1e-9     # exact on linear fields
            continue
        if errs[1] > noise:
            assert 80 <= errs[0] / errs[1] <= 120
            measured += 1
    if problem.linear_matrix is None and name != "harmonic":
        assert measured >= 90


@pytest.mark.parametrize("name", ["harmonic", "kepler"])
def test_separable_problems_have_zero_diagonal_blocks(name, rng):
    problem = builtin_problem(name)
    sys = problem.system
    assert sys.separable
    for x in sample_states(problem, rng, 100):
        J11, _, _, J22 = sys.jacobian_blocks(*sys.split(x))
        assert not J11.any() and not J22.any()


def test_pendulum_separability_follows_coupling():
    assert not builtin_problem("pendulum").system.separable
    assert builtin_problem("pendulum", {"coupling": 0}).system.separable


def test_as_plain_harmonic():
    plain = as_plain(builtin_problem("harmonic").system)
    assert plain.dim == 2
    np.testing.assert_array_equal(plain.f(np.array([0.3, -0.7])), [-0.7, -0.3])
    np.testing.assert_array_equal(plain.jacobian(np.array([0.3, -0.7])), [[0, 1], [-1, 0]])


@pytest.mark.parametrize("name", ["harmonic", "pendulum", "kepler", "heat-advection"])
def test_as_plain_assembles_blocks(name, rng):
    sys = builtin_problem(name).system
    assert isinstance(sys, PartitionedOdeSystem)
    plain = as_plain(sys)
    x = builtin_problem(name).theta + 0.1 * rng.standard_normal(sys.dim)
    x1, x2 = sys.split(x)
    J11, J12, J21, J22 = sys.jacobian_blocks(x1, x2)
    np.testing.assert_array_equal(plain.jacobian(x), np.block([[J11, J12], [J21, J22]]))
    np.testing.assert_array_equal(plain.f(x), np.concatenate([sys.f1(x1, x2), sys.f2(x1, x2)]))


def test_unknown_problem():
    with pytest.raises(UnknownProblemError):
        builtin_problem("lorenz")


@pytest.mark.parametrize("name,params,key", [
    ("linear", {"d": 0}, "d"),
    ("kepler", {"eccentricity": 1.2}, "eccentricity"),
    ("heat-advection", {"d": 7}, "d"),
    ("harmonic", {"cost": "cubic"}, "cost"),
    ("harmonic", {"target": [1, 2, 3]}, "target"),
    ("linear", {"matrix": [[1, 2, 3]]}, "matrix"),
])
def test_invalid_params_name_the_parameter(name, params, key):
    with pytest.raises(InvalidParamError) as exc:
        builtin_problem(name, params)
    assert exc.value.param == key


def test_kepler_domain_error():
    sys = plain_view(builtin_problem("kepler").system)
    with pytest.raises(DomainError):
        sys.f(np.array([1e-9, 0.0, 0.0, 1.0]))


def test_kepler_energy_cost_gradient(rng):
    problem = builtin_problem("kepler", {"cost": "energy"})
    assert problem.cost.value(problem.theta) == 0.0
    x = problem.theta + 0.1 * rng.standard_normal(4)
    g = problem.cost.gradient(x)
    eps = 1e-6
    fd = [(problem.cost.value(x + eps * e) - problem.cost.value(x - eps * e)) / (2 * eps)
          for e in np.eye(4)]
    np.testing.assert_allclose(g, fd, atol=1e-8)


@pytest.mark.parametrize("make", [quadratic_cost, quartic_cost])
def test_cost_gradients(make, rng):
    target = rng.standard_normal(3)
    cost = make(target)
    x = rng.standard_normal(3)
    eps = 1e-6
    fd = [(cost.value(x + eps * e) - cost.value(x - eps * e)) / (2 * eps) for e in np.eye(3)]
    np.testing.assert_allclose(cost.gradient(x), fd, atol=1e-7)
    assert cost.value(target) == 0.0


def test_harmonic_exact_solution():
    problem = builtin_problem("harmonic")
    np.testing.assert_allclose(problem.exact_solution(np.array([1.0, 0.0]), 2.0),
                               [np.cos(2.0), -np.sin(2.0)])


def test_linear_matrix_from_file(tmp_path):
    m = [[0.0, 1.0], [-2.0, -0.1]]
    js = tmp_path / "m.json"
    js.write_text("[[0, 1], [-2, -0.1]]")
    txt = tmp_path / "m.txt"
    txt.write_text("0 1\n-2 -0.1\n")
    np.testing.assert_array_equal(load_matrix(js), m)
    np.testing.assert_array_equal(load_matrix(txt), m)
    problem = builtin_problem("linear", {"matrix": str(js)})
    assert problem.dim == 2
    np.testing.assert_array_equal(problem.linear_matrix, m)


def test_problems_are_immutable():
    problem = builtin_problem("linear")
    with pytest.raises(ValueError):
        problem.linear_matrix[0, 0] = 1.0
    with pytest.raises(AttributeError):
        problem.h = 1.0
