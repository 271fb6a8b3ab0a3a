"""Autonomous ODE systems with analytic Jacobians, cost functions and the
built-in problem catalog."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Union

import numpy as np

from .errors import DomainError, InvalidParamError, UnknownProblemError

Vector = np.ndarray
Matrix = np.ndarray


@dataclass(frozen=True)
class OdeSystem:
    """``dx/dt = f(x)`` on R^dim, with Jacobian ``jacobian(x) = df/dx``."""

    dim: int
    f: Callable[[Vector], Vector]
    jacobian: Callable[[Vector], Matrix]
    name: str = ""


@dataclass(frozen=True)
class PartitionedOdeSystem:
    """Two coupled blocks ``x1' = f1(x1, x2)``, ``x2' = f2(x1, x2)``.

    ``jacXY`` is the derivative of ``fX`` with respect to ``xY``.
    ``separable`` declares that ``f1`` depends on ``x2`` only and ``f2`` on
    ``x1`` only, so ``jac11`` and ``jac22`` vanish identically.
    """

    dim1: int
    dim2: int
    f1: Callable[[Vector, Vector], Vector]
    f2: Callable[[Vector, Vector], Vector]
    jac11: Callable[[Vector, Vector], Matrix]
    jac12: Callable[[Vector, Vector], Matrix]
    jac21: Callable[[Vector, Vector], Matrix]
    jac22: Callable[[Vector, Vector], Matrix]
    separable: bool = False
    name: str = ""

    @property
    def dim(self) -> int:
        return self.dim1 + self.dim2

    def split(self, x: Vector) -> tuple[Vector, Vector]:
        return x[: self.dim1], x[self.dim1:]

    def jacobian_blocks(self, x1: Vector, x2: Vector) -> tuple[Matrix, Matrix, Matrix, Matrix]:
        return self.jac11(x1, x2), self.jac12(x1, x2), self.jac21(x1, x2), self.jac22(x1, x2)


AnySystem = Union[OdeSystem, PartitionedOdeSystem]


def as_plain(p: PartitionedOdeSystem) -> OdeSystem:
    """View a partitioned system as the stacked system on R^(dim1+dim2)."""
    d1 = p.dim1

    def f(x):
        x1, x2 = x[:d1], x[d1:]
        return np.concatenate([p.f1(x1, x2), p.f2(x1, x2)])

    def jacobian(x):
        x1, x2 = x[:d1], x[d1:]
        return np.block([[p.jac11(x1, x2), p.jac12(x1, x2)],
                         [p.jac21(x1, x2), p.jac22(x1, x2)]])

    return OdeSystem(p.dim, f, jacobian, name=p.name)


def plain_view(sys: AnySystem) -> OdeSystem:
    return as_plain(sys) if isinstance(sys, PartitionedOdeSystem) else sys


@dataclass(frozen=True)
class CostFunction:
    """Scalar terminal cost ``C(x)`` with its gradient."""

    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    name: str = ""


def quadratic_cost(target) -> CostFunction:
    """``C(x) = 0.5 * ||x - target||^2``."""
    target = np.array(target, dtype=float)
    target.flags.writeable = False

    def value(x):
        r = np.asarray(x) - target
        return 0.5 * float(r @ r)

    def gradient(x):
        return np.asarray(x, dtype=float) - target

    return CostFunction(value, gradient, name="quadratic")


def quartic_cost(target) -> CostFunction:
    """``C(x) = (0.5 * ||x - target||^2)^2``; nonzero third derivative."""
    target = np.array(target, dtype=float)
    target.flags.writeable = False

    def value(x):
        r = np.asarray(x) - target
        return (0.5 * float(r @ r)) ** 2

    def gradient(x):
        r = np.asarray(x, dtype=float) - target
        return float(r @ r) * r

    return CostFunction(value, gradient, name="quartic")


def constant_cost(c: float = 0.0) -> CostFunction:
    return CostFunction(lambda x: float(c), lambda x: np.zeros(np.size(x)), name="constant")


@dataclass(frozen=True)
class Problem:
    """A fully wired test problem: system, cost and defaults."""

    name: str
    system: AnySystem
    cost: CostFunction
    theta: Vector
    h: float
    N: int
    params: Mapping[str, Any]
    exact_solution: Optional[Callable[[Vector, float], Vector]] = None
    linear_matrix: Optional[Matrix] = None

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def horizon(self) -> float:
        return self.h * self.N

    def with_cost(self, cost: CostFunction) -> "Problem":
        return replace(self, cost=cost)


# ---------------------------------------------------------------------------
# Catalog

def _param(params, key, default, kind=float, check=None, why=""):
    raw = params.get(key, default)
    try:
        val = kind(raw)
    except (TypeError, ValueError):
        raise InvalidParamError(key, f"cannot interpret {raw!r} as {kind.__name__}") from None
    if check is not None and not check(val):
        raise InvalidParamError(key, why or f"value {val!r} out of range")
    return val


def _make_cost(params, dim, default_target, allowed=("quadratic", "quartic")):
    kind = str(params.get("cost", "quadratic"))
    if kind not in allowed:
        raise InvalidParamError("cost", f"{kind!r} not in {allowed}")
    target = params.get("target", default_target)
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.size != dim:
        raise InvalidParamError("target", f"expected {dim} entries, got {target.size}")
    return quartic_cost(target) if kind == "quartic" else quadratic_cost(target)


def _separable_hamiltonian(dim, dT, d2T, dV, d2V, name) -> PartitionedOdeSystem:
    """q' = dT(p), p' = -dV(q)."""
    Z = np.zeros((dim, dim))
    return PartitionedOdeSystem(
        dim1=dim, dim2=dim,
        f1=lambda q, p: dT(p),
        f2=lambda q, p: -dV(q),
        jac11=lambda q, p: Z.copy(),
        jac12=lambda q, p: d2T(p),
        jac21=lambda q, p: -d2V(q),
        jac22=lambda q, p: Z.copy(),
        separable=True,
        name=name,
    )


def harmonic(params) -> Problem:
    system = _separable_hamiltonian(
        1,
        dT=lambda p: np.array(p, dtype=float),
        d2T=lambda p: np.eye(1),
        dV=lambda q: np.array(q, dtype=float),
        d2V=lambda q: np.eye(1),
        name="harmonic",
    )

    def exact(theta, t):
        q0, p0 = theta
        c, s = np.cos(t), np.sin(t)
        return np.array([c * q0 + s * p0, -s * q0 + c * p0])

    L = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return Problem(
        "harmonic", system, _make_cost(params, 2, np.zeros(2)),
        theta=np.array([1.0, 0.0]), h=0.1, N=100, params=dict(params),
        exact_solution=exact, linear_matrix=L,
    )


def pendulum(params) -> Problem:
    """H = p^2/2 - cos q + (coupling/2) q^2 p^2; separable iff coupling == 0."""
    k = _param(params, "coupling", 0.1)

    def f1(q, p):
        return p + k * q**2 * p

    def f2(q, p):
        return -np.sin(q) - k * q * p**2

    system = PartitionedOdeSystem(
        dim1=1, dim2=1,
        f1=f1, f2=f2,
        jac11=lambda q, p: np.array([[2 * k * q[0] * p[0]]]),
        jac12=lambda q, p: np.array([[1.0 + k * q[0] ** 2]]),
        jac21=lambda q, p: np.array([[-np.cos(q[0]) - k * p[0] ** 2]]),
        jac22=lambda q, p: np.array([[-2 * k * q[0] * p[0]]]),
        separable=(k == 0.0),
        name="pendulum",
    )
    return Problem(
        "pendulum", system, _make_cost(params, 2, np.zeros(2)),
        theta=np.array([1.0, 0.5]), h=0.05, N=100, params=dict(params),
    )


KEPLER_MIN_RADIUS = 1e-8


def kepler(params) -> Problem:
    """Planar two-body problem, H = |p|^2/2 - 1/|q|."""
    e = _param(params, "eccentricity", 0.5, check=lambda v: 0 <= v < 1,
               why="must lie in [0, 1)")

    def radius(q):
        r = float(np.hypot(q[0], q[1]))
        if r < KEPLER_MIN_RADIUS:
            raise DomainError(f"kepler: radius {r:.3e} below {KEPLER_MIN_RADIUS:g}")
        return r

    def dV(q):
        return q / radius(q) ** 3

    def d2V(q):
        r = radius(q)
        return np.eye(2) / r**3 - 3.0 * np.outer(q, q) / r**5

    system = _separable_hamiltonian(
        2,
        dT=lambda p: np.array(p, dtype=float),
        d2T=lambda p: np.eye(2),
        dV=dV, d2V=d2V, name="kepler",
    )
    theta = np.array([1.0 - e, 0.0, 0.0, np.sqrt((1.0 + e) / (1.0 - e))])

    def energy(x):
        return 0.5 * float(x[2:] @ x[2:]) - 1.0 / radius(x[:2])

    kind = str(params.get("cost", "quadratic"))
    if kind == "energy":
        # C = (H(x) - H0)^2
        h0 = _param(params, "reference_energy", energy(theta))

        def value(x):
            return (energy(x) - h0) ** 2

        def gradient(x):
            grad_h = np.concatenate([dV(x[:2]), x[2:]])
            return 2.0 * (energy(x) - h0) * grad_h

        cost = CostFunction(value, gradient, name="energy")
    else:
        cost = _make_cost(params, 4, np.zeros(4))
    return Problem("kepler", system, cost, theta=theta, h=0.01, N=100, params=dict(params))


def _random_linear_matrix(d: int, seed: int) -> Matrix:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((d, d)) / np.sqrt(d) - 0.5 * np.eye(d)


def load_matrix(path: Union[str, Path]) -> Matrix:
    """Dense row-major matrix from JSON (list of rows) or whitespace text."""
    text = Path(path).read_text()
    try:
        rows = json.loads(text)
        m = np.array(rows, dtype=float)
    except json.JSONDecodeError:
        m = np.loadtxt(path, ndmin=2)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidParamError("matrix", f"expected a square matrix, got shape {m.shape}")
    return m


def linear(params) -> Problem:
    """``f(x) = L x`` with dense ``L`` (random with fixed seed, or from file)."""
    if "matrix" in params:
        m = params["matrix"]
        L = load_matrix(m) if isinstance(m, (str, Path)) else np.array(m, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InvalidParamError("matrix", "must be square")
        d = L.shape[0]
    else:
        d = _param(params, "d", 6, int, check=lambda v: v >= 1, why="must be >= 1")
        seed = _param(params, "seed", 0, int)
        L = _random_linear_matrix(d, seed)
    L = np.array(L)
    L.flags.writeable = False
    system = OdeSystem(d, lambda x: L @ x, lambda x: L.copy(), name="linear")
    theta = np.cos(np.arange(1, d + 1, dtype=float))

    def exact(theta, t):
        from scipy.linalg import expm
        return expm(t * L) @ theta

    return Problem(
        "linear", system, _make_cost(params, d, np.zeros(d)),
        theta=theta, h=0.05, N=100, params=dict(params),
        exact_solution=exact, linear_matrix=L,
    )


def heat_advection(params) -> Problem:
    """Periodic 1-D advection-diffusion, upwind advection + centered diffusion.

    The grid values are split into a left half (first partition) and a right
    half (second partition).
    """
    d = _param(params, "d", 20, int, check=lambda v: v >= 4 and v % 2 == 0,
               why="must be an even integer >= 4")
    nu = _param(params, "nu", 0.005, check=lambda v: v >= 0, why="must be >= 0")
    vel = _param(params, "velocity", 0.5)
    dx = 1.0 / d
    eye = np.eye(d)
    up = np.roll(eye, -1, axis=1)    # (up @ u)_i = u_{i+1}
    down = np.roll(eye, 1, axis=1)   # (down @ u)_i = u_{i-1}
    diffusion = nu * (up - 2 * eye + down) / dx**2
    if vel >= 0:
        advection = -vel * (eye - down) / dx
    else:
        advection = -vel * (up - eye) / dx
    L = diffusion + advection
    L.flags.writeable = False
    m = d // 2
    L11, L12, L21, L22 = L[:m, :m], L[:m, m:], L[m:, :m], L[m:, m:]
    system = PartitionedOdeSystem(
        dim1=m, dim2=d - m,
        f1=lambda u1, u2: L11 @ u1 + L12 @ u2,
        f2=lambda u1, u2: L21 @ u1 + L22 @ u2,
        jac11=lambda u1, u2: L11.copy(),
        jac12=lambda u1, u2: L12.copy(),
        jac21=lambda u1, u2: L21.copy(),
        jac22=lambda u1, u2: L22.copy(),
        separable=False,
        name="heat-advection",
    )
    xs = (np.arange(d) + 0.5) * dx
    theta = np.exp(-40.0 * (xs - 0.3) ** 2)

    def exact(theta, t):
        from scipy.linalg import expm
        return expm(t * L) @ theta

    return Problem(
        "heat-advection", system, _make_cost(params, d, np.zeros(d)),
        theta=theta, h=0.05, N=50, params=dict(params),
        exact_solution=exact, linear_matrix=L,
    )


PROBLEMS = {
    "linear": linear,
    "harmonic": harmonic,
    "pendulum": pendulum,
    "kepler": kepler,
    "heat-advection": heat_advection,
}


def builtin_problem(name: str, params: Optional[Mapping[str, Any]] = None) -> Problem:
    """Look up a catalog problem and build it with ``params``."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise UnknownProblemError(name, PROBLEMS) from None
    return factory(dict(params or {}))
