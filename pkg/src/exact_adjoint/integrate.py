"""Fixed-step RK and PRK time stepping that keeps every stage value."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DimensionMismatchError, InvalidParamError, NonConvergenceError
from .ode import OdeSystem, PartitionedOdeSystem, plain_view
from .tableau import ButcherTableau, PartitionedTableau

logger = logging.getLogger(__name__)

SOLVER_MODES = ("fixed-point", "newton")


@dataclass(frozen=True)
class SolverConfig:
    """Implicit stage solver settings.

    ``tol`` bounds the max-norm of the stage increment over all stages.
    """

    mode: str = "fixed-point"
    tol: float = 1e-13
    max_iters: int = 100

    def __post_init__(self):
        if self.mode not in SOLVER_MODES:
            raise InvalidParamError("solver", f"{self.mode!r} not in {SOLVER_MODES}")
        if not self.tol > 0:
            raise InvalidParamError("stage-tol", "must be > 0")
        if int(self.max_iters) < 1:
            raise InvalidParamError("max_iters", "must be >= 1")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True, eq=False)
class ForwardTrajectory:
    """States ``x_0..x_N`` and stage values ``X_{n,i}`` of a forward run.

    ``stages[n, i]`` is the stacked stage state; for PRK runs the first
    ``dim1`` components belong to the first partition.
    """

    h: float
    states: np.ndarray
    stages: np.ndarray
    tableau: Union[ButcherTableau, PartitionedTableau]
    iterations: np.ndarray
    dim1: Optional[int] = None

    def __post_init__(self):
        for arr in (self.states, self.stages, self.iterations):
            arr.flags.writeable = False

    @property
    def N(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.N + 1)

    @property
    def partitioned(self) -> bool:
        return self.dim1 is not None

    def stages_of(self, partition: int) -> np.ndarray:
        if not self.partitioned:
            raise ValueError("not a partitioned trajectory")
        return self.stages[..., : self.dim1] if partition == 1 else self.stages[..., self.dim1:]


def stage_coefficients(t: Union[ButcherTableau, PartitionedTableau], dim: int,
                       dim1: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-component coefficient arrays.

    Returns ``coef`` of shape ``(s, s, dim)`` and ``weights`` of shape
    ``(s, dim)`` so that component ``r`` of stage ``i`` uses
    ``coef[i, j, r]`` (the ``a`` entry of the partition owning ``r``).
    """
    if isinstance(t, PartitionedTableau):
        parts = [(slice(0, dim1), t.first), (slice(dim1, dim), t.second)]
    else:
        parts = [(slice(0, dim), t)]
    coef = np.empty((t.s, t.s, dim))
    weights = np.empty((t.s, dim))
    for sl, tab in parts:
        coef[:, :, sl] = tab.a[:, :, None]
        weights[:, sl] = tab.b[:, None]
    return coef, weights


def solve_stages(sys: OdeSystem, x: np.ndarray, h: float, coef: np.ndarray,
                 explicit: bool, cfg: SolverConfig = DEFAULT_SOLVER, step: int = 0):
    """Solve ``X_i = x + h sum_j coef[i, j] * f(X_j)`` for all stages.

    Returns ``(X, K, iterations)`` with ``K_i = f(X_i)``. Explicit
    coefficient sets are evaluated by forward substitution with no
    iteration.
    """
    s = coef.shape[0]
    d = x.size
    X = np.empty((s, d))
    K = np.empty((s, d))
    if explicit:
        for i in range(s):
            X[i] = x + h * np.einsum("jr,jr->r", coef[i, :i], K[:i]) if i else x
            K[i] = sys.f(X[i])
        return X, K, 0

    X[:] = x
    inc = np.inf
    for it in range(1, cfg.max_iters + 1):
        if cfg.mode == "newton":
            for i in range(s):
                K[i] = sys.f(X[i])
            resid = X - x - h * np.einsum("ijr,jr->ir", coef, K)
            jac = np.zeros((s, d, s, d))
            for j in range(s):
                Jj = sys.jacobian(X[j])
                for i in range(s):
                    jac[i, :, j, :] = -h * coef[i, j][:, None] * Jj
                jac[j, :, j, :] += np.eye(d)
            delta = np.linalg.solve(jac.reshape(s * d, s * d), resid.reshape(-1)).reshape(s, d)
            X = X - delta
            inc = float(np.abs(delta).max())
        else:
            for i in range(s):
                K[i] = sys.f(X[i])
            Xn = x + h * np.einsum("ijr,jr->ir", coef, K)
            inc = float(np.abs(Xn - X).max())
            X = Xn
        if inc <= cfg.tol:
            for i in range(s):
                K[i] = sys.f(X[i])
            return X, K, it
    raise NonConvergenceError(step, cfg.max_iters, inc)


def _integrate(plain: OdeSystem, t, theta, h, N, cfg, dim1=None) -> ForwardTrajectory:
    theta = np.array(theta, dtype=float).reshape(-1)
    if theta.size != plain.dim:
        raise DimensionMismatchError(f"initial state has {theta.size} entries, system dim is {plain.dim}")
    if not h > 0:
        raise InvalidParamError("h", "step size must be > 0")
    if int(N) != N or N < 1:
        raise InvalidParamError("N", "step count must be an integer >= 1")
    N = int(N)
    cfg = cfg or DEFAULT_SOLVER
    coef, weights = stage_coefficients(t, plain.dim, dim1)
    explicit = t.is_explicit
    states = np.empty((N + 1, plain.dim))
    stages = np.empty((N, t.s, plain.dim))
    iters = np.zeros(N, dtype=int)
    states[0] = theta
    x = theta
    for n in range(N):
        X, K, it = solve_stages(plain, x, h, coef, explicit, cfg, step=n)
        x = x + h * np.einsum("ir,ir->r", weights, K)
        states[n + 1] = x
        stages[n] = X
        iters[n] = it
    logger.debug("integrated %d steps, %d stage iterations", N, int(iters.sum()))
    return ForwardTrajectory(float(h), states, stages, t, iters, dim1)


def integrate_rk(sys: Union[OdeSystem, PartitionedOdeSystem], t: ButcherTableau, theta, h: float,
                 N: int, cfg: Optional[SolverConfig] = None) -> ForwardTrajectory:
    """Integrate ``N`` steps of size ``h`` with the RK method ``t``.

    A partitioned system is integrated as its stacked plain system.
    """
    if not isinstance(t, ButcherTableau):
        raise TypeError("integrate_rk needs a ButcherTableau")
    return _integrate(plain_view(sys), t, theta, h, N, cfg)


def integrate_prk(sys: PartitionedOdeSystem, t: PartitionedTableau, theta, h: float, N: int,
                  cfg: Optional[SolverConfig] = None) -> ForwardTrajectory:
    """Integrate ``N`` steps with the PRK pair ``t``.

    ``theta`` is either the stacked state or a pair ``(theta1, theta2)``.
    """
    if not isinstance(sys, PartitionedOdeSystem):
        raise TypeError("integrate_prk needs a PartitionedOdeSystem")
    if not isinstance(t, PartitionedTableau):
        raise TypeError("integrate_prk needs a PartitionedTableau")
    if isinstance(theta, tuple):
        th1, th2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in theta)
        if th1.size != sys.dim1 or th2.size != sys.dim2:
            raise DimensionMismatchError(
                f"partition sizes {th1.size}, {th2.size} do not match {sys.dim1}, {sys.dim2}"
            )
        theta = np.concatenate([th1, th2])
    return _integrate(plain_view(sys), t, theta, h, N, cfg, dim1=sys.dim1)


def integrate(sys, t, theta, h, N, cfg=None) -> ForwardTrajectory:
    """Dispatch on the tableau type."""
    if isinstance(t, PartitionedTableau):
        return integrate_prk(sys, t, theta, h, N, cfg)
    return integrate_rk(sys, t, theta, h, N, cfg)


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def write_trajectory_csv(traj: ForwardTrajectory, path: Union[str, Path]) -> None:
    header = ["t"] + [f"x_{k + 1}" for k in range(traj.dim)]
    lines = [",".join(header)]
    for tn, xn in zip(traj.times, traj.states):
        lines.append(",".join(format_float(v) for v in (tn, *xn)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_stage_sidecar(traj: ForwardTrajectory, path: Union[str, Path]) -> None:
    doc = {
        "h": traj.h,
        "N": traj.N,
        "dim1": traj.dim1,
        "stages": traj.stages.tolist(),
        "iterations": traj.iterations.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")
