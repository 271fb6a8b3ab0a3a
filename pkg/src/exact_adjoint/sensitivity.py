"""Discrete tangent and adjoint sweeps, and the exact-gradient pipeline.

The backward sweeps are written in terms of ``lambda_{n+1}``: substituting
``lambda_n = lambda_{n+1} + h * sum_j B_j (...)`` into the stage equations
gives stage values

    Lambda_i = lambda_{n+1} + h * sum_j (B_j - A_ij) * slope_j

which is an exact rewriting of the forward-written adjoint scheme, so the
sweep solves a linear stage system and then recovers ``lambda_n`` explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidParamError,
    LengthMismatchError,
    NonConvergenceError,
    SeparabilityViolationError,
    StageMismatchError,
    TableauMismatchError,
)
from .integrate import (
    DEFAULT_SOLVER,
    ForwardTrajectory,
    SolverConfig,
    integrate,
    stage_coefficients,
)
from .methods import get_method
from .ode import OdeSystem, PartitionedOdeSystem, Problem, plain_view
from .tableau import (
    ButcherTableau,
    GprkTableau,
    PartitionedTableau,
    synthesize_adjoint_rk,
    synthesize_gprk,
)

logger = logging.getLogger(__name__)

DIRECT_SOLVE_MAX = 2000


@dataclass(frozen=True, eq=False)
class AdjointRun:
    """Adjoint states ``lambdas[n]`` for ``n = 0..N`` (``lambdas[N]`` is the final condition)."""

    lambdas: np.ndarray
    iterations: np.ndarray
    dim1: Optional[int] = None

    @property
    def N(self) -> int:
        return self.lambdas.shape[0] - 1

    @property
    def initial(self) -> np.ndarray:
        return self.lambdas[0]


@dataclass(frozen=True, eq=False)
class GradientResult:
    gradient: np.ndarray
    pairing_drift: Optional[float]
    iterations: dict
    trajectory: ForwardTrajectory = field(repr=False)
    adjoint: AdjointRun = field(repr=False)
    cost_value: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "gradient": [float(v) for v in self.gradient],
            "pairing_drift": None if self.pairing_drift is None else float(self.pairing_drift),
            "iterations": dict(self.iterations),
        }


# ---------------------------------------------------------------------------
# Tangent (variational) sweeps

def _check_traj(traj: ForwardTrajectory, t) -> None:
    if type(traj.tableau) is not type(t) or not traj.tableau == t:
        raise TableauMismatchError("trajectory was produced with a different tableau")


def _variational(sys, t, traj: ForwardTrajectory, delta0) -> np.ndarray:
    plain = plain_view(sys)
    d = plain.dim
    delta = np.array(delta0, dtype=float)
    if delta.shape[0] != d:
        raise DimensionMismatchError(f"delta0 has {delta.shape[0]} rows, system dim is {d}")
    coef, weights = stage_coefficients(t, d, traj.dim1)
    s = t.s
    explicit = t.is_explicit
    out = np.empty((traj.N + 1,) + delta.shape)
    out[0] = delta
    tail = delta.shape[1:]
    for n in range(traj.N):
        J = [plain.jacobian(traj.stages[n, i]) for i in range(s)]
        if explicit:
            m = []
            for i in range(s):
                Di = delta.copy()
                for j in range(i):
                    Di += h_times(traj.h, coef[i, j], m[j])
                m.append(J[i] @ Di)
        else:
            # (I - h [P_ij J_j]) D = 1 (x) delta_n, with P_ij = diag(coef[i, j])
            big = np.zeros((s, d, s, d))
            for i in range(s):
                for j in range(s):
                    big[i, :, j, :] = -traj.h * coef[i, j][:, None] * J[j]
                big[i, :, i, :] += np.eye(d)
            rhs = np.broadcast_to(delta, (s,) + delta.shape).reshape((s * d,) + tail)
            D = np.linalg.solve(big.reshape(s * d, s * d), rhs).reshape((s, d) + tail)
            m = [J[i] @ D[i] for i in range(s)]
        for i in range(s):
            delta = delta + h_times(traj.h, weights[i], m[i])
        out[n + 1] = delta
    return out


def h_times(h: float, rowcoef: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``h * diag(rowcoef) @ v`` for a vector or a matrix ``v``."""
    if v.ndim == 1:
        return h * rowcoef * v
    return h * rowcoef[:, None] * v


def variational_rk(sys: Union[OdeSystem, PartitionedOdeSystem], t: ButcherTableau,
                   traj: ForwardTrajectory, delta0) -> np.ndarray:
    """Discrete tangent ``delta_n = (d x_n / d theta) delta0`` of an RK run.

    ``delta0`` may be a vector or a matrix whose columns are propagated
    together. Returns an array indexed by step ``n = 0..N``.
    """
    if not isinstance(t, ButcherTableau):
        raise TableauMismatchError("variational_rk needs a ButcherTableau")
    _check_traj(traj, t)
    return _variational(sys, t, traj, delta0)


def variational_prk(sys: PartitionedOdeSystem, t: PartitionedTableau,
                    traj: ForwardTrajectory, delta0) -> np.ndarray:
    """Discrete tangent of a PRK run; rows ``[:dim1]`` are the first partition."""
    if not isinstance(t, PartitionedTableau):
        raise TableauMismatchError("variational_prk needs a PartitionedTableau")
    _check_traj(traj, t)
    if isinstance(delta0, tuple):
        delta0 = np.concatenate([np.atleast_1d(np.asarray(v, float)) for v in delta0])
    return _variational(sys, t, traj, delta0)


# ---------------------------------------------------------------------------
# Adjoint sweeps

def _solve_linear_stages(G: np.ndarray, z: np.ndarray, h: float, cfg: SolverConfig, step: int):
    """Solve ``Z_i = z + h sum_j G[i, j] @ Z_j``; returns ``(Z, iterations)``."""
    s, d = G.shape[0], G.shape[2]
    nz = np.array([[np.any(G[i, j]) for j in range(s)] for i in range(s)])
    Z = np.empty((s, d))
    if not np.any(np.triu(nz)):
        for i in range(s):
            Z[i] = z + h * sum((G[i, j] @ Z[j] for j in range(i)), np.zeros(d))
        return Z, 0
    if not np.any(np.tril(nz)):
        for i in reversed(range(s)):
            Z[i] = z + h * sum((G[i, j] @ Z[j] for j in range(i + 1, s)), np.zeros(d))
        return Z, 0
    if cfg.mode == "newton" or s * d <= DIRECT_SOLVE_MAX:
        big = -h * G.transpose(0, 2, 1, 3).copy()
        for i in range(s):
            big[i, :, i, :] += np.eye(d)
        Z = np.linalg.solve(big.reshape(s * d, s * d), np.tile(z, s)).reshape(s, d)
        return Z, 1
    Z[:] = z
    inc = np.inf
    for it in range(1, cfg.max_iters + 1):
        Zn = z + h * np.einsum("ijab,jb->ia", G, Z)
        inc = float(np.abs(Zn - Z).max())
        Z = Zn
        if inc <= cfg.tol:
            return Z, it
    raise NonConvergenceError(step, cfg.max_iters, inc, phase="adjoint")


def _final_condition(lamN, d: int) -> np.ndarray:
    if isinstance(lamN, tuple):
        lamN = np.concatenate([np.atleast_1d(np.asarray(v, float)) for v in lamN])
    lam = np.array(lamN, dtype=float).reshape(-1)
    if lam.size != d:
        raise DimensionMismatchError(f"final condition has {lam.size} entries, system dim is {d}")
    return lam


def adjoint_rk(sys: Union[OdeSystem, PartitionedOdeSystem], fwd: ButcherTableau,
               adj: ButcherTableau, traj: ForwardTrajectory, lamN,
               cfg: Optional[SolverConfig] = None) -> AdjointRun:
    """Backward sweep of the RK method ``adj`` on the adjoint system.

    Slopes ``l_i = -J(X_{n,i})^T Lambda_i`` are evaluated at the stored
    forward stages.
    """
    if not isinstance(adj, ButcherTableau):
        raise TableauMismatchError("adjoint_rk needs a ButcherTableau adjoint")
    _check_traj(traj, fwd)
    if adj.s != fwd.s:
        raise StageMismatchError(f"forward has {fwd.s} stages, adjoint has {adj.s}")
    cfg = cfg or DEFAULT_SOLVER
    plain = plain_view(sys)
    d, s, h = plain.dim, fwd.s, traj.h
    M = adj.b[None, :] - adj.a   # B_j - A_ij
    lam = _final_condition(lamN, d)
    lambdas = np.empty((traj.N + 1, d))
    lambdas[-1] = lam
    iters = np.zeros(traj.N, dtype=int)
    for n in reversed(range(traj.N)):
        JT = [plain.jacobian(traj.stages[n, j]).T for j in range(s)]
        G = np.empty((s, s, d, d))
        for i in range(s):
            for j in range(s):
                G[i, j] = M[i, j] * JT[j]
        Lam, iters[n] = _solve_linear_stages(G, lam, h, cfg, n)
        lam = lam + h * sum(adj.b[j] * (JT[j] @ Lam[j]) for j in range(s))
        lambdas[n] = lam
    return AdjointRun(lambdas, iters)


def adjoint_prk(sys: PartitionedOdeSystem, fwd: PartitionedTableau, adj: PartitionedTableau,
                traj: ForwardTrajectory, lamN, cfg: Optional[SolverConfig] = None) -> AdjointRun:
    """Backward sweep of an ordinary PRK pair on the adjoint system.

    Each partition has a single slope ``(J^T Lambda)`` restricted to its rows.
    Used for GPRK tableaus that reduce to a PRK pair.
    """
    _check_traj(traj, fwd)
    if adj.s != fwd.s:
        raise StageMismatchError(f"forward has {fwd.s} stages, adjoint has {adj.s}")
    cfg = cfg or DEFAULT_SOLVER
    plain = plain_view(sys)
    d, d1, s, h = plain.dim, sys.dim1, fwd.s, traj.h
    coef, weights = stage_coefficients(adj, d, d1)
    lam = _final_condition(lamN, d)
    lambdas = np.empty((traj.N + 1, d))
    lambdas[-1] = lam
    iters = np.zeros(traj.N, dtype=int)
    for n in reversed(range(traj.N)):
        JT = [plain.jacobian(traj.stages[n, j]).T for j in range(s)]
        G = np.empty((s, s, d, d))
        for i in range(s):
            for j in range(s):
                G[i, j] = (weights[j] - coef[i, j])[:, None] * JT[j]
        Lam, iters[n] = _solve_linear_stages(G, lam, h, cfg, n)
        lam = lam + h * sum(weights[j] * (JT[j] @ Lam[j]) for j in range(s))
        lambdas[n] = lam
    return AdjointRun(lambdas, iters, dim1=d1)


def adjoint_gprk(sys: PartitionedOdeSystem, fwd: PartitionedTableau, adj: GprkTableau,
                 traj: ForwardTrajectory, lamN, cfg: Optional[SolverConfig] = None,
                 separable: bool = False) -> AdjointRun:
    """Backward sweep of a generalized PRK method on the adjoint system.

    Four slope families are formed at every stage from the Jacobian blocks
    ``Jpq = d f_p / d x_q``::

        l11 = J11^T Lambda1    l12 = J21^T Lambda2
        l21 = J12^T Lambda1    l22 = J22^T Lambda2

    and partition ``p`` is updated with ``B^{p1} l^{p1} + B^{p2} l^{p2}``.
    With ``separable=True`` the families ``l11`` and ``l22`` (identically
    zero on separable systems) are skipped.
    """
    if not isinstance(sys, PartitionedOdeSystem):
        raise TypeError("adjoint_gprk needs a PartitionedOdeSystem")
    if not isinstance(adj, GprkTableau):
        raise TableauMismatchError("adjoint_gprk needs a GprkTableau")
    _check_traj(traj, fwd)
    if adj.s != fwd.s:
        raise StageMismatchError(f"forward has {fwd.s} stages, GPRK has {adj.s}")
    if separable and not sys.separable:
        raise SeparabilityViolationError(
            f"separable fast path requested but system {sys.name!r} is not separable"
        )
    cfg = cfg or DEFAULT_SOLVER
    d1, d2 = sys.dim1, sys.dim2
    d, s, h = d1 + d2, adj.s, traj.h
    C = {k: adj.weights(k)[None, :] - adj.matrix(k) for k in ("11", "12", "21", "22")}
    B = {k: adj.weights(k) for k in ("11", "12", "21", "22")}
    lam = _final_condition(lamN, d)
    lambdas = np.empty((traj.N + 1, d))
    lambdas[-1] = lam
    iters = np.zeros(traj.N, dtype=int)
    p1, p2 = slice(0, d1), slice(d1, d)
    for n in reversed(range(traj.N)):
        blocks = [sys.jacobian_blocks(X[:d1], X[d1:]) for X in traj.stages[n]]
        # G[i, j] acts on (Lambda1_j, Lambda2_j) and produces the (1, 2) rows.
        G = np.zeros((s, s, d, d))
        for j, (J11, J12, J21, J22) in enumerate(blocks):
            for i in range(s):
                if not separable:
                    G[i, j, p1, p1] = C["11"][i, j] * J11.T
                    G[i, j, p2, p2] = C["22"][i, j] * J22.T
                G[i, j, p1, p2] = C["12"][i, j] * J21.T
                G[i, j, p2, p1] = C["21"][i, j] * J12.T
        Lam, iters[n] = _solve_linear_stages(G, lam, h, cfg, n)
        upd1 = np.zeros(d1)
        upd2 = np.zeros(d2)
        for j, (J11, J12, J21, J22) in enumerate(blocks):
            L1, L2 = Lam[j, p1], Lam[j, p2]
            l12 = J21.T @ L2
            l21 = J12.T @ L1
            upd1 += B["12"][j] * l12
            upd2 += B["21"][j] * l21
            if not separable:
                l11 = J11.T @ L1
                l22 = J22.T @ L2
                upd1 += B["11"][j] * l11
                upd2 += B["22"][j] * l22
        lam = lam + h * np.concatenate([upd1, upd2])
        lambdas[n] = lam
    return AdjointRun(lambdas, iters, dim1=d1)


def pairings(delta: np.ndarray, run: AdjointRun) -> np.ndarray:
    """``lambda_n^T delta_n`` for ``n = 0..N`` (summed over both partitions)."""
    delta = np.asarray(delta)
    if delta.shape != run.lambdas.shape:
        raise LengthMismatchError(
            f"tangent trajectory shape {delta.shape} != adjoint shape {run.lambdas.shape}"
        )
    return np.einsum("nd,nd->n", run.lambdas, delta)


def pairing_drift(delta: np.ndarray, run: AdjointRun) -> float:
    """Largest per-step change of ``lambda_n^T delta_n``."""
    p = pairings(delta, run)
    return float(np.abs(np.diff(p)).max(initial=0.0))


# ---------------------------------------------------------------------------
# Pipeline

def resolve_method(method) -> Union[ButcherTableau, PartitionedTableau]:
    if isinstance(method, str):
        return get_method(method)
    if isinstance(method, (ButcherTableau, PartitionedTableau)):
        return method
    raise InvalidParamError("method", f"not a method name or tableau: {method!r}")


def _defaults(problem: Problem, theta, h, N):
    theta = problem.theta if theta is None else np.asarray(theta, dtype=float).reshape(-1)
    h = problem.h if h is None else h
    N = problem.N if N is None else N
    return theta, h, N


def forward(problem: Problem, method, theta=None, h=None, N=None,
            cfg: Optional[SolverConfig] = None) -> ForwardTrajectory:
    t = resolve_method(method)
    theta, h, N = _defaults(problem, theta, h, N)
    if isinstance(t, PartitionedTableau) and not isinstance(problem.system, PartitionedOdeSystem):
        raise InvalidParamError(
            "method", f"partitioned method {t.name or ''!r} needs a partitioned problem"
        )
    return integrate(problem.system, t, theta, h, N, cfg)


def exact_gradient(problem: Problem, method, theta=None, h=None, N=None,
                   cfg: Optional[SolverConfig] = None, delta0=None,
                   adjoint_tableau: Union[ButcherTableau, GprkTableau, None] = None,
                   separable: bool = False) -> GradientResult:
    """Gradient of ``C(x_N(theta))`` with respect to ``theta`` via the adjoint sweep.

    ``adjoint_tableau`` overrides the synthesized canonical partner (used for
    negative controls). If ``delta0`` is given, the tangent sweep is run as
    well and the pairing drift is reported.
    """
    t = resolve_method(method)
    traj = forward(problem, t, theta, h, N, cfg)
    lamN = problem.cost.gradient(traj.final)
    sys = problem.system
    if isinstance(t, PartitionedTableau):
        adj = adjoint_tableau if adjoint_tableau is not None else synthesize_gprk(t)
        run = adjoint_gprk(sys, t, adj, traj, lamN, cfg, separable=separable)
        var = variational_prk
    else:
        adj = adjoint_tableau if adjoint_tableau is not None else synthesize_adjoint_rk(t)
        run = adjoint_rk(sys, t, adj, traj, lamN, cfg)
        var = variational_rk
    drift = None
    if delta0 is not None:
        drift = pairing_drift(var(sys, t, traj, delta0), run)
    iterations = {
        "forward_total": int(traj.iterations.sum()),
        "forward_max": int(traj.iterations.max(initial=0)),
        "adjoint_total": int(run.iterations.sum()),
    }
    logger.info("gradient computed: N=%d h=%g forward iterations=%d",
                traj.N, traj.h, iterations["forward_total"])
    return GradientResult(
        gradient=run.initial.copy(),
        pairing_drift=drift,
        iterations=iterations,
        trajectory=traj,
        adjoint=run,
        cost_value=float(problem.cost.value(traj.final)),
    )


def summed_terminal_gradient(problem: Problem, method, theta=None, h=None, N=None,
                             cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """Gradient of ``sum_{n=1..N} C(x_n(theta))`` by ``N`` terminal-cost runs."""
    theta, h, N = _defaults(problem, theta, h, N)
    total = np.zeros(problem.dim)
    for n in range(1, int(N) + 1):
        total += exact_gradient(problem, method, theta, h, n, cfg).gradient
    return total
