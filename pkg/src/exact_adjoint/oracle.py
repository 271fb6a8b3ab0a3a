"""Independent gradient references for checking the adjoint pipeline.

None of these touch the adjoint sweeps; the finite-difference and
forward-sensitivity references share only the forward integrator, and the
linear reference does not even integrate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import DimensionMismatchError, InvalidParamError
from .integrate import SolverConfig, format_float
from .ode import CostFunction, Problem
from .sensitivity import forward, resolve_method, variational_prk, variational_rk
from .tableau import ButcherTableau, PartitionedTableau

REL_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class GradientComparison:
    reference_name: str
    reference: np.ndarray
    candidate: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.candidate - self.reference)

    @property
    def abs_err(self) -> float:
        return float(self.errors.max(initial=0.0))

    @property
    def rel_err(self) -> float:
        scale = max(float(np.abs(self.reference).max(initial=0.0)), REL_FLOOR)
        return self.abs_err / scale

    def table(self) -> list[tuple[int, float, float, float]]:
        return [(k, float(r), float(c), float(e))
                for k, (r, c, e) in enumerate(zip(self.reference, self.candidate, self.errors))]

    def summary(self) -> dict:
        return {"reference": self.reference_name, "abs_err": self.abs_err, "rel_err": self.rel_err}

    def to_csv(self) -> str:
        lines = ["coordinate,reference,candidate,abs_err"]
        for k, r, c, e in self.table():
            lines.append(f"{k},{format_float(r)},{format_float(c)},{format_float(e)}")
        return "\n".join(lines) + "\n"

    def write(self, csv_path: Union[str, Path], summary_path: Union[str, Path, None] = None):
        Path(csv_path).write_text(self.to_csv())
        if summary_path is not None:
            Path(summary_path).write_text(json.dumps(self.summary(), indent=2) + "\n")


def compare(reference_name: str, reference, candidate) -> GradientComparison:
    ref = np.asarray(reference, dtype=float).reshape(-1)
    cand = np.asarray(candidate, dtype=float).reshape(-1)
    if ref.shape != cand.shape:
        raise DimensionMismatchError(f"reference has {ref.size} entries, candidate {cand.size}")
    return GradientComparison(reference_name, ref, cand)


def _cost_of_final(problem, method, theta, h, N, cfg):
    return problem.cost.value(forward(problem, method, theta, h, N, cfg).final)


def fd_gradient(problem: Problem, method, theta=None, h=None, N=None, eps: float = 1e-6,
                scheme: str = "central", cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """Finite-difference gradient of ``C(x_N(theta))``.

    ``forward``: ``(C(theta + eps e_i) - C(theta)) / eps``;
    ``central``: ``(C(theta + eps e_i) - C(theta - eps e_i)) / (2 eps)``.
    """
    if not eps > 0:
        raise InvalidParamError("eps", "must be > 0")
    if scheme not in ("forward", "central"):
        raise InvalidParamError("scheme", f"{scheme!r} not in ('forward', 'central')")
    theta = problem.theta if theta is None else np.asarray(theta, dtype=float).reshape(-1)
    grad = np.empty(theta.size)
    base = _cost_of_final(problem, method, theta, h, N, cfg) if scheme == "forward" else None
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = eps
        plus = _cost_of_final(problem, method, theta + e, h, N, cfg)
        if scheme == "forward":
            grad[i] = (plus - base) / eps
        else:
            minus = _cost_of_final(problem, method, theta - e, h, N, cfg)
            grad[i] = (plus - minus) / (2 * eps)
    return grad


def tangent_matrix(problem: Problem, method, theta=None, h=None, N=None,
                   cfg: Optional[SolverConfig] = None,
                   order: Optional[Iterable[int]] = None):
    """``d x_N / d theta`` assembled column by column from tangent sweeps.

    Returns ``(matrix, trajectory)``.
    """
    t = resolve_method(method)
    traj = forward(problem, t, theta, h, N, cfg)
    d = traj.dim
    var = variational_prk if isinstance(t, PartitionedTableau) else variational_rk
    cols = list(range(d)) if order is None else list(order)
    if sorted(cols) != list(range(d)):
        raise InvalidParamError("order", "must be a permutation of the coordinates")
    Phi = np.empty((d, d))
    for k in cols:
        e = np.zeros(d)
        e[k] = 1.0
        Phi[:, k] = var(problem.system, t, traj, e)[-1]
    return Phi, traj


def forward_sensitivity_gradient(problem: Problem, method, theta=None, h=None, N=None,
                                 cfg: Optional[SolverConfig] = None,
                                 order: Optional[Iterable[int]] = None) -> np.ndarray:
    """Chain rule ``(d x_N / d theta)^T grad C(x_N)`` with the tangent matrix
    assembled from ``d`` basis sweeps."""
    Phi, traj = tangent_matrix(problem, method, theta, h, N, cfg, order)
    return Phi.T @ problem.cost.gradient(traj.final)


def stability_matrix(L, tableau: Union[ButcherTableau, PartitionedTableau], h: float,
                     dim1: Optional[int] = None) -> np.ndarray:
    """One-step propagator ``R(hL)`` of an RK or PRK method on ``x' = L x``.

    Closed form: stage slopes solve ``K_i = L x + h L sum_j P_ij K_j`` with
    ``P_ij`` the per-row stage coefficient, and ``x1 = x + h sum_i W_i K_i``.
    """
    L = np.asarray(L, dtype=float)
    d = L.shape[0]
    if L.shape != (d, d):
        raise DimensionMismatchError(f"L must be square, got {L.shape}")
    if isinstance(tableau, PartitionedTableau):
        if dim1 is None:
            raise InvalidParamError("dim1", "required for a partitioned tableau")
        split = np.arange(d) < dim1
        a = lambda i, j: np.where(split, tableau.first.a[i, j], tableau.second.a[i, j])  # noqa: E731
        w = lambda i: np.where(split, tableau.first.b[i], tableau.second.b[i])  # noqa: E731
    else:
        a = lambda i, j: np.full(d, tableau.a[i, j])  # noqa: E731
        w = lambda i: np.full(d, tableau.b[i])  # noqa: E731
    s = tableau.s
    M = np.eye(s * d)
    for i in range(s):
        for j in range(s):
            M[i * d:(i + 1) * d, j * d:(j + 1) * d] -= h * L * a(i, j)[None, :]
    K = np.linalg.solve(M, np.tile(L, (s, 1)))          # (s*d, d): K = Kmap @ x
    R = np.eye(d)
    for i in range(s):
        R += h * w(i)[:, None] * K[i * d:(i + 1) * d]
    return R


def linear_exact_gradient(L, tableau, cost: CostFunction, theta, h: float, N: int,
                          dim1: Optional[int] = None) -> np.ndarray:
    """``(R(hL)^N)^T grad C(R(hL)^N theta)`` for the linear system ``x' = L x``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != theta.size:
        raise DimensionMismatchError(f"L has shape {L.shape}, theta has {theta.size} entries")
    tableau = resolve_method(tableau)
    RN = np.linalg.matrix_power(stability_matrix(L, tableau, h, dim1), int(N))
    return RN.T @ cost.gradient(RN @ theta)
