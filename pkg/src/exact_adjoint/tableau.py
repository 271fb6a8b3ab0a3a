"""Butcher tableaus for RK, PRK and generalized PRK (GPRK) methods.

Besides the coefficient containers this module holds the algebra that turns
a forward tableau into the tableau whose application to the adjoint system
reproduces the exact gradient of the discrete forward map, plus residual
checkers for the corresponding coefficient conditions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np

from .errors import StageMismatchError, TableauParseError, ZeroWeightError

ZERO_WEIGHT_RTOL = 1e-12

GPRK_BLOCKS = ("11", "12", "21", "22")


def _frozen(x, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Coefficients ``(a, b)`` of an s-stage Runge-Kutta method.

    No abscissae are stored: every system handled here is autonomous.
    """

    a: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = _frozen(self.a, 2, "a")
        b = _frozen(self.b, 1, "b")
        if a.shape != (b.size, b.size):
            raise ValueError(f"a has shape {a.shape} but b has length {b.size}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def s(self) -> int:
        return self.b.size

    @property
    def is_explicit(self) -> bool:
        return not np.any(np.triu(self.a))

    def magnitude(self) -> float:
        return float(max(np.abs(self.a).max(initial=0.0), np.abs(self.b).max(initial=0.0)))

    def __eq__(self, other):
        if not isinstance(other, ButcherTableau):
            return NotImplemented
        return np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)

    __hash__ = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"ButcherTableau{label}(s={self.s}, a={self.a.tolist()}, b={self.b.tolist()})"


@dataclass(frozen=True, eq=False)
class PartitionedTableau:
    """A pair of tableaus sharing a stage count, one per partition."""

    first: ButcherTableau
    second: ButcherTableau
    name: str = ""

    def __post_init__(self):
        if self.first.s != self.second.s:
            raise StageMismatchError(
                f"partition tableaus have {self.first.s} and {self.second.s} stages"
            )

    @property
    def s(self) -> int:
        return self.first.s

    @property
    def is_explicit(self) -> bool:
        return self.first.is_explicit and self.second.is_explicit

    def magnitude(self) -> float:
        return max(self.first.magnitude(), self.second.magnitude())

    def __eq__(self, other):
        if not isinstance(other, PartitionedTableau):
            return NotImplemented
        return self.first == other.first and self.second == other.second

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GprkTableau:
    """Four weight vectors and four stage matrices of a generalized PRK method.

    Block ``pq`` of ``B``/``A`` multiplies the slope family that transports
    the adjoint of partition ``q`` into the update of partition ``p``.
    """

    B11: np.ndarray
    B12: np.ndarray
    B21: np.ndarray
    B22: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    name: str = ""

    def __post_init__(self):
        s = None
        for blk in GPRK_BLOCKS:
            B = _frozen(getattr(self, "B" + blk), 1, "B" + blk)
            A = _frozen(getattr(self, "A" + blk), 2, "A" + blk)
            s = B.size if s is None else s
            if B.size != s or A.shape != (s, s):
                raise StageMismatchError(f"GPRK block {blk} does not have {s} stages")
            object.__setattr__(self, "B" + blk, B)
            object.__setattr__(self, "A" + blk, A)

    @property
    def s(self) -> int:
        return self.B11.size

    def weights(self, blk: str) -> np.ndarray:
        return getattr(self, "B" + blk)

    def matrix(self, blk: str) -> np.ndarray:
        return getattr(self, "A" + blk)

    def magnitude(self) -> float:
        return float(
            max(
                max(np.abs(self.weights(k)).max() for k in GPRK_BLOCKS),
                max(np.abs(self.matrix(k)).max() for k in GPRK_BLOCKS),
            )
        )

    def __eq__(self, other):
        if not isinstance(other, GprkTableau):
            return NotImplemented
        return all(
            np.array_equal(self.weights(k), other.weights(k))
            and np.array_equal(self.matrix(k), other.matrix(k))
            for k in GPRK_BLOCKS
        )

    __hash__ = None


AnyTableau = Union[ButcherTableau, PartitionedTableau, GprkTableau]


@dataclass(frozen=True)
class ConditionReport:
    """Scaled absolute residuals of a family of coefficient conditions.

    Each entry is ``(condition_id, i, j, residual)``; ``j`` is ``None`` for
    conditions indexed by a single stage.
    """

    residuals: tuple = field(default_factory=tuple)
    scale: float = 1.0

    @property
    def max_residual(self) -> float:
        return max((r[3] for r in self.residuals), default=0.0)

    def family_max(self, condition_id: str) -> float:
        return max((r[3] for r in self.residuals if r[0] == condition_id), default=0.0)

    @property
    def families(self) -> list[str]:
        seen = []
        for r in self.residuals:
            if r[0] not in seen:
                seen.append(r[0])
        return seen

    def worst(self):
        return max(self.residuals, key=lambda r: r[3], default=None)

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "scale": self.scale,
            "families": {k: self.family_max(k) for k in self.families},
            "residuals": [
                {"condition": c, "i": i, "j": j, "residual": r} for c, i, j, r in self.residuals
            ],
        }


def _check_weights(b: np.ndarray, partition: int | None = None) -> None:
    cutoff = ZERO_WEIGHT_RTOL * max(1.0, float(np.abs(b).max(initial=0.0)))
    for i, bi in enumerate(b):
        if abs(bi) <= cutoff:
            raise ZeroWeightError(i, float(bi), partition)


def _adjoint_matrix(b_row: np.ndarray, b_col: np.ndarray, a: np.ndarray) -> np.ndarray:
    # A_ij = B_j - (B_j / b_i) a_ji
    return b_col[None, :] - (b_col[None, :] / b_row[:, None]) * a.T


def synthesize_adjoint_rk(t: ButcherTableau) -> ButcherTableau:
    """Return the RK tableau ``(A, B)`` that makes ``(t, (A, B))`` a canonical pair.

    ``B = b`` and ``A_ij = b_j - (b_j / b_i) a_ji``. Raises
    :class:`ZeroWeightError` if any weight vanishes.
    """
    _check_weights(t.b)
    name = f"adjoint({t.name})" if t.name else ""
    return ButcherTableau(_adjoint_matrix(t.b, t.b, t.a), t.b.copy(), name=name)


def synthesize_gprk(t: PartitionedTableau) -> GprkTableau:
    """Return the unique GPRK tableau giving exact gradients for the PRK method ``t``."""
    b1, b2 = t.first.b, t.second.b
    a1, a2 = t.first.a, t.second.a
    _check_weights(b1, partition=1)
    _check_weights(b2, partition=2)
    name = f"gprk({t.name})" if t.name else ""
    return GprkTableau(
        B11=b1.copy(),
        B12=b2.copy(),
        B21=b1.copy(),
        B22=b2.copy(),
        A11=_adjoint_matrix(b1, b1, a1),
        A12=_adjoint_matrix(b1, b2, a1),
        A21=_adjoint_matrix(b2, b1, a2),
        A22=_adjoint_matrix(b2, b2, a2),
        name=name,
    )


def _pair_residuals(cond, b, A, B, a, scale):
    """Residuals of ``b_i A_ij + B_j a_ji = b_i B_j`` for all (i, j)."""
    res = np.abs(b[:, None] * A + B[None, :] * a.T - b[:, None] * B[None, :]) / scale
    s = b.size
    return [(cond, i, j, float(res[i, j])) for i in range(s) for j in range(s)]


def check_rk_adjoint_conditions(fwd: ButcherTableau, adj: ButcherTableau) -> ConditionReport:
    if fwd.s != adj.s:
        raise StageMismatchError(f"forward has {fwd.s} stages, adjoint has {adj.s}")
    scale = max(1.0, fwd.magnitude(), adj.magnitude())
    out = [("B", i, None, float(abs(fwd.b[i] - adj.b[i]) / scale)) for i in range(fwd.s)]
    out += _pair_residuals("A", fwd.b, adj.a, adj.b, fwd.a, scale)
    return ConditionReport(tuple(out), scale)


def check_gprk_conditions(fwd: PartitionedTableau, adj: GprkTableau) -> ConditionReport:
    if fwd.s != adj.s:
        raise StageMismatchError(f"forward has {fwd.s} stages, GPRK has {adj.s}")
    scale = max(1.0, fwd.magnitude(), adj.magnitude())
    parts = {"1": fwd.first, "2": fwd.second}
    out = []
    # Weight conditions: B^{p1} = b^{(1)} and B^{p2} = b^{(2)}.
    for blk in GPRK_BLOCKS:
        b_src = parts[blk[1]].b
        B = adj.weights(blk)
        out += [("B" + blk, i, None, float(abs(b_src[i] - B[i]) / scale)) for i in range(adj.s)]
    # Matrix conditions pair block pq with the forward tableau of partition p.
    for blk in GPRK_BLOCKS:
        fw = parts[blk[0]]
        out += _pair_residuals("A" + blk, fw.b, adj.matrix(blk), adj.weights(blk), fw.a, scale)
    return ConditionReport(tuple(out), scale)


def check_symplecticity_conditions(t: PartitionedTableau) -> ConditionReport:
    """Residuals of ``b1 = b2`` (family ``"weights"``) and of the coupling
    condition ``b1_i a2_ij + b2_j a1_ji = b1_i b2_j`` (family ``"symplectic"``).

    Separable Hamiltonian systems only need the second family.
    """
    scale = max(1.0, t.magnitude())
    b1, b2 = t.first.b, t.second.b
    out = [("weights", i, None, float(abs(b1[i] - b2[i]) / scale)) for i in range(t.s)]
    out += _pair_residuals("symplectic", b1, t.second.a, b2, t.first.a, scale)
    return ConditionReport(tuple(out), scale)


def is_reducible_to_prk(g: GprkTableau, tol: float = 0.0) -> bool:
    """True iff ``B11 = B12``, ``B21 = B22``, ``A11 = A12`` and ``A21 = A22`` within ``tol``."""
    pairs = [("B11", "B12"), ("B21", "B22"), ("A11", "A12"), ("A21", "A22")]
    return all(
        np.all(np.abs(getattr(g, p) - getattr(g, q)) <= tol) for p, q in pairs
    )


def reduce_to_prk(g: GprkTableau, tol: float = 0.0) -> PartitionedTableau:
    """Collapse a reducible GPRK tableau to the equivalent PRK pair."""
    if not is_reducible_to_prk(g, tol):
        raise ValueError("GPRK tableau does not reduce to a PRK method")
    return PartitionedTableau(
        ButcherTableau(g.A11, g.B11), ButcherTableau(g.A22, g.B22), name=g.name
    )


# ---------------------------------------------------------------------------
# File format

def _parse_number(x) -> float:
    if isinstance(x, bool):
        raise TableauParseError(f"boolean is not a coefficient: {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise TableauParseError(f"cannot parse coefficient {x!r}") from exc
    raise TableauParseError(f"unsupported coefficient type: {x!r}")


def _parse_vector(x, key) -> list[float]:
    if not isinstance(x, list):
        raise TableauParseError(f"{key!r} must be a list")
    return [_parse_number(v) for v in x]


def _parse_matrix(x, key) -> list[list[float]]:
    if not isinstance(x, list) or not all(isinstance(r, list) for r in x):
        raise TableauParseError(f"{key!r} must be a list of rows")
    return [[_parse_number(v) for v in row] for row in x]


def _butcher_from_dict(d: dict, name: str = "") -> ButcherTableau:
    try:
        a = _parse_matrix(d["a"], "a")
        b = _parse_vector(d["b"], "b")
    except KeyError as exc:
        raise TableauParseError(f"missing key {exc.args[0]!r}") from None
    if "s" in d and int(d["s"]) != len(b):
        raise TableauParseError(f"declared s={d['s']} but b has {len(b)} entries")
    try:
        return ButcherTableau(a, b, name=d.get("name", name))
    except ValueError as exc:
        raise TableauParseError(str(exc)) from exc


def tableau_from_dict(d: dict) -> AnyTableau:
    if not isinstance(d, dict):
        raise TableauParseError("tableau document must be an object")
    if "first" in d or "second" in d:
        try:
            return PartitionedTableau(
                _butcher_from_dict(d["first"]), _butcher_from_dict(d["second"]),
                name=d.get("name", ""),
            )
        except KeyError as exc:
            raise TableauParseError(f"missing key {exc.args[0]!r}") from None
    if "B11" in d:
        kw = {}
        try:
            for blk in GPRK_BLOCKS:
                kw["B" + blk] = _parse_vector(d["B" + blk], "B" + blk)
                kw["A" + blk] = _parse_matrix(d["A" + blk], "A" + blk)
            return GprkTableau(**kw, name=d.get("name", ""))
        except KeyError as exc:
            raise TableauParseError(f"missing key {exc.args[0]!r}") from None
        except (ValueError, StageMismatchError) as exc:
            raise TableauParseError(str(exc)) from exc
    return _butcher_from_dict(d)


def tableau_to_dict(t: AnyTableau) -> dict:
    if isinstance(t, ButcherTableau):
        d = {"s": t.s, "a": t.a.tolist(), "b": t.b.tolist()}
    elif isinstance(t, PartitionedTableau):
        d = {"first": tableau_to_dict(t.first), "second": tableau_to_dict(t.second)}
    elif isinstance(t, GprkTableau):
        d = {"s": t.s}
        for blk in GPRK_BLOCKS:
            d["B" + blk] = t.weights(blk).tolist()
        for blk in GPRK_BLOCKS:
            d["A" + blk] = t.matrix(blk).tolist()
    else:
        raise TypeError(f"not a tableau: {t!r}")
    if t.name:
        d["name"] = t.name
    return d


def load_tableau(path: Union[str, Path]) -> AnyTableau:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TableauParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TableauParseError(f"{path}: invalid JSON ({exc})") from exc
    return tableau_from_dict(doc)


def save_tableau(t: AnyTableau, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(tableau_to_dict(t), indent=2) + "\n")
