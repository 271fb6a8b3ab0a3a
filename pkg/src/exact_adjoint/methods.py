"""Built-in method registry.

Coefficients are given as exact fractions and rounded once to doubles.
"""

from __future__ import annotations

from fractions import Fraction as F
from typing import Union

from .errors import UnknownMethodError
from .tableau import ButcherTableau, PartitionedTableau


def _bt(a, b, name="") -> ButcherTableau:
    return ButcherTableau([[float(x) for x in row] for row in a], [float(x) for x in b], name=name)


def explicit_euler() -> ButcherTableau:
    return _bt([[0]], [1], "euler")


def implicit_midpoint() -> ButcherTableau:
    return _bt([[F(1, 2)]], [1], "midpoint")


def rk4() -> ButcherTableau:
    h = F(1, 2)
    return _bt(
        [[0, 0, 0, 0], [h, 0, 0, 0], [0, h, 0, 0], [0, 0, 1, 0]],
        [F(1, 6), F(1, 3), F(1, 3), F(1, 6)],
        "rk4",
    )


def symplectic_euler() -> PartitionedTableau:
    # first partition explicit, second implicit
    return PartitionedTableau(_bt([[0]], [1]), _bt([[1]], [1]), name="sympeuler")


def stormer_verlet() -> PartitionedTableau:
    """Lobatto IIIA (2 stages) on the first partition, IIIB on the second."""
    h = F(1, 2)
    return PartitionedTableau(
        _bt([[0, 0], [h, h]], [h, h]),
        _bt([[h, 0], [h, 0]], [h, h]),
        name="stormer-verlet",
    )


def lobatto_iiia_iiib3() -> PartitionedTableau:
    b = [F(1, 6), F(2, 3), F(1, 6)]
    iiia = [[0, 0, 0], [F(5, 24), F(1, 3), F(-1, 24)], [F(1, 6), F(2, 3), F(1, 6)]]
    iiib = [[F(1, 6), F(-1, 6), 0], [F(1, 6), F(1, 3), 0], [F(1, 6), F(5, 6), 0]]
    return PartitionedTableau(_bt(iiia, b), _bt(iiib, b), name="lobatto3")


def kick_drift_prk(drift, kick, name="") -> PartitionedTableau:
    """Write a kick-drift splitting method as a PRK pair.

    Stage ``i`` kicks the second partition with weight ``kick[i]`` and then
    drifts the first partition with weight ``drift[i]``. The pair satisfies
    the symplecticity coupling condition for any weights, so it is
    symplectic on separable Hamiltonians even when ``drift != kick``.
    """
    s = len(drift)
    a1 = [[drift[j] if j < i else 0 for j in range(s)] for i in range(s)]
    a2 = [[kick[j] if j <= i else 0 for j in range(s)] for i in range(s)]
    return PartitionedTableau(_bt(a1, drift), _bt(a2, kick), name=name)


def ruth3() -> PartitionedTableau:
    """Ruth's third-order symplectic splitting; distinct weights per partition."""
    return kick_drift_prk(
        drift=[F(-1, 24), F(3, 4), F(7, 24)],
        kick=[F(1), F(-2, 3), F(2, 3)],
        name="ruth3",
    )


def sprk_embedded() -> PartitionedTableau:
    """Shared stage matrix (Kutta's third-order method), distinct weights.

    First partition: Kutta's order-3 weights. Second partition: an order-2
    weight set on the same stages. All weights are nonzero.
    """
    a = [[0, 0, 0], [F(1, 2), 0, 0], [-1, 2, 0]]
    return PartitionedTableau(
        _bt(a, [F(1, 6), F(2, 3), F(1, 6)]),
        _bt(a, [F(1, 4), F(1, 2), F(1, 4)]),
        name="sprk-embedded",
    )


_REGISTRY = {
    "euler": (explicit_euler, 1),
    "midpoint": (implicit_midpoint, 2),
    "rk4": (rk4, 4),
    "sympeuler": (symplectic_euler, 1),
    "stormer-verlet": (stormer_verlet, 2),
    "lobatto3": (lobatto_iiia_iiib3, 4),
    "sprk-embedded": (sprk_embedded, 2),
    "ruth3": (ruth3, 3),
}

METHOD_NAMES = tuple(_REGISTRY)
RK_METHODS = ("euler", "midpoint", "rk4")
PRK_METHODS = ("sympeuler", "stormer-verlet", "lobatto3", "sprk-embedded", "ruth3")


def get_method(name: str) -> Union[ButcherTableau, PartitionedTableau]:
    try:
        factory, _ = _REGISTRY[name]
    except KeyError:
        raise UnknownMethodError(name, METHOD_NAMES) from None
    return factory()


def classical_order(name: str) -> int:
    try:
        return _REGISTRY[name][1]
    except KeyError:
        raise UnknownMethodError(name, METHOD_NAMES) from None
