"""
単体上の数値積分則

三角形・四面体上の固定次数の積分則を重心座標で提供します。
重みは要素体積に対する割合で、合計は1です。
"""
from dataclasses import dataclass
from typing import Dict, Tuple
import logging

import numpy as np

from visco_tumour.utils.errors import FieldError

# ロガーの設定
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureRule:
    """重心座標で表した積分則"""
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def num_points(self) -> int:
        return int(self.weights.shape[0])


def _orbit_21(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[a, a, b], [a, b, a], [b, a, a]])


def _orbit_31(a: float) -> np.ndarray:
    b = 1.0 - 3.0 * a
    return np.array([[b, a, a, a], [a, b, a, a], [a, a, b, a], [a, a, a, b]])


def _triangle_rules() -> Dict[int, QuadratureRule]:
    rules = {}
    rules[1] = QuadratureRule(np.full((1, 3), 1.0 / 3.0), np.ones(1), 1)
    rules[2] = QuadratureRule(
        np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]),
        np.full(3, 1.0 / 3.0),
        2,
    )
    rules[4] = QuadratureRule(
        np.vstack([_orbit_21(0.445948490915965), _orbit_21(0.091576213509771)]),
        np.concatenate([np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)]),
        4,
    )
    rules[5] = QuadratureRule(
        np.vstack([
            np.full((1, 3), 1.0 / 3.0),
            _orbit_21(0.470142064105115),
            _orbit_21(0.101286507323456),
        ]),
        np.concatenate([[0.225], np.full(3, 0.132394152788506), np.full(3, 0.125939180544827)]),
        5,
    )
    return rules


def _tetrahedron_rules() -> Dict[int, QuadratureRule]:
    rules = {}
    rules[1] = QuadratureRule(np.full((1, 4), 0.25), np.ones(1), 1)
    rules[2] = QuadratureRule(_orbit_31(0.1381966011250105), np.full(4, 0.25), 2)
    rules[3] = QuadratureRule(
        np.vstack([np.full((1, 4), 0.25), _orbit_31(1.0 / 6.0)]),
        np.concatenate([[-0.8], np.full(4, 0.45)]),
        3,
    )
    return rules


_RULES: Dict[int, Dict[int, QuadratureRule]] = {2: _triangle_rules(), 3: _tetrahedron_rules()}


def quadrature_rule(dim: int, degree: int) -> QuadratureRule:
    """
    指定次数の多項式を厳密に積分する最小の規則を返します。

    Args:
        dim: 空間次元 (2 または 3)
        degree: 要求する厳密次数

    Returns:
        積分則

    Raises:
        FieldError: 対応する規則が存在しない場合
    """
    rules = _RULES.get(dim)
    if rules is None:
        raise FieldError(f"No quadrature rules for dimension {dim}")
    for available in sorted(rules):
        if available >= degree:
            return rules[available]
    raise FieldError(
        f"No quadrature rule of degree {degree} in dimension {dim}",
        {"available": sorted(rules)},
    )


def gauss_legendre_facet(num_points: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    区間[0, 1]上のGauss-Legendre則 (パラメータ, 重み) を返します。
    """
    nodes, weights = np.polynomial.legendre.leggauss(num_points)
    return 0.5 * (nodes + 1.0), 0.5 * weights
