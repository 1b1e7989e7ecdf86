"""Block-wise L1,2 norms and their proximal maps.

Row groups drive feature selection (the U component), column groups drive
lag selection (the V component).  The column variants are transpose wraps
of the row variants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def row_norms(M) -> np.ndarray:
    """Euclidean norm of each row."""
    return np.sqrt(np.sum(np.asarray(M, dtype=float) ** 2, axis=1))


def norm_12_rows(M) -> float:
    """Sum of the l2 norms of the rows of ``M``."""
    return float(np.sum(row_norms(M)))


def norm_12_cols(M) -> float:
    """Sum of the l2 norms of the columns of ``M``."""
    return norm_12_rows(np.asarray(M).T)


def prox_row_groups(P, theta: float) -> np.ndarray:
    """Row-wise shrink-or-kill map.

    Exact minimizer of ``0.5*||M - P||_F^2 + theta*||M||_{1,2}``: each row
    is scaled by ``max(0, 1 - theta/||p_row||)``.  Rows at or below the
    threshold become exactly zero (the 0/0 scale for zero rows is 0), so
    support extraction downstream needs no epsilon.
    """
    if theta < 0.0:
        raise ValueError("threshold must be nonnegative")
    P = np.asarray(P, dtype=float)
    norms = row_norms(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > theta, 1.0 - theta / norms, 0.0)
    return scale[:, None] * P


def prox_col_groups(P, theta: float) -> np.ndarray:
    """Column-wise variant of :func:`prox_row_groups`."""
    return prox_row_groups(np.asarray(P).T, theta).T


@dataclass(frozen=True)
class CoefficientPair:
    """The decomposed coefficient matrices U (rows) and V (columns)."""

    U: np.ndarray
    V: np.ndarray
    lam1: float = 0.0
    lam2: float = 0.0

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if U.shape != V.shape:
            raise ValueError("U and V must have the same shape")
        if self.lam1 < 0.0 or self.lam2 < 0.0:
            raise ValueError("penalty weights must be nonnegative")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def W(self) -> np.ndarray:
        return self.U + self.V

    def penalty_value(self) -> float:
        return self.lam1 * norm_12_rows(self.U) + self.lam2 * norm_12_cols(self.V)
