"""Dense two-phase simplex with Bland's rule.

Solves  min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.
The instances here have at most a few hundred columns, so a full tableau
with numpy row operations is plenty.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalFailure

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-11
FEASIBILITY_TOLERANCE = 1e-9
DEFAULT_MAX_ITER = 50_000


@dataclass
class LinearProgramResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class SimplexTableau:
    """Canonical-form tableau: basis columns of ``A`` form an identity."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int], max_iter: int):
        self.A = A
        self.b = b
        self.basis = basis
        self.max_iter = max_iter
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        self.b[row] /= self.A[row, col]
        self.A[row] /= self.A[row, col]
        for i in range(self.A.shape[0]):
            if i != row and self.A[i, col] != 0.0:
                factor = self.A[i, col]
                self.A[i] -= factor * self.A[row]
                self.b[i] -= factor * self.b[row]
        self.A[row, col] = 1.0
        self.basis[row] = col

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.A

    def bland_step(self, cost: np.ndarray, allowed: np.ndarray) -> str:
        reduced = self.reduced_costs(cost)
        candidates = np.flatnonzero(allowed & (reduced < -PIVOT_TOLERANCE))
        if candidates.size == 0:
            return "optimal"
        col = int(candidates[0])
        column = self.A[:, col]
        rows = np.flatnonzero(column > PIVOT_TOLERANCE)
        if rows.size == 0:
            return "unbounded"
        ratios = np.maximum(self.b[rows], 0.0) / column[rows]
        best = ratios.min()
        # Ties go to the smallest basic variable index.
        tied = rows[ratios <= best + PIVOT_TOLERANCE * max(1.0, abs(best))]
        row = int(min(tied, key=lambda i: self.basis[i]))
        self.pivot(row, col)
        return "continue"

    def optimize(self, cost: np.ndarray, allowed: np.ndarray) -> str:
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"Simplex did not terminate after {self.iterations} pivots")
            self.iterations += 1
            status = self.bland_step(cost, allowed)
            if status != "continue":
                return status

    def pivot_out_artificials(self, artificial: np.ndarray) -> None:
        """Drive zero-level artificials out of the basis, dropping redundant rows."""
        row = 0
        while row < len(self.basis):
            if not artificial[self.basis[row]]:
                row += 1
                continue
            candidates = np.flatnonzero(~artificial & (np.abs(self.A[row]) > PIVOT_TOLERANCE))
            if candidates.size:
                self.pivot(row, int(candidates[0]))
                row += 1
            else:
                self.A = np.delete(self.A, row, axis=0)
                self.b = np.delete(self.b, row)
                del self.basis[row]

    def solution(self, num_vars: int) -> np.ndarray:
        x = np.zeros(self.A.shape[1])
        x[self.basis] = self.b
        return x[:num_vars]


def solve_lp(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LinearProgramResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # Column layout: originals | one slack/surplus per inequality | artificials.
    flip_ub = b_ub < 0
    needs_artificial = np.concatenate([flip_ub, np.ones(m_eq, dtype=bool)])
    num_artificial = int(needs_artificial.sum())
    width = n + m_ub + num_artificial
    A = np.zeros((m, width))
    b = np.zeros(m)
    A[:m_ub, :n] = A_ub
    A[:m_ub, n : n + m_ub] = np.eye(m_ub)
    b[:m_ub] = b_ub
    A[m_ub:, :n] = A_eq
    b[m_ub:] = b_eq
    # Rows with a negative right-hand side are negated so b >= 0.
    negative = b < 0
    A[negative] *= -1.0
    b[negative] *= -1.0

    basis: list[int] = []
    artificial = np.zeros(width, dtype=bool)
    next_artificial = n + m_ub
    for i in range(m):
        if needs_artificial[i]:
            A[i, next_artificial] = 1.0
            artificial[next_artificial] = True
            basis.append(next_artificial)
            next_artificial += 1
        else:
            basis.append(n + i)

    tableau = SimplexTableau(A, b, basis, max_iter)
    if num_artificial:
        phase_one = artificial.astype(float)
        tableau.optimize(phase_one, np.ones(width, dtype=bool))
        infeasibility = float(phase_one[tableau.basis] @ tableau.b)
        if infeasibility > FEASIBILITY_TOLERANCE:
            logger.debug("Phase one ended with infeasibility %.3g", infeasibility)
            return LinearProgramResult("infeasible", None, None, tableau.iterations)
        tableau.pivot_out_artificials(artificial)

    cost = np.zeros(width)
    cost[:n] = c
    status = tableau.optimize(cost, ~artificial)
    if status == "unbounded":
        return LinearProgramResult("unbounded", None, None, tableau.iterations)
    x = tableau.solution(n)
    return LinearProgramResult("optimal", x, float(c @ x), tableau.iterations)
