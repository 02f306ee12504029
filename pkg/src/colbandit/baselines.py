"""Static reveal strategies: fixed per-row budgets and the full rerank.

Both budgeted baselines charge exactly ``N * ceil(gamma * T)`` reveals and
rank rows by the sum of their revealed cells (ties to the lower index).
They differ only in which cells they buy: Doc-Uniform samples uniformly,
Doc-TopMargin takes the cells with the widest support bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bandit import RunResult, ceil_cells
from .bounds import CellBounds
from .oracle import MaxSimOracle, ObservationLedger, reveal

__all__ = ["BudgetConfig", "doc_uniform", "doc_top_margin", "full_rerank"]


@dataclass(frozen=True)
class BudgetConfig:
    """Per-row budget as a coverage fraction; B = ceil(gamma * T) cells."""

    gamma: float
    seed: int | tuple[int, ...] | None = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")

    def cells_per_row(self, n_cols: int) -> int:
        return ceil_cells(self.gamma, n_cols)


def _ranked_by_partial_sum(ledger: ObservationLedger, k: int) -> list[int]:
    sums = [math.fsum(ledger.row_values(i)) for i in range(ledger.n_rows)]
    order = sorted(range(ledger.n_rows), key=lambda i: (-sums[i], i))
    return order[:k]


def _check_k(k: int, n_rows: int) -> None:
    if not 0 <= k <= n_rows:
        raise ValueError(f"k must be in [0, {n_rows}], got {k}")


def doc_uniform(
    oracle: MaxSimOracle,
    k: int,
    gamma: float,
    seed: int | tuple[int, ...] | None = 0,
) -> RunResult:
    """Reveal B uniformly random cells per row, rank by the partial sums."""
    budget = BudgetConfig(gamma, seed)
    n_rows, n_cols = oracle.n_docs, oracle.n_query_tokens
    _check_k(k, n_rows)
    b = budget.cells_per_row(n_cols)
    rng = np.random.default_rng(seed)
    ledger = ObservationLedger(n_rows, n_cols)
    for i in range(n_rows):
        for t in rng.choice(n_cols, size=b, replace=False):
            reveal(ledger, oracle, i, int(t))
    return RunResult(_ranked_by_partial_sum(ledger, k), ledger.coverage(), ledger.trace, 0, "budget")


def doc_top_margin(oracle: MaxSimOracle, bounds: CellBounds, k: int, gamma: float) -> RunResult:
    """Reveal the B widest-bound cells per row, rank by the partial sums.

    Width ties go to the lower column index, so the strategy is fully
    deterministic.
    """
    BudgetConfig(gamma)  # validates gamma
    n_rows, n_cols = oracle.n_docs, oracle.n_query_tokens
    if (bounds.n_rows, bounds.n_cols) != (n_rows, n_cols):
        raise ValueError("bounds shape does not match the matrix shape")
    _check_k(k, n_rows)
    b = ceil_cells(gamma, n_cols)
    ledger = ObservationLedger(n_rows, n_cols)
    cols = np.arange(n_cols)
    for i in range(n_rows):
        order = np.lexsort((cols, -(bounds.hi[i] - bounds.lo[i])))
        for t in order[:b]:
            reveal(ledger, oracle, i, int(t))
    return RunResult(_ranked_by_partial_sum(ledger, k), ledger.coverage(), ledger.trace, 0, "budget")


def full_rerank(oracle: MaxSimOracle, k: int) -> RunResult:
    """Reveal every cell; the exact (and most expensive) reference method."""
    n_rows, n_cols = oracle.n_docs, oracle.n_query_tokens
    _check_k(k, n_rows)
    ledger = ObservationLedger(n_rows, n_cols)
    for i in range(n_rows):
        for t in range(n_cols):
            reveal(ledger, oracle, i, t)
    return RunResult(_ranked_by_partial_sum(ledger, k), 1.0, ledger.trace, 0, "budget")
