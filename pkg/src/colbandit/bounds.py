"""Score estimates and per-document confidence intervals.

Uncertainty about a document's total score is tracked two ways and the
decision interval intersects them:

* hard bounds: the sum of revealed cells plus per-cell support bounds for
  the unrevealed remainder; valid unconditionally, for any reveal order;
* a variance-adaptive radius for sampling without replacement that shrinks
  with the number of revealed cells and vanishes once a row is exhausted.

All scalar functions here are the reference semantics. The run loop in
:mod:`colbandit.bandit` maintains the same quantities incrementally and is
cross-checked against these functions in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .oracle import ObservationLedger

UNION_MODES = ("per-document", "per-document-and-size")

__all__ = [
    "RowStats",
    "RadiusConfig",
    "CellBounds",
    "DecisionState",
    "empirical_std",
    "estimated_score",
    "fp_correction",
    "effective_radius",
    "hard_bounds",
    "decision_interval",
    "compute_decision_state",
    "score_proxy",
]


@dataclass(frozen=True)
class RowStats:
    """Running statistics over the revealed cells of one row.

    ``total`` is the exactly rounded sum of revealed values; ``mean`` and
    ``m2`` are the Welford one-pass running mean and the sum of squared
    deviations, kept for the variance estimate.
    """

    n: int
    total: float
    mean: float
    m2: float

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "RowStats":
        """Two-pass construction from raw values; the test oracle for variance."""
        vals = [float(v) for v in values]
        n = len(vals)
        if n == 0:
            return cls(0, 0.0, 0.0, 0.0)
        total = math.fsum(vals)
        mean = total / n
        m2 = math.fsum((v - mean) ** 2 for v in vals)
        return cls(n, total, mean, m2)


def empirical_std(stats: RowStats) -> float:
    """Unbiased sample standard deviation of the revealed values.

    Undefined for fewer than two observations; callers fall back to the
    hard bounds in that regime.
    """
    if stats.n <= 1:
        raise ValueError(f"empirical_std undefined for n={stats.n}; need at least 2 observations")
    return math.sqrt(max(stats.m2, 0.0) / (stats.n - 1))


def estimated_score(stats: RowStats, n_cols: int) -> float:
    """Scale the mean of revealed cells up to a full-row score estimate.

    Returns ``n_cols * (total / n)``. With every cell revealed this is the
    exact row sum. Raises ValueError when nothing has been revealed; the
    caller substitutes the hard-bound midpoint as a ranking proxy.
    """
    if stats.n == 0:
        raise ValueError("estimated score undefined for an unobserved row")
    if stats.n == n_cols:
        return stats.total
    return n_cols * (stats.total / stats.n)


def fp_correction(n: int, n_cols: int) -> float:
    """Finite-population factor for sampling cells without replacement.

    Piecewise in the revealed count: ``1 - (n-1)/T`` up to half the row,
    then ``(1 - n/T) * (1 + 1/n)``. Equals 1 after a single reveal (no
    correction) and 0 at full coverage (no sampling uncertainty left).
    """
    n = int(n)
    if not 1 <= n <= n_cols:
        raise ValueError(f"fp_correction needs 1 <= n <= {n_cols}, got n={n}")
    if 2 * n <= n_cols:
        return 1.0 - (n - 1) / n_cols
    return (1.0 - n / n_cols) * (1.0 + 1.0 / n)


@dataclass(frozen=True)
class RadiusConfig:
    """Parameters of the statistical radius.

    ``alpha_ef`` rescales the conservative closed-form width; values below 1
    trade the worst-case guarantee for sharper early stopping. ``union_mode``
    selects how the failure budget ``delta`` is split: "per-document" uses a
    log(c*N/delta) term, "per-document-and-size" spends delta/(N*T) on every
    (row, sample-size) pair and uses log(c*N*T/delta).
    """

    alpha_ef: float = 1.0
    delta: float = 0.01
    c: float = 1.0
    union_mode: str = "per-document"

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha_ef <= 1.0:
            raise ValueError(f"alpha_ef must be in (0, 1], got {self.alpha_ef}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.c <= 0.0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.union_mode not in UNION_MODES:
            raise ValueError(f"union_mode must be one of {UNION_MODES}, got {self.union_mode!r}")

    def log_term(self, n_rows: int, n_cols: int) -> float:
        """Log factor of the radius; clamped at zero for degenerate configs."""
        arg = self.c * n_rows / self.delta
        if self.union_mode == "per-document-and-size":
            arg *= n_cols
        return max(math.log(arg), 0.0)


def effective_radius(stats: RowStats, n_cols: int, cfg: RadiusConfig, n_rows: int) -> float:
    """Half-width of the statistical interval around the estimated score.

    ``alpha_ef * T * sigma * sqrt(2 * log_term / n) * sqrt(rho_n)`` where
    sigma is the sample std and rho_n the finite-population factor. Infinite
    until two cells are revealed (variance unknown), zero at full coverage.
    """
    if stats.n <= 1:
        return math.inf
    sigma = empirical_std(stats)
    rho = fp_correction(stats.n, n_cols)
    log_term = cfg.log_term(n_rows, n_cols)
    return cfg.alpha_ef * n_cols * sigma * math.sqrt(2.0 * log_term / stats.n) * math.sqrt(rho)


class CellBounds:
    """Per-cell support bounds ``lo[i, t] <= H[i, t] <= hi[i, t]``."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise ValueError(f"bound arrays must share a 2-D shape, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bound arrays must be finite")
        if np.any(lo > hi):
            i, t = np.unravel_index(int(np.argmax(lo - hi)), lo.shape)
            raise ValueError(f"lo > hi at cell ({i}, {t}): {lo[i, t]} > {hi[i, t]}")
        self.lo = lo
        self.hi = hi

    @classmethod
    def uniform(cls, n_rows: int, n_cols: int, lo: float, hi: float) -> "CellBounds":
        """Generic bounds: the same support interval for every cell."""
        return cls(np.full((n_rows, n_cols), float(lo)), np.full((n_rows, n_cols), float(hi)))

    @property
    def n_rows(self) -> int:
        return self.lo.shape[0]

    @property
    def n_cols(self) -> int:
        return self.lo.shape[1]

    def widths(self, i: int) -> np.ndarray:
        return self.hi[i] - self.lo[i]


def hard_bounds(ledger: "ObservationLedger", bounds: CellBounds, i: int) -> tuple[float, float]:
    """Deterministic envelope on row ``i``'s full score.

    Revealed cells contribute their exact values, unrevealed cells their
    support bounds. Sums are exactly rounded (math.fsum), so the envelope
    is valid with zero tolerance and collapses to the exact score once the
    row is fully revealed.
    """
    if (ledger.n_rows, ledger.n_cols) != (bounds.n_rows, bounds.n_cols):
        raise ValueError("ledger and bounds shapes differ")
    observed_sum = math.fsum(ledger.row_values(i))
    rest = ledger.unobserved_cols(i)
    lo = observed_sum + math.fsum(float(bounds.lo[i, t]) for t in rest)
    hi = observed_sum + math.fsum(float(bounds.hi[i, t]) for t in rest)
    return lo, hi


def decision_interval(
    est_score: float | None, radius: float, hard_lo: float, hard_hi: float
) -> tuple[float, float]:
    """Intersect the statistical interval with the hard envelope.

    With no estimate (or an infinite radius) the hard envelope is returned
    unchanged. Both ends are clipped into [hard_lo, hard_hi]; clipping both
    ways keeps lcb <= ucb even when the scaled-up estimate extrapolates
    outside the envelope, which non-uniform upper bounds make possible.
    """
    if est_score is None or math.isinf(radius):
        return hard_lo, hard_hi
    lcb = min(max(hard_lo, est_score - radius), hard_hi)
    ucb = max(min(hard_hi, est_score + radius), hard_lo)
    return lcb, ucb


@dataclass(frozen=True)
class DecisionState:
    """Everything the selection rule needs to know about one row."""

    est_score: float | None
    hard_lo: float
    hard_hi: float
    radius: float
    lcb: float
    ucb: float

    @property
    def width(self) -> float:
        return self.ucb - self.lcb


def compute_decision_state(
    ledger: "ObservationLedger", bounds: CellBounds, i: int, radius_cfg: RadiusConfig
) -> DecisionState:
    """Assemble the decision state of row ``i`` from the ledger."""
    stats = ledger.row_stats(i)
    h_lo, h_hi = hard_bounds(ledger, bounds, i)
    if stats.n == 0:
        est: float | None = None
    else:
        est = estimated_score(stats, ledger.n_cols)
    radius = effective_radius(stats, ledger.n_cols, radius_cfg, ledger.n_rows)
    lcb, ucb = decision_interval(est, radius, h_lo, h_hi)
    return DecisionState(est, h_lo, h_hi, radius, lcb, ucb)


def score_proxy(state: DecisionState) -> float:
    """Ranking score: the estimate when defined, else the hard midpoint."""
    if state.est_score is None:
        return 0.5 * (state.hard_lo + state.hard_hi)
    return state.est_score
