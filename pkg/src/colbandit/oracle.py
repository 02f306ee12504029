"""MaxSim evaluation over token embeddings, with per-cell reveal accounting.

The interaction matrix ``H[i, t] = max_j sim(doc_i_token_j, query_token_t)``
is never materialized up front. An oracle evaluates cells on demand; an
observation ledger records which cells a strategy has paid for. Revealing a
cell is the unit of cost, so coverage (revealed fraction of ``N * T``) is the
compute metric every method is measured by.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bounds import RowStats
from .validation import check_index, check_token_matrix, check_unit_norm

__all__ = [
    "Similarity",
    "QueryTokens",
    "DocTokens",
    "MaxSimOracle",
    "ObservationLedger",
    "reveal",
]

SIMILARITY_KINDS = ("cosine", "dot")


@dataclass(frozen=True)
class Similarity:
    """Similarity selector plus the value range it guarantees.

    ``cosine`` assumes pre-normalized vectors (validated at oracle
    construction) and defaults to the range (-1, 1). ``dot`` trusts the
    caller-provided range. With ``clamp_negative`` scores are floored at
    zero, which makes a zero lower bound on every cell sound; the effective
    range floor is raised accordingly.
    """

    kind: str = "cosine"
    range_lo: float = -1.0
    range_hi: float = 1.0
    clamp_negative: bool = False

    def __post_init__(self) -> None:
        if self.kind not in SIMILARITY_KINDS:
            raise ValueError(f"similarity kind must be one of {SIMILARITY_KINDS}, got {self.kind!r}")
        if not self.range_lo < self.range_hi:
            raise ValueError(f"range_lo must be below range_hi, got ({self.range_lo}, {self.range_hi})")
        if self.clamp_negative and self.range_lo < 0.0:
            object.__setattr__(self, "range_lo", 0.0)

    def token_scores(self, doc_vectors: np.ndarray, query_vectors: np.ndarray) -> np.ndarray:
        """Score every (doc token, query token) pair; shape (L_d, T).

        This is the single code path for similarity arithmetic. The Stage-1
        scanner and the oracle both call it, so ANN-derived upper bounds and
        later cell reveals are computed with bit-identical arithmetic.
        """
        scores = doc_vectors @ query_vectors.T
        if self.clamp_negative:
            np.maximum(scores, 0.0, out=scores)
        return scores


@dataclass(frozen=True, eq=False)
class QueryTokens:
    """Token embeddings of one query, shape (T, M), float64."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", check_token_matrix(self.vectors, "query vectors"))

    @property
    def n_tokens(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class DocTokens:
    """Token embeddings of one document, shape (L_d, M), float64."""

    doc_id: str
    vectors: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", check_token_matrix(self.vectors, f"doc {self.doc_id!r} vectors"))

    @property
    def n_tokens(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


class MaxSimOracle:
    """Pure, lazily evaluated view of the interaction matrix.

    ``maxsim`` and ``full_score`` never touch a ledger and carry no cost;
    they exist so tests and ground-truth references can inspect the matrix
    freely. Charged evaluation happens only through :func:`reveal`, which is
    what increments ``reveal_count``.

    Cell values are cached per row, so repeated evaluation of the same cell
    always returns the same float.
    """

    def __init__(
        self,
        query: QueryTokens,
        docs: Sequence[DocTokens],
        similarity: Similarity = Similarity(),
    ):
        if len(docs) == 0:
            raise ValueError("oracle needs at least one document")
        for d in docs:
            if d.dim != query.dim:
                raise ValueError(
                    f"doc {d.doc_id!r} embedding dim {d.dim} does not match query dim {query.dim}"
                )
        if similarity.kind == "cosine":
            check_unit_norm(query.vectors, "query vectors")
            for d in docs:
                check_unit_norm(d.vectors, f"doc {d.doc_id!r} vectors")
        self._query = query
        self._docs = list(docs)
        self._similarity = similarity
        self._matrix: np.ndarray | None = None
        self._rows: dict[int, np.ndarray] = {}
        self._scores: list[float] | None = None
        self._reveal_count = 0
        self._n_rows = len(docs)
        self._n_cols = query.n_tokens

    @classmethod
    def from_matrix(cls, matrix, value_range: tuple[float, float] = (-1.0, 1.0)) -> "MaxSimOracle":
        """Wrap a fully precomputed interaction matrix.

        Used by synthetic experiments and the matrix file format. Values must
        lie inside ``value_range`` (a hair of slack absorbs float32 storage
        rounding at the edges).
        """
        arr = np.asarray(matrix, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"matrix must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix contains non-finite values")
        lo, hi = float(value_range[0]), float(value_range[1])
        if not lo < hi:
            raise ValueError(f"invalid value range ({lo}, {hi})")
        slack = 1e-9 * max(1.0, abs(lo), abs(hi))
        if arr.min() < lo - slack or arr.max() > hi + slack:
            raise ValueError(
                f"matrix values [{arr.min()}, {arr.max()}] escape the declared range ({lo}, {hi})"
            )
        self = object.__new__(cls)
        self._query = None
        self._docs = None
        self._similarity = Similarity(kind="dot", range_lo=lo, range_hi=hi)
        self._matrix = np.ascontiguousarray(arr)
        self._rows = {}
        self._scores = None
        self._reveal_count = 0
        self._n_rows, self._n_cols = arr.shape
        return self

    @property
    def n_docs(self) -> int:
        return self._n_rows

    @property
    def n_query_tokens(self) -> int:
        return self._n_cols

    @property
    def similarity(self) -> Similarity:
        return self._similarity

    @property
    def value_range(self) -> tuple[float, float]:
        return (self._similarity.range_lo, self._similarity.range_hi)

    @property
    def reveal_count(self) -> int:
        """Number of distinct cells ever charged through :func:`reveal`."""
        return self._reveal_count

    @property
    def doc_ids(self) -> list[str] | None:
        if self._docs is None:
            return None
        return [d.doc_id for d in self._docs]

    def row_values(self, i: int) -> np.ndarray:
        """All T cell values of row ``i`` (free, cached)."""
        check_index(i, self._n_rows, "row")
        if self._matrix is not None:
            return self._matrix[i]
        row = self._rows.get(i)
        if row is None:
            scores = self._similarity.token_scores(self._docs[i].vectors, self._query.vectors)
            row = scores.max(axis=0)
            self._rows[i] = row
        return row

    def maxsim(self, i: int, t: int) -> float:
        """Value of cell (i, t); pure and free of charge."""
        check_index(t, self._n_cols, "column")
        return float(self.row_values(i)[t])

    def full_score(self, i: int) -> float:
        """Exactly rounded sum of row ``i``; the brute-force reference."""
        if self._scores is None:
            self._scores = [math.fsum(self.row_values(r).tolist()) for r in range(self._n_rows)]
        check_index(i, self._n_rows, "row")
        return self._scores[i]

    def exact_topk(self, k: int) -> list[int]:
        """Ground-truth Top-K rows by full score, ties to the lower index."""
        if not 0 <= k <= self._n_rows:
            raise ValueError(f"k must be in [0, {self._n_rows}], got {k}")
        scores = np.array([self.full_score(i) for i in range(self._n_rows)])
        order = np.lexsort((np.arange(self._n_rows), -scores))
        return [int(i) for i in order[:k]]

    def _charge(self, i: int, t: int) -> float:
        value = self.maxsim(i, t)
        self._reveal_count += 1
        return value


class ObservationLedger:
    """Record of which cells have been revealed, with per-row statistics.

    Keeps, per row: the revealed columns and values, a Welford running mean
    and squared-deviation sum for the variance estimate, and the global
    ordered reveal trace. The ledger is append-only; cells cannot be
    un-revealed, and revealing the same cell twice is a usage error.
    """

    def __init__(self, n_rows: int, n_cols: int):
        if n_rows <= 0 or n_cols <= 0:
            raise ValueError(f"ledger shape must be positive, got ({n_rows}, {n_cols})")
        self.n_rows = n_rows
        self.n_cols = n_cols
        self._mask = bytearray(n_rows * n_cols)
        self._counts = [0] * n_rows
        self._means = [0.0] * n_rows
        self._m2 = [0.0] * n_rows
        self._row_cols: list[list[int]] = [[] for _ in range(n_rows)]
        self._row_vals: list[list[float]] = [[] for _ in range(n_rows)]
        self.trace: list[tuple[int, int, float]] = []

    @property
    def observed_count(self) -> int:
        return len(self.trace)

    def coverage(self) -> float:
        """Revealed fraction of the matrix, in [0, 1]."""
        return len(self.trace) / (self.n_rows * self.n_cols)

    def is_observed(self, i: int, t: int) -> bool:
        check_index(i, self.n_rows, "row")
        check_index(t, self.n_cols, "column")
        return bool(self._mask[i * self.n_cols + t])

    def row_count(self, i: int) -> int:
        check_index(i, self.n_rows, "row")
        return self._counts[i]

    def observed_cols(self, i: int) -> list[int]:
        """Revealed columns of row ``i``, ascending."""
        check_index(i, self.n_rows, "row")
        return sorted(self._row_cols[i])

    def unobserved_cols(self, i: int) -> list[int]:
        """Unrevealed columns of row ``i``, ascending."""
        check_index(i, self.n_rows, "row")
        base = i * self.n_cols
        mask = self._mask
        return [t for t in range(self.n_cols) if not mask[base + t]]

    def row_values(self, i: int) -> list[float]:
        """Values revealed in row ``i``, in reveal order."""
        check_index(i, self.n_rows, "row")
        return list(self._row_vals[i])

    def row_stats(self, i: int) -> RowStats:
        check_index(i, self.n_rows, "row")
        return RowStats(
            self._counts[i], math.fsum(self._row_vals[i]), self._means[i], self._m2[i]
        )

    def _record(self, i: int, t: int, value: float) -> None:
        self._mask[i * self.n_cols + t] = 1
        n = self._counts[i] + 1
        self._counts[i] = n
        delta = value - self._means[i]
        self._means[i] += delta / n
        self._m2[i] += delta * (value - self._means[i])
        self._row_cols[i].append(t)
        self._row_vals[i].append(value)
        self.trace.append((i, t, value))


def reveal(ledger: ObservationLedger, oracle: MaxSimOracle, i: int, t: int) -> float:
    """Pay for cell (i, t): charge the oracle and record the observation.

    The only mutation path into the ledger. Raises ValueError on a repeat
    reveal, so ``oracle.reveal_count`` counts distinct cells.
    """
    if (ledger.n_rows, ledger.n_cols) != (oracle.n_docs, oracle.n_query_tokens):
        raise ValueError("ledger and oracle shapes differ")
    if ledger.is_observed(i, t):
        raise ValueError(f"cell ({i}, {t}) already revealed")
    value = oracle._charge(i, t)
    ledger._record(i, t, value)
    return value
