"""Estimator-style facade over the two-stage adaptive reranker.

``fit`` ingests the corpus, ``rerank`` answers one query with full cost
accounting, and ``predict`` maps a batch of queries to their Top-K document
ids. Parameters follow scikit-learn conventions (constructor-only settings,
``random_state`` for seeding, fitted state on ``*_`` attributes), so the
object round-trips through ``get_params``/``set_params`` and ``clone``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .bandit import BanditConfig, RunResult, run
from .bounds import CellBounds
from .oracle import DocTokens, MaxSimOracle, QueryTokens, Similarity
from .pipeline import CandidateSet, derive_bounds, generate_candidates

__all__ = ["RerankOutcome", "ColBanditReranker"]


@dataclass(frozen=True)
class RerankOutcome:
    """One query's answer with its cost accounting.

    ``doc_ids`` are ordered best-first; ``coverage`` is the fraction of the
    candidate interaction matrix revealed; ``candidates`` records the Stage-1
    pool the adaptive stage ran over.
    """

    doc_ids: tuple[str, ...]
    doc_indices: tuple[int, ...]
    coverage: float
    reveals: int
    candidates: CandidateSet
    result: RunResult


class ColBanditReranker(BaseEstimator):
    """Adaptive Top-K reranker over token-level interactions.

    Stage 1 scans the fitted corpus once per query token (exact kNN,
    ``k_prime`` matches each) to form a candidate pool with per-cell score
    ceilings; Stage 2 reveals individual interaction cells until the Top-K
    of the pool is separated at the configured confidence.

    Parameters mirror the underlying run configuration; ``bounds_mode``
    selects the Stage-1 ceilings ("ann") or the plain similarity range
    ("generic"). When a query yields fewer than ``k`` candidates the result
    is the whole pool, best-first.
    """

    def __init__(
        self,
        k: int = 10,
        k_prime: int = 10,
        delta: float = 0.01,
        alpha_ef: float = 1.0,
        epsilon: float = 0.1,
        explore_mode: str = "epsilon-greedy",
        gamma_init: float = 0.0,
        c: float = 1.0,
        union_mode: str = "per-document",
        similarity: str = "cosine",
        clamp_negative: bool = True,
        bounds_mode: str = "ann",
        random_state: int = 0,
    ):
        self.k = k
        self.k_prime = k_prime
        self.delta = delta
        self.alpha_ef = alpha_ef
        self.epsilon = epsilon
        self.explore_mode = explore_mode
        self.gamma_init = gamma_init
        self.c = c
        self.union_mode = union_mode
        self.similarity = similarity
        self.clamp_negative = clamp_negative
        self.bounds_mode = bounds_mode
        self.random_state = random_state

    def fit(self, X, y=None):
        """Store the corpus: a list of DocTokens or of (count, dim) arrays."""
        if not X:
            raise ValueError("corpus must contain at least one document")
        docs = []
        for i, item in enumerate(X):
            if isinstance(item, DocTokens):
                docs.append(item)
            else:
                docs.append(DocTokens(f"doc{i:04d}", np.asarray(item, dtype=np.float64)))
        dims = {d.vectors.shape[1] for d in docs}
        if len(dims) != 1:
            raise ValueError(f"documents disagree on embedding dim: {sorted(dims)}")
        if self.bounds_mode not in ("ann", "generic"):
            raise ValueError(f"bounds_mode must be 'ann' or 'generic', got {self.bounds_mode!r}")
        self.docs_ = docs
        self.dim_ = dims.pop()
        self.similarity_ = Similarity(kind=self.similarity, clamp_negative=self.clamp_negative)
        return self

    def rerank(self, query, query_index: int = 0) -> RerankOutcome:
        """Answer one query (a QueryTokens or a (T, dim) array) in detail."""
        self._check_fitted()
        if not isinstance(query, QueryTokens):
            query = QueryTokens(np.asarray(query, dtype=np.float64))
        if query.vectors.shape[1] != self.dim_:
            raise ValueError(
                f"query dim {query.vectors.shape[1]} does not match corpus dim {self.dim_}"
            )
        candidates, neighbor_lists = generate_candidates(
            query, self.docs_, self.similarity_, self.k_prime
        )
        pool = [self.docs_[i] for i in candidates.doc_indices]
        oracle = MaxSimOracle(query, pool, self.similarity_)
        if self.bounds_mode == "ann":
            bounds = derive_bounds(candidates, neighbor_lists, self.similarity_)
        else:
            bounds = CellBounds.uniform(
                len(pool),
                query.vectors.shape[0],
                self.similarity_.range_lo,
                self.similarity_.range_hi,
            )
        k = min(self.k, len(pool))
        cfg = BanditConfig(
            k=k,
            delta=self.delta,
            alpha_ef=self.alpha_ef,
            epsilon=self.epsilon,
            explore_mode=self.explore_mode,
            gamma_init=self.gamma_init,
            c=self.c,
            union_mode=self.union_mode,
            seed=self._seed_for(query_index),
        )
        result = run(oracle, bounds, cfg)
        return RerankOutcome(
            doc_ids=tuple(candidates.doc_ids[i] for i in result.topk),
            doc_indices=tuple(candidates.doc_indices[i] for i in result.topk),
            coverage=result.coverage,
            reveals=len(result.reveals),
            candidates=candidates,
            result=result,
        )

    def predict(self, X) -> list[tuple[str, ...]]:
        """Top-K doc_ids, best-first, for each query in X."""
        self._check_fitted()
        return [self.rerank(q, query_index=i).doc_ids for i, q in enumerate(X)]

    def _seed_for(self, query_index: int):
        if self.random_state is None:
            return None
        return (self.random_state, query_index)

    def _check_fitted(self) -> None:
        if not hasattr(self, "docs_"):
            raise RuntimeError("this reranker is not fitted yet; call fit(corpus) first")
