"""Adaptive late-interaction reranking with per-cell reveal budgets.

The package identifies the Top-K documents of a token-interaction scoring
model while revealing as few interaction cells as possible: each document's
score is bracketed by deterministic hard bounds plus a variance-adaptive
confidence radius, and a bandit loop reveals cells only where the current
winner/loser frontier is still ambiguous.
"""

from .bandit import BanditConfig, RunResult, run
from .baselines import BudgetConfig, doc_top_margin, doc_uniform, full_rerank
from .bounds import (
    CellBounds,
    DecisionState,
    RadiusConfig,
    RowStats,
    compute_decision_state,
    decision_interval,
    effective_radius,
    empirical_std,
    estimated_score,
    fp_correction,
    hard_bounds,
    score_proxy,
)
from .evaluation import (
    EvalInstance,
    FrontierPoint,
    coverage_required,
    mrr_at_k,
    ndcg_at_k,
    overlap_at_k,
    read_qrels,
    recall_at_k,
    sweep_alpha,
    sweep_budgets,
    write_frontier_csv,
)
from .oracle import (
    DocTokens,
    MaxSimOracle,
    ObservationLedger,
    QueryTokens,
    Similarity,
    reveal,
)
from .pipeline import CandidateSet, TokenNeighbor, TokenNeighborList, derive_bounds, generate_candidates
from .reranker import ColBanditReranker, RerankOutcome
from .synth import SynthSpec, gen_embeddings, gen_matrix

__version__ = "0.1.0"

__all__ = [
    "BanditConfig",
    "RunResult",
    "run",
    "BudgetConfig",
    "doc_uniform",
    "doc_top_margin",
    "full_rerank",
    "CellBounds",
    "DecisionState",
    "RadiusConfig",
    "RowStats",
    "compute_decision_state",
    "decision_interval",
    "effective_radius",
    "empirical_std",
    "estimated_score",
    "fp_correction",
    "hard_bounds",
    "score_proxy",
    "EvalInstance",
    "FrontierPoint",
    "coverage_required",
    "overlap_at_k",
    "recall_at_k",
    "ndcg_at_k",
    "mrr_at_k",
    "read_qrels",
    "sweep_alpha",
    "sweep_budgets",
    "write_frontier_csv",
    "DocTokens",
    "MaxSimOracle",
    "ObservationLedger",
    "QueryTokens",
    "Similarity",
    "reveal",
    "CandidateSet",
    "TokenNeighbor",
    "TokenNeighborList",
    "generate_candidates",
    "derive_bounds",
    "ColBanditReranker",
    "RerankOutcome",
    "SynthSpec",
    "gen_matrix",
    "gen_embeddings",
    "__version__",
]
