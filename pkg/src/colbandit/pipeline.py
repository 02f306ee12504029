"""Two-stage retrieval: exact per-token kNN, then bounded reranking.

Stage 1 scans every corpus token once per query token and keeps the top
``k_prime`` matches (exact, no index). Each matched document becomes a
candidate, and the scan's byproducts become per-cell upper bounds for
Stage 2: the exact row maximum for (document, token) pairs surfaced by the
scan, the k'-th neighbor similarity for everything else. Lower bounds come
from the similarity's support floor, so candidate cells start unrevealed
with intervals that are already informative.

The per-document score blocks here are computed by the same routine the
reveal oracle uses, so a bound recorded as "exact" matches a later reveal
bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import CellBounds
from .oracle import DocTokens, QueryTokens, Similarity

__all__ = [
    "TokenNeighbor",
    "TokenNeighborList",
    "CandidateSet",
    "generate_candidates",
    "derive_bounds",
    "save_candidates",
    "load_candidates",
]

CANDIDATES_FORMAT = "colbandit-candidates-v1"


@dataclass(frozen=True)
class TokenNeighbor:
    """One corpus token matched to a query token."""

    doc_id: str
    doc_index: int
    token_index: int
    similarity: float


@dataclass(frozen=True)
class TokenNeighborList:
    """Top matches for one query token, similarity non-increasing."""

    token: int
    neighbors: tuple[TokenNeighbor, ...]

    def __post_init__(self) -> None:
        sims = [nb.similarity for nb in self.neighbors]
        if any(a < b for a, b in zip(sims, sims[1:])):
            raise ValueError(f"token {self.token}: neighbor similarities must be non-increasing")

    @property
    def kth_similarity(self) -> float:
        """Similarity of the last kept neighbor; cells outside the list score at most this."""
        return self.neighbors[-1].similarity


@dataclass(frozen=True)
class CandidateSet:
    """Documents surfaced by Stage 1, in corpus order.

    ``exact_cells`` maps (candidate row, query token) to the document's exact
    row maximum for every pair the scan surfaced.
    """

    doc_ids: tuple[str, ...]
    doc_indices: tuple[int, ...]
    exact_cells: dict[tuple[int, int], float]

    def __post_init__(self) -> None:
        if len(self.doc_ids) != len(self.doc_indices):
            raise ValueError("doc_ids and doc_indices must align")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("candidate doc_ids must be distinct")

    def __len__(self) -> int:
        return len(self.doc_ids)


def generate_candidates(
    query: QueryTokens,
    corpus: list[DocTokens],
    similarity: Similarity,
    k_prime: int,
) -> tuple[CandidateSet, list[TokenNeighborList]]:
    """Run the Stage-1 scan: exact top-``k_prime`` corpus tokens per query token.

    Returns the candidate documents (the union of match owners, corpus order)
    and one neighbor list per query token. Ties at equal similarity keep the
    earlier corpus token.
    """
    if not corpus:
        raise ValueError("corpus must contain at least one document")
    if k_prime < 1:
        raise ValueError(f"k_prime must be at least 1, got {k_prime}")

    n_tokens = query.vectors.shape[0]
    owners: list[tuple[int, int]] = []
    blocks: list[np.ndarray] = []
    doc_row_max: list[np.ndarray] = []
    for di, doc in enumerate(corpus):
        scores = similarity.token_scores(doc.vectors, query.vectors)
        blocks.append(scores)
        doc_row_max.append(scores.max(axis=0))
        owners.extend((di, j) for j in range(scores.shape[0]))

    all_scores = np.concatenate(blocks, axis=0)
    total = all_scores.shape[0]
    keep = min(k_prime, total)
    tiebreak = np.arange(total)

    neighbor_lists: list[TokenNeighborList] = []
    hit_docs: set[int] = set()
    hit_pairs: set[tuple[int, int]] = set()
    for t in range(n_tokens):
        order = np.lexsort((tiebreak, -all_scores[:, t]))[:keep]
        nbs = []
        for g in order:
            di, j = owners[g]
            nbs.append(TokenNeighbor(corpus[di].doc_id, di, j, float(all_scores[g, t])))
            hit_docs.add(di)
            hit_pairs.add((di, t))
        neighbor_lists.append(TokenNeighborList(t, tuple(nbs)))

    kept_docs = sorted(hit_docs)
    row_of = {di: r for r, di in enumerate(kept_docs)}
    exact_cells = {
        (row_of[di], t): float(doc_row_max[di][t]) for di, t in sorted(hit_pairs)
    }
    candidates = CandidateSet(
        doc_ids=tuple(corpus[di].doc_id for di in kept_docs),
        doc_indices=tuple(kept_docs),
        exact_cells=exact_cells,
    )
    return candidates, neighbor_lists


def derive_bounds(
    candidates: CandidateSet,
    neighbor_lists: list[TokenNeighborList],
    similarity: Similarity,
) -> CellBounds:
    """Turn Stage-1 byproducts into per-cell bounds over the candidate matrix.

    Every cell's floor is the similarity's support floor (zero when negative
    similarities are clamped). The ceiling is the exact row maximum where
    Stage 1 surfaced the pair, else the k'-th neighbor similarity for that
    token: any token outside the kept list scores no higher.
    """
    n = len(candidates)
    n_tokens = len(neighbor_lists)
    if n == 0 or n_tokens == 0:
        raise ValueError("need at least one candidate and one query token")
    lo = np.full((n, n_tokens), similarity.range_lo, dtype=np.float64)
    hi = np.empty((n, n_tokens), dtype=np.float64)
    for t, nl in enumerate(neighbor_lists):
        hi[:, t] = nl.kth_similarity
    for (r, t), h in candidates.exact_cells.items():
        hi[r, t] = h
    np.maximum(hi, lo, out=hi)
    return CellBounds(lo, hi)


def save_candidates(
    path: str | Path,
    candidates: CandidateSet,
    neighbor_lists: list[TokenNeighborList],
    bounds: CellBounds,
    *,
    k_prime: int,
    similarity: Similarity,
    query_path: str | None = None,
    manifest_path: str | None = None,
) -> None:
    """Write the Stage-1 artifact as deterministic JSON.

    Source paths, when given, let a later soundness check recompute exact
    scores from the original embeddings.
    """
    payload = {
        "format": CANDIDATES_FORMAT,
        "k_prime": k_prime,
        "n_candidates": len(candidates),
        "n_query_tokens": len(neighbor_lists),
        "doc_ids": list(candidates.doc_ids),
        "doc_indices": list(candidates.doc_indices),
        "kth_sim": [nl.kth_similarity for nl in neighbor_lists],
        "exact_pairs": sorted([r, t] for (r, t) in candidates.exact_cells),
        "lo": float(bounds.lo[0, 0]),
        "hi": [[float(v) for v in row] for row in bounds.hi],
        "similarity": {
            "kind": similarity.kind,
            "range": [similarity.range_lo, similarity.range_hi],
            "clamp_negative": similarity.clamp_negative,
        },
        "query_path": query_path,
        "manifest_path": manifest_path,
    }
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(target)


def load_candidates(path: str | Path) -> dict:
    """Read a Stage-1 artifact back as a validated dict."""
    p = Path(path)
    payload = json.loads(p.read_text())
    if not isinstance(payload, dict) or payload.get("format") != CANDIDATES_FORMAT:
        raise ValueError(f"{p}: not a candidate artifact (format field mismatch)")
    required = ("k_prime", "doc_ids", "doc_indices", "kth_sim", "exact_pairs", "lo", "hi", "similarity")
    missing = [key for key in required if key not in payload]
    if missing:
        raise ValueError(f"{p}: candidate artifact missing fields {missing}")
    n, t = len(payload["doc_ids"]), len(payload["kth_sim"])
    hi = payload["hi"]
    if len(hi) != n or any(len(row) != t for row in hi):
        raise ValueError(f"{p}: hi bounds shape does not match {n} docs x {t} tokens")
    return payload
