"""Ranking-fidelity metrics and the cost-accuracy sweep harness.

Fidelity against the exact Top-K is measured by set overlap; retrieval
effectiveness against relevance labels uses binary Recall, MRR, and nDCG
(log2 discount, ideal normalization). Sweeps rerun a method over a grid of
its cost knob (the radius relaxation for the adaptive method, the coverage
budget for the static ones) and aggregate each grid point into one frontier
row: mean and spread of coverage plus mean fidelity over the instance set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bandit import BanditConfig, run
from .baselines import doc_top_margin, doc_uniform
from .bounds import CellBounds
from .oracle import MaxSimOracle

__all__ = [
    "overlap_at_k",
    "recall_at_k",
    "mrr_at_k",
    "ndcg_at_k",
    "read_qrels",
    "EvalInstance",
    "FrontierPoint",
    "aggregate_frontier",
    "score_result",
    "instance_seed",
    "DEFAULT_ALPHA_GRID",
    "DEFAULT_GAMMA_GRID",
    "sweep_alpha",
    "sweep_budgets",
    "coverage_required",
    "write_frontier_csv",
    "FRONTIER_COLUMNS",
]

DEFAULT_ALPHA_GRID: tuple[float, ...] = tuple(float(a) for a in np.logspace(-3.0, 0.0, 16))
DEFAULT_GAMMA_GRID: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(1, 21))

FRONTIER_COLUMNS = (
    "method",
    "param",
    "mean_coverage",
    "std_coverage",
    "overlap@K",
    "recall@K",
    "ndcg@K",
    "mrr@K",
    "n_queries",
)


def overlap_at_k(approx: Iterable, exact: Iterable, k: int) -> float:
    """Fraction of the exact Top-K recovered: |approx ∩ exact| / k."""
    a, e = set(approx), set(exact)
    if len(a) != k or len(e) != k:
        raise ValueError(f"both sets must have exactly k={k} members, got {len(a)} and {len(e)}")
    return len(a & e) / k


def recall_at_k(ranked: Sequence, relevant: Iterable, k: int) -> float:
    rel = set(relevant)
    _check_metric_args(rel, k)
    return len(rel.intersection(ranked[:k])) / len(rel)


def mrr_at_k(ranked: Sequence, relevant: Iterable, k: int) -> float:
    rel = set(relevant)
    _check_metric_args(rel, k)
    for pos, item in enumerate(ranked[:k], start=1):
        if item in rel:
            return 1.0 / pos
    return 0.0


def ndcg_at_k(ranked: Sequence, relevant: Iterable, k: int) -> float:
    """Binary-gain nDCG with log2 position discount and ideal normalization."""
    rel = set(relevant)
    _check_metric_args(rel, k)
    dcg = 0.0
    for pos, item in enumerate(ranked[:k], start=1):
        if item in rel:
            dcg += 1.0 / math.log2(pos + 1)
    ideal = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(k, len(rel)) + 1))
    return dcg / ideal


def _check_metric_args(relevant: set, k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if not relevant:
        raise ValueError("relevant set is empty; skip the query instead of scoring it")


def read_qrels(path: str | Path) -> dict[str, set[str]]:
    """Parse TREC-style relevance lines: ``query_id 0 doc_id relevance``.

    Positive relevance marks a document relevant; zero and negative lines are
    accepted and ignored, so queries whose labels are all non-positive come
    back with empty sets and can be skip-counted downstream.
    """
    out: dict[str, set[str]] = {}
    p = Path(path)
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{p}:{lineno}: expected 4 fields, got {len(parts)}")
        qid, _, doc_id, rel = parts
        try:
            grade = int(rel)
        except ValueError as exc:
            raise ValueError(f"{p}:{lineno}: relevance must be an integer, got {rel!r}") from exc
        out.setdefault(qid, set())
        if grade > 0:
            out[qid].add(doc_id)
    return out


@dataclass(frozen=True)
class EvalInstance:
    """One query's reranking problem plus its evaluation references.

    ``exact_ids`` overrides the ground-truth Top-K (as doc_ids) when the
    oracle covers only a candidate subset of a larger corpus; by default the
    exact set is computed from the oracle itself. ``relevant`` enables the
    label-based metrics when non-empty.
    """

    oracle: MaxSimOracle
    bounds: CellBounds
    query_id: str = "q0"
    exact_ids: tuple[str, ...] | None = None
    relevant: frozenset = frozenset()

    def doc_id(self, row: int) -> str:
        ids = self.oracle.doc_ids
        if ids is None:
            return f"doc{row:04d}"
        return ids[row]

    def exact_topk_ids(self, k: int) -> tuple[str, ...]:
        if self.exact_ids is not None:
            if len(self.exact_ids) != k:
                raise ValueError(
                    f"{self.query_id}: exact_ids has {len(self.exact_ids)} entries, expected k={k}"
                )
            return self.exact_ids
        return tuple(self.doc_id(i) for i in self.oracle.exact_topk(k))


@dataclass(frozen=True)
class FrontierPoint:
    """One aggregated operating point of a method at one knob setting."""

    method: str
    param: float
    mean_coverage: float
    std_coverage: float
    overlap_at_k: float
    recall_at_k: float | None
    ndcg_at_k: float | None
    mrr_at_k: float | None
    n_queries: int

    def row(self) -> list:
        def fmt(value: float | None) -> str:
            return "" if value is None else repr(value)

        return [
            self.method,
            repr(self.param),
            repr(self.mean_coverage),
            repr(self.std_coverage),
            repr(self.overlap_at_k),
            fmt(self.recall_at_k),
            fmt(self.ndcg_at_k),
            fmt(self.mrr_at_k),
            str(self.n_queries),
        ]


def _subset_overlap(approx_ids: Iterable[str], exact_ids: Iterable[str], k: int) -> float:
    # like overlap_at_k but tolerant of an approx set clipped below k by a
    # small candidate pool; the denominator stays k
    return len(set(approx_ids) & set(exact_ids)) / k


def aggregate_frontier(
    method: str,
    param: float,
    per_query: list[tuple[float, float, float | None, float | None, float | None]],
) -> FrontierPoint:
    """Collapse per-query (coverage, overlap, recall, ndcg, mrr) rows into one point.

    Label metrics aggregate over the labeled subset only; they come back None
    when no query carried labels.
    """
    coverages = np.array([c for c, *_ in per_query], dtype=np.float64)
    overlaps = [o for _, o, *_ in per_query]
    labeled = [(r, n, m) for *_ , r, n, m in per_query if r is not None]

    def mean_of(idx: int) -> float | None:
        if not labeled:
            return None
        return float(np.mean([row[idx] for row in labeled]))

    return FrontierPoint(
        method=method,
        param=float(param),
        mean_coverage=float(coverages.mean()),
        std_coverage=float(coverages.std()),
        overlap_at_k=float(np.mean(overlaps)),
        recall_at_k=mean_of(0),
        ndcg_at_k=mean_of(1),
        mrr_at_k=mean_of(2),
        n_queries=len(per_query),
    )


def score_result(inst: EvalInstance, topk_rows: Sequence[int], k: int):
    """Turn one run's Top-K rows into (overlap, recall, ndcg, mrr).

    The label metrics are None when the instance carries no relevance set.
    """
    ids = [inst.doc_id(i) for i in topk_rows]
    overlap = _subset_overlap(ids, inst.exact_topk_ids(k), k)
    if inst.relevant:
        return (
            overlap,
            recall_at_k(ids, inst.relevant, k),
            ndcg_at_k(ids, inst.relevant, k),
            mrr_at_k(ids, inst.relevant, k),
        )
    return overlap, None, None, None


def instance_seed(base, index: int):
    """Extend a base seed with an instance index, keeping None as None."""
    if base is None:
        return None
    if isinstance(base, tuple):
        return (*base, index)
    return (base, index)


def sweep_alpha(
    instances: Sequence[EvalInstance],
    k: int,
    template: BanditConfig | None = None,
    grid: Sequence[float] | None = None,
) -> list[FrontierPoint]:
    """Run the adaptive method at each radius relaxation in the grid.

    Each instance gets an independent seed derived from the template's, so
    points are reproducible and instances are decorrelated.
    """
    if template is None:
        template = BanditConfig(k=k)
    grid = tuple(DEFAULT_ALPHA_GRID if grid is None else grid)
    if not grid:
        raise ValueError("alpha grid must be non-empty")
    points = []
    for alpha in grid:
        per_query = []
        for idx, inst in enumerate(instances):
            cfg = replace(
                template, k=k, alpha_ef=float(alpha), seed=instance_seed(template.seed, idx)
            )
            result = run(inst.oracle, inst.bounds, cfg)
            overlap, rec, ndcg, mrr = score_result(inst, result.topk, k)
            per_query.append((result.coverage, overlap, rec, ndcg, mrr))
        points.append(aggregate_frontier("bandit", alpha, per_query))
    return points


def sweep_budgets(
    instances: Sequence[EvalInstance],
    k: int,
    grid: Sequence[float] | None = None,
    seed: int = 0,
) -> list[FrontierPoint]:
    """Run both static baselines at each coverage budget in the grid."""
    grid = tuple(DEFAULT_GAMMA_GRID if grid is None else grid)
    if not grid:
        raise ValueError("gamma grid must be non-empty")
    points = []
    for gamma in grid:
        uniform_rows = []
        margin_rows = []
        for idx, inst in enumerate(instances):
            res_u = doc_uniform(inst.oracle, k, gamma, seed=instance_seed(seed, idx))
            overlap, rec, ndcg, mrr = score_result(inst, res_u.topk, k)
            uniform_rows.append((res_u.coverage, overlap, rec, ndcg, mrr))
            res_m = doc_top_margin(inst.oracle, inst.bounds, k, gamma)
            overlap, rec, ndcg, mrr = score_result(inst, res_m.topk, k)
            margin_rows.append((res_m.coverage, overlap, rec, ndcg, mrr))
        points.append(aggregate_frontier("doc-uniform", gamma, uniform_rows))
        points.append(aggregate_frontier("doc-top-margin", gamma, margin_rows))
    return points


def coverage_required(points: Sequence[FrontierPoint], threshold: float) -> FrontierPoint | None:
    """Cheapest swept operating point whose mean overlap meets the threshold.

    No interpolation between grid points; returns None when no point
    qualifies.
    """
    qualifying = [p for p in points if p.overlap_at_k >= threshold]
    if not qualifying:
        return None
    return min(qualifying, key=lambda p: (p.mean_coverage, p.param))


def write_frontier_csv(path: str | Path, points: Sequence[FrontierPoint]) -> None:
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRONTIER_COLUMNS)
        for point in points:
            writer.writerow(point.row())
    tmp.replace(target)
