"""Ranking metrics and the sweep harness.

The metric fixture table freezes hand-computed values; the log2 discounted
gains behind the nDCG entries are 1/log2(3) = 0.6309297535714575 for rank 2
and 1/log2(4) = 0.5 for rank 3.
"""

import csv
import math

import numpy as np
import pytest

from colbandit.bandit import BanditConfig
from colbandit.bounds import CellBounds
from colbandit.evaluation import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_GAMMA_GRID,
    FRONTIER_COLUMNS,
    EvalInstance,
    aggregate_frontier,
    coverage_required,
    instance_seed,
    mrr_at_k,
    ndcg_at_k,
    overlap_at_k,
    read_qrels,
    recall_at_k,
    score_result,
    sweep_alpha,
    sweep_budgets,
    write_frontier_csv,
)
from colbandit.oracle import MaxSimOracle

# (ranked, relevant, k, recall, mrr, ndcg)
METRIC_TABLE = [
    (["a", "b", "c"], {"a"}, 3, 1.0, 1.0, 1.0),
    (["a", "b", "c"], {"b"}, 3, 1.0, 0.5, 0.6309297535714575),
    (["a", "b", "c"], {"c"}, 3, 1.0, 1 / 3, 0.5),
    (["a", "b", "c"], {"z"}, 3, 0.0, 0.0, 0.0),
    (["a", "b", "c", "d"], {"a", "c"}, 4, 1.0, 1.0, 0.9197207891481876),
    (["a", "b", "c", "d"], {"d"}, 2, 0.0, 0.0, 0.0),
    (["a", "b"], {"a", "b", "c"}, 2, 2 / 3, 1.0, 1.0),
    (["x", "a"], {"a"}, 2, 1.0, 0.5, 0.6309297535714575),
    (["a"], {"a"}, 1, 1.0, 1.0, 1.0),
    (["b", "a", "c", "d", "e"], {"a", "e"}, 5, 1.0, 0.5, 0.6240505200038379),
]


@pytest.mark.parametrize("ranked,relevant,k,want_recall,want_mrr,want_ndcg", METRIC_TABLE)
def test_metric_fixture_table(ranked, relevant, k, want_recall, want_mrr, want_ndcg):
    assert recall_at_k(ranked, relevant, k) == pytest.approx(want_recall, abs=1e-9)
    assert mrr_at_k(ranked, relevant, k) == pytest.approx(want_mrr, abs=1e-9)
    assert ndcg_at_k(ranked, relevant, k) == pytest.approx(want_ndcg, abs=1e-9)


def test_metrics_reject_degenerate_arguments():
    for metric in (recall_at_k, mrr_at_k, ndcg_at_k):
        with pytest.raises(ValueError, match="k must be at least 1"):
            metric(["a"], {"a"}, 0)
        with pytest.raises(ValueError, match="skip the query"):
            metric(["a"], set(), 1)


def test_overlap_at_k():
    assert overlap_at_k([1, 2, 3], [1, 2, 4], 3) == pytest.approx(2 / 3, abs=1e-12)
    assert overlap_at_k([1, 2], [3, 4], 2) == 0.0
    assert overlap_at_k([5, 6], [6, 5], 2) == 1.0
    # symmetric in its arguments
    assert overlap_at_k([1, 2, 3], [1, 2, 4], 3) == overlap_at_k([1, 2, 4], [1, 2, 3], 3)
    with pytest.raises(ValueError, match="exactly k"):
        overlap_at_k([1, 2], [1, 2, 3], 3)


def test_read_qrels(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text(
        "q1 0 docA 1\n"
        "q1 0 docB 0\n"
        "q1 0 docC 2\n"
        "\n"
        "q2 0 docA 0\n"
    )
    qrels = read_qrels(path)
    assert qrels == {"q1": {"docA", "docC"}, "q2": set()}


def test_read_qrels_rejects_malformed_lines(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 docA\n")
    with pytest.raises(ValueError, match="expected 4 fields"):
        read_qrels(path)
    path.write_text("q1 0 docA high\n")
    with pytest.raises(ValueError, match="relevance must be an integer"):
        read_qrels(path)


def test_instance_seed_extends_without_collisions():
    assert instance_seed(None, 3) is None
    assert instance_seed(7, 3) == (7, 3)
    assert instance_seed((7, 1), 3) == (7, 1, 3)
    seeds = {instance_seed(0, i) for i in range(100)}
    assert len(seeds) == 100


def ladder_instance(seed, n=10, t=8, k_gap=0.08):
    rng = np.random.default_rng(seed)
    base = np.linspace(0.9, 0.9 - k_gap * (n - 1), n)[:, None]
    matrix = np.clip(base + rng.normal(0.0, 0.01, size=(n, t)), 0.0, 1.0)
    oracle = MaxSimOracle.from_matrix(matrix, value_range=(0.0, 1.0))
    bounds = CellBounds.uniform(n, t, 0.0, 1.0)
    return EvalInstance(oracle=oracle, bounds=bounds, query_id=f"q{seed}")


def test_eval_instance_doc_ids_and_exact_sets():
    inst = ladder_instance(0)
    assert inst.doc_id(3) == "doc0003"
    assert inst.exact_topk_ids(2) == tuple(
        f"doc{i:04d}" for i in inst.oracle.exact_topk(2)
    )
    override = EvalInstance(
        oracle=inst.oracle, bounds=inst.bounds, exact_ids=("docA", "docB")
    )
    assert override.exact_topk_ids(2) == ("docA", "docB")
    with pytest.raises(ValueError, match="expected k"):
        override.exact_topk_ids(3)


def test_score_result_with_and_without_labels():
    inst = ladder_instance(1)
    exact_rows = inst.oracle.exact_topk(3)
    overlap, rec, ndcg, mrr = score_result(inst, exact_rows, 3)
    assert overlap == 1.0
    assert rec is None and ndcg is None and mrr is None

    labeled = EvalInstance(
        oracle=inst.oracle, bounds=inst.bounds,
        relevant=frozenset({inst.doc_id(exact_rows[0])}),
    )
    overlap, rec, ndcg, mrr = score_result(labeled, exact_rows, 3)
    assert overlap == 1.0
    assert rec == 1.0
    assert mrr == 1.0
    assert ndcg == 1.0


def test_aggregate_frontier_mixes_labeled_and_unlabeled_queries():
    point = aggregate_frontier(
        "bandit", 0.5,
        [(0.2, 1.0, None, None, None), (0.4, 0.5, 1.0, 0.8, 0.6)],
    )
    assert point.method == "bandit"
    assert point.param == 0.5
    assert point.mean_coverage == pytest.approx(0.3)
    assert point.std_coverage == pytest.approx(0.1)
    assert point.overlap_at_k == pytest.approx(0.75)
    # label metrics average over the single labeled query only
    assert point.recall_at_k == 1.0
    assert point.ndcg_at_k == 0.8
    assert point.mrr_at_k == 0.6
    assert point.n_queries == 2

    unlabeled = aggregate_frontier("bandit", 0.5, [(0.2, 1.0, None, None, None)])
    assert unlabeled.recall_at_k is None


def test_sweep_alpha_produces_one_point_per_grid_value():
    instances = [ladder_instance(s) for s in range(3)]
    grid = [0.05, 0.3, 1.0]
    points = sweep_alpha(instances, k=3, template=BanditConfig(k=3, seed=0), grid=grid)
    assert [p.param for p in points] == grid
    assert all(p.n_queries == 3 for p in points)
    assert all(p.method == "bandit" for p in points)
    assert all(0.0 <= p.mean_coverage <= 1.0 for p in points)
    # identical call, identical numbers
    again = sweep_alpha(instances, k=3, template=BanditConfig(k=3, seed=0), grid=grid)
    assert points == again


def test_sweep_budgets_produces_two_methods_per_gamma():
    instances = [ladder_instance(s) for s in range(2)]
    points = sweep_budgets(instances, k=3, grid=[0.25, 0.5], seed=0)
    assert [(p.method, p.param) for p in points] == [
        ("doc-uniform", 0.25), ("doc-top-margin", 0.25),
        ("doc-uniform", 0.5), ("doc-top-margin", 0.5),
    ]
    for p in points:
        assert p.mean_coverage == pytest.approx(p.param)


def test_sweeps_reject_empty_grids():
    instances = [ladder_instance(0)]
    with pytest.raises(ValueError, match="alpha grid"):
        sweep_alpha(instances, k=1, grid=[])
    with pytest.raises(ValueError, match="gamma grid"):
        sweep_budgets(instances, k=1, grid=[])


def test_default_grids_are_sensible():
    assert len(DEFAULT_ALPHA_GRID) == 16
    assert DEFAULT_ALPHA_GRID[0] == pytest.approx(1e-3)
    assert DEFAULT_ALPHA_GRID[-1] == 1.0
    assert all(a < b for a, b in zip(DEFAULT_ALPHA_GRID, DEFAULT_ALPHA_GRID[1:]))
    assert DEFAULT_GAMMA_GRID[0] == 0.05
    assert DEFAULT_GAMMA_GRID[-1] == 1.0
    assert len(DEFAULT_GAMMA_GRID) == 20


def test_coverage_required_picks_the_cheapest_qualifying_point():
    def mk(cov, ov, param):
        return aggregate_frontier("bandit", param, [(cov, ov, None, None, None)])

    points = [mk(0.5, 1.0, 1.0), mk(0.2, 0.96, 0.3), mk(0.1, 0.8, 0.05)]
    best = coverage_required(points, 0.95)
    assert (best.mean_coverage, best.param) == (0.2, 0.3)
    assert coverage_required(points, 0.99) is not None
    assert coverage_required([mk(0.1, 0.5, 0.05)], 0.95) is None


def test_frontier_csv_round_trip(tmp_path):
    instances = [ladder_instance(s) for s in range(2)]
    points = sweep_budgets(instances, k=2, grid=[0.5], seed=1)
    path = tmp_path / "frontier.csv"
    write_frontier_csv(path, points)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(FRONTIER_COLUMNS)
    assert len(rows) == 3
    parsed = float(rows[1][2])
    assert parsed == points[0].mean_coverage  # repr round-trips exactly
    # unlabeled queries leave the label metric cells empty
    assert rows[1][5] == rows[1][6] == rows[1][7] == ""
    write_frontier_csv(tmp_path / "again.csv", points)
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
