"""Oracle and ledger behavior: free evaluation, charged reveals, statistics."""

import math

import numpy as np
import pytest

from colbandit.bounds import RowStats
from colbandit.oracle import (
    DocTokens,
    MaxSimOracle,
    ObservationLedger,
    QueryTokens,
    Similarity,
    reveal,
)

HALF_SQRT2 = math.sqrt(2.0) / 2.0  # 0.7071067811865476


def small_token_oracle():
    query = QueryTokens(np.array([[1.0, 0.0], [0.0, 1.0]]))
    docs = [
        DocTokens("a", np.array([[HALF_SQRT2, HALF_SQRT2], [0.0, 1.0]])),
        DocTokens("b", np.array([[1.0, 0.0]])),
    ]
    return MaxSimOracle(query, docs)


def test_maxsim_takes_the_best_doc_token():
    oracle = small_token_oracle()
    assert oracle.maxsim(0, 0) == 0.7071067811865476
    assert oracle.maxsim(0, 1) == 1.0
    assert oracle.maxsim(1, 0) == 1.0
    assert oracle.maxsim(1, 1) == 0.0


def test_maxsim_is_repeatable_and_free():
    oracle = small_token_oracle()
    first = oracle.maxsim(0, 0)
    assert oracle.maxsim(0, 0) == first
    oracle.full_score(0)
    oracle.exact_topk(2)
    assert oracle.reveal_count == 0


def test_full_score_is_the_exact_row_sum():
    oracle = small_token_oracle()
    assert oracle.full_score(0) == math.fsum([HALF_SQRT2, 1.0])
    assert oracle.full_score(1) == 1.0


def test_exact_topk_breaks_ties_toward_the_lower_index():
    oracle = MaxSimOracle.from_matrix(
        [[1.0, 1.0], [2.0, 0.0], [0.0, 2.0]], value_range=(0.0, 2.0)
    )
    assert oracle.exact_topk(0) == []
    assert oracle.exact_topk(2) == [0, 1]
    assert oracle.exact_topk(3) == [0, 1, 2]
    with pytest.raises(ValueError, match="k must be in"):
        oracle.exact_topk(4)


def test_exact_topk_matches_a_brute_force_sort():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n, t = int(rng.integers(1, 12)), int(rng.integers(1, 9))
        matrix = rng.uniform(-1.0, 1.0, size=(n, t))
        oracle = MaxSimOracle.from_matrix(matrix)
        sums = [math.fsum(row.tolist()) for row in matrix]
        k = int(rng.integers(0, n + 1))
        expected = sorted(range(n), key=lambda i: (-sums[i], i))[:k]
        assert oracle.exact_topk(k) == expected


def test_matrix_backed_oracle_returns_stored_cells():
    matrix = np.array([[0.125, 0.25], [0.5, 0.75]])
    oracle = MaxSimOracle.from_matrix(matrix, value_range=(0.0, 1.0))
    assert oracle.n_docs == 2
    assert oracle.n_query_tokens == 2
    assert oracle.value_range == (0.0, 1.0)
    assert oracle.doc_ids is None
    for i in range(2):
        for t in range(2):
            assert oracle.maxsim(i, t) == matrix[i, t]


def test_from_matrix_rejects_bad_input():
    with pytest.raises(ValueError, match="2-D"):
        MaxSimOracle.from_matrix([1.0, 2.0])
    with pytest.raises(ValueError, match="non-finite"):
        MaxSimOracle.from_matrix([[0.1, float("nan")]])
    with pytest.raises(ValueError, match="escape the declared range"):
        MaxSimOracle.from_matrix([[1.5]], value_range=(0.0, 1.0))
    with pytest.raises(ValueError, match="invalid value range"):
        MaxSimOracle.from_matrix([[0.5]], value_range=(1.0, 0.0))


def test_from_matrix_allows_storage_rounding_at_the_edges():
    # a float32 round trip can overshoot the declared range by one ulp
    MaxSimOracle.from_matrix([[1.0 + 1e-10, 0.0]], value_range=(0.0, 1.0))


def test_cosine_oracle_requires_unit_norms():
    query = QueryTokens(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError, match="norm"):
        MaxSimOracle(query, [DocTokens("a", np.array([[1.0, 1.0]]))])
    # the same vectors pass under a dot-product similarity
    sim = Similarity(kind="dot", range_lo=-2.0, range_hi=2.0)
    oracle = MaxSimOracle(query, [DocTokens("a", np.array([[1.0, 1.0]]))], sim)
    assert oracle.maxsim(0, 0) == 1.0


def test_oracle_rejects_dimension_mismatch_and_empty_corpus():
    query = QueryTokens(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError, match="at least one document"):
        MaxSimOracle(query, [])
    with pytest.raises(ValueError, match="does not match query dim"):
        MaxSimOracle(query, [DocTokens("a", np.array([[1.0, 0.0, 0.0]]))])


def test_doc_ids_come_back_in_corpus_order():
    query = QueryTokens(np.array([[1.0, 0.0]]))
    docs = [DocTokens("z", np.array([[1.0, 0.0]])), DocTokens("a", np.array([[0.0, 1.0]]))]
    assert MaxSimOracle(query, docs).doc_ids == ["z", "a"]


def test_similarity_clamp_raises_the_range_floor():
    sim = Similarity(kind="dot", range_lo=-1.0, range_hi=1.0, clamp_negative=True)
    assert sim.range_lo == 0.0
    scores = sim.token_scores(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0], [1.0, 0.0]]))
    assert scores.tolist() == [[0.0, 1.0]]


def test_similarity_validation():
    with pytest.raises(ValueError, match="similarity kind"):
        Similarity(kind="euclidean")
    with pytest.raises(ValueError, match="range_lo must be below range_hi"):
        Similarity(kind="dot", range_lo=1.0, range_hi=1.0)


def test_reveal_charges_and_records():
    oracle = MaxSimOracle.from_matrix([[0.125, 0.25], [0.375, 0.5]], value_range=(0.0, 1.0))
    ledger = ObservationLedger(2, 2)
    value = reveal(ledger, oracle, 0, 1)
    assert value == 0.25
    assert oracle.reveal_count == 1
    assert ledger.observed_count == 1
    assert ledger.coverage() == 0.25
    assert ledger.is_observed(0, 1)
    assert not ledger.is_observed(0, 0)
    assert ledger.trace == [(0, 1, 0.25)]
    assert ledger.observed_cols(0) == [1]
    assert ledger.unobserved_cols(0) == [0]
    assert ledger.row_count(0) == 1
    assert ledger.row_count(1) == 0


def test_revealing_the_same_cell_twice_is_an_error():
    oracle = MaxSimOracle.from_matrix([[0.1, 0.2]], value_range=(0.0, 1.0))
    ledger = ObservationLedger(1, 2)
    reveal(ledger, oracle, 0, 0)
    with pytest.raises(ValueError, match="already revealed"):
        reveal(ledger, oracle, 0, 0)
    assert oracle.reveal_count == 1


def test_reveal_requires_matching_shapes():
    oracle = MaxSimOracle.from_matrix([[0.1, 0.2]], value_range=(0.0, 1.0))
    with pytest.raises(ValueError, match="shapes differ"):
        reveal(ObservationLedger(2, 2), oracle, 0, 0)


def test_row_values_keep_reveal_order():
    oracle = MaxSimOracle.from_matrix([[0.1, 0.2, 0.3, 0.4]], value_range=(0.0, 1.0))
    ledger = ObservationLedger(1, 4)
    for t in (3, 0, 2):
        reveal(ledger, oracle, 0, t)
    assert ledger.row_values(0) == [0.4, 0.1, 0.3]
    assert ledger.observed_cols(0) == [0, 2, 3]
    assert ledger.unobserved_cols(0) == [1]


def test_ledger_statistics_match_the_two_pass_reference():
    rng = np.random.default_rng(11)
    matrix = rng.uniform(-1.0, 1.0, size=(6, 8))
    oracle = MaxSimOracle.from_matrix(matrix)
    ledger = ObservationLedger(6, 8)
    cells = [(i, t) for i in range(6) for t in range(8)]
    rng.shuffle(cells)
    for i, t in cells[:37]:
        reveal(ledger, oracle, i, t)
    for i in range(6):
        stats = ledger.row_stats(i)
        ref = RowStats.from_values(ledger.row_values(i))
        assert stats.n == ref.n
        assert stats.total == ref.total  # both exactly rounded sums
        if stats.n:
            assert math.isclose(stats.mean, ref.mean, rel_tol=1e-12)
            assert math.isclose(stats.m2, ref.m2, rel_tol=1e-9, abs_tol=1e-12)


def test_ledger_rejects_degenerate_shapes():
    with pytest.raises(ValueError, match="shape must be positive"):
        ObservationLedger(0, 4)
    ledger = ObservationLedger(2, 2)
    with pytest.raises(IndexError, match="row"):
        ledger.row_count(2)
    with pytest.raises(IndexError, match="column"):
        ledger.is_observed(0, 5)


def test_token_and_matrix_views_agree():
    # the matrix materialized from a token oracle must reproduce its cells
    rng = np.random.default_rng(3)
    query_raw = rng.standard_normal((3, 4))
    query = QueryTokens(query_raw / np.linalg.norm(query_raw, axis=1, keepdims=True))
    docs = []
    for d in range(4):
        raw = rng.standard_normal((5, 4))
        docs.append(DocTokens(f"d{d}", raw / np.linalg.norm(raw, axis=1, keepdims=True)))
    token_oracle = MaxSimOracle(query, docs)
    matrix = np.array([[token_oracle.maxsim(i, t) for t in range(3)] for i in range(4)])
    matrix_oracle = MaxSimOracle.from_matrix(matrix)
    for i in range(4):
        assert matrix_oracle.full_score(i) == token_oracle.full_score(i)
    assert matrix_oracle.exact_topk(2) == token_oracle.exact_topk(2)
