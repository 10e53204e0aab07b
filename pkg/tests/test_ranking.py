import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flagrank import ranking
from flagrank.dataio import GroundTruth
from flagrank.errors import (
    DuplicateError,
    NumericError,
    PreconditionError,
    UndefinedMetricError,
)
from flagrank.ranking import ScoredProcess


def brute_ndcg(scored, attack_ids):
    """Independent direct evaluation used as the oracle for ndcg()."""
    order = sorted(scored, key=lambda sp: (-sp[1], sp[0]))
    rel = [1 if pid in attack_ids else 0 for pid, _ in order]
    m = sum(rel)
    actual = sum(r / math.log2(i + 2) for i, r in enumerate(rel))
    ideal = sum(1 / math.log2(i + 2) for i in range(m))
    return actual / ideal


def test_rank_orders_and_breaks_ties_by_id():
    ranked = ranking.rank(
        [ScoredProcess("a", 0.1), ScoredProcess("b", 0.9), ScoredProcess("c", 0.9)]
    )
    assert ranked.entries == ((1, "b", 0.9), (2, "c", 0.9), (3, "a", 0.1))


def test_rank_is_order_independent():
    scores = [ScoredProcess("a", 0.5), ScoredProcess("b", 0.5), ScoredProcess("c", 2.0)]
    assert ranking.rank(scores) == ranking.rank(list(reversed(scores)))


def test_rank_rejects_bad_input():
    with pytest.raises(DuplicateError):
        ranking.rank([ScoredProcess("a", 1.0), ScoredProcess("a", 2.0)])
    with pytest.raises(NumericError):
        ranking.rank([ScoredProcess("a", float("nan"))])


def test_dcg_known_values():
    assert ranking.dcg([1]) == 1.0
    assert ranking.dcg([0, 0, 0]) == 0.0
    # worked termwise: 1/log2(3) + 1/log2(5)
    expected = 1 / math.log2(3) + 1 / math.log2(5)
    assert ranking.dcg([0, 1, 0, 1]) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1.0616, abs=5e-4)
    with pytest.raises(PreconditionError):
        ranking.dcg([0, 2])


def test_ndcg_examples():
    truth = GroundTruth(frozenset({"x", "y"}))
    # attacks on top -> exactly 1
    top = ranking.rank(
        [ScoredProcess("x", 9.0), ScoredProcess("y", 8.0), ScoredProcess("n", 0.1)]
    )
    assert ranking.ndcg(top, truth) == pytest.approx(1.0)
    # rel = [0,1,0,1] pattern
    ranked = ranking.rank(
        [
            ScoredProcess("n1", 4.0),
            ScoredProcess("x", 3.0),
            ScoredProcess("n2", 2.0),
            ScoredProcess("y", 1.0),
        ]
    )
    num = 1 / math.log2(3) + 1 / math.log2(5)
    den = 1.0 + 1 / math.log2(3)
    val = ranking.ndcg(ranked, truth)
    assert val == pytest.approx(num / den, rel=1e-15)
    assert round(val, 4) == 0.6509


def test_ndcg_undefined_without_attacks():
    ranked = ranking.rank([ScoredProcess("a", 1.0)])
    with pytest.raises(UndefinedMetricError):
        ranking.ndcg(ranked, GroundTruth(frozenset({"zz"})))


def test_ndcg_monotone_transform_invariance():
    scores = [ScoredProcess(f"p{i}", float(v)) for i, v in enumerate([3, 1, 4, 1, 5])]
    shifted = [ScoredProcess(sp.process_id, 2 * sp.error + 7) for sp in scores]
    truth = GroundTruth(frozenset({"p0", "p4"}))
    a = ranking.ndcg(ranking.rank(scores), truth)
    b = ranking.ndcg(ranking.rank(shifted), truth)
    assert a == b


def test_dcg_rewards_upward_swap():
    # moving the attack from rank 3 to rank 2 must not decrease DCG
    assert ranking.dcg([0, 1, 0]) > ranking.dcg([0, 0, 1])


@given(
    st.lists(
        st.tuples(st.integers(0, 10_000), st.booleans()), min_size=1, max_size=50
    ).filter(lambda items: any(b for _, b in items))
)
@settings(max_examples=80, deadline=None)
def test_ndcg_matches_brute_oracle(items):
    scored = [ScoredProcess(f"p{i:03d}", v / 7.0) for i, (v, _) in enumerate(items)]
    attacks = frozenset(f"p{i:03d}" for i, (_, b) in enumerate(items) if b)
    got = ranking.ndcg(ranking.rank(scored), GroundTruth(attacks))
    want = brute_ndcg([(sp.process_id, sp.error) for sp in scored], attacks)
    assert got == pytest.approx(want, abs=1e-12)
    assert 0.0 <= got <= 1.0 + 1e-12


def test_histogram_known_splits():
    h = ranking.error_histogram([float(v) for v in range(1, 11)], 2, threshold=5.5)
    assert [b["count"] for b in h["bins"]] == [5, 5]
    assert h["bins"][0]["lo"] == 1.0 and h["bins"][1]["hi"] == 10.0
    assert h["threshold"] == 5.5
    single = ranking.error_histogram([2.5], 1, threshold=0.0)
    assert single["bins"] == [{"lo": 2.5, "hi": 2.5, "count": 1}]


def test_histogram_conservation_and_degenerate():
    h = ranking.error_histogram([1.0, 1.0, 1.0], 4, threshold=1.0)
    assert sum(b["count"] for b in h["bins"]) == 3
    assert h["bins"][0]["count"] == 3
    with pytest.raises(PreconditionError):
        ranking.error_histogram([], 3, threshold=0.0)
    with pytest.raises(PreconditionError):
        ranking.error_histogram([1.0], 0, threshold=0.0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=60), st.integers(1, 12))
@settings(max_examples=60, deadline=None)
def test_histogram_counts_sum_to_n(scores, bins):
    h = ranking.error_histogram(scores, bins, threshold=0.0)
    assert sum(b["count"] for b in h["bins"]) == len(scores)


def test_ranking_csv_round_trip():
    truth = GroundTruth(frozenset({"b"}))
    ranked = ranking.rank([ScoredProcess("a", 1 / 3), ScoredProcess("b", 2.0)])
    buf = io.StringIO()
    ranking.write_ranking_csv(buf, ranked, truth)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "rank,process_id,score,is_attack"
    assert lines[1] == "1,b,2.0,1"
    # float repr round-trips exactly
    assert float(lines[2].split(",")[2]) == 1 / 3
    buf2 = io.StringIO()
    ranking.write_ranking_csv(buf2, ranked)
    assert buf2.getvalue().splitlines()[0] == "rank,process_id,score"
