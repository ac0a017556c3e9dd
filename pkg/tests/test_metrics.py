import math

import pytest
from hypothesis import given, settings, strategies as st

from nirvo.epipolar import classify_pair
from nirvo.core import Rotation
from nirvo.errors import EmptyVideo, NoModelsFound
from nirvo.metrics import (
    AGGREGATE, EvalReport, PairOutcome, assemble_report, inlier_ratio, mean_over_extractors, median_feature_count,
    read_report_csv, vop, write_report_csv,
)


def ok(n_inliers=50, n_matches=100, err=1.0):
    return PairOutcome(0.0, 0.05, "FAST", True, err, n_matches, n_inliers)


def bad(err=12.0, n_inliers=20, n_matches=100):
    return PairOutcome(0.0, 0.05, "FAST", False, err, n_matches, n_inliers)


def failed(kind="NoModelFound", n_matches=30):
    return PairOutcome(0.0, 0.05, "FAST", False, None, n_matches, 0, kind)


def from_error(err_deg, tol=5.0):
    est = Rotation.from_axis_angle([0, 0, 1], math.radians(err_deg))
    v = classify_pair(est, Rotation.identity(), tol)
    return PairOutcome(0.0, 0.05, "SIFT", v.valid, v.error_deg, 10, 8)


outcomes = st.lists(
    st.one_of(
        st.builds(ok, st.integers(0, 50), st.just(50)),
        st.builds(bad, st.floats(5.1, 90), st.integers(0, 50), st.just(50)),
        st.builds(failed),
    ),
    min_size=1, max_size=30,
)


class TestMedian:
    def test_odd(self):
        assert median_feature_count([10, 20, 30]) == 20

    def test_even_takes_lower_middle(self):
        assert median_feature_count([10, 20, 30, 40]) == 20

    def test_empty(self):
        with pytest.raises(EmptyVideo):
            median_feature_count([])

    @given(st.lists(st.integers(0, 10_000), min_size=1, max_size=40), st.randoms())
    def test_order_and_duplication_invariant(self, counts, rnd):
        shuffled = counts[:]
        rnd.shuffle(shuffled)
        m = median_feature_count(counts)
        assert median_feature_count(shuffled) == m
        assert median_feature_count(counts + counts) == m
        assert m in counts


class TestMeanOverExtractors:
    def test_three(self):
        assert mean_over_extractors({"FAST": 10, "SIFT": 20, "SURF": 30}) == 20.0

    def test_single(self):
        assert mean_over_extractors({"FAST": 7}) == 7.0

    def test_zeros(self):
        assert mean_over_extractors({"FAST": 0, "SIFT": 0, "SURF": 0}) == 0.0

    def test_one_decimal(self):
        assert mean_over_extractors({"FAST": 1, "SIFT": 2, "SURF": 2}) == 1.7


class TestVop:
    def test_all_valid(self):
        assert vop([ok(), ok()]) == 100.0

    def test_two_and_seven_degrees(self):
        assert vop([from_error(2.0), from_error(7.0)]) == 50.0

    def test_failure_counts_in_denominator(self):
        assert vop([ok(), failed(), ok(), bad(12.0)]) == 50.0

    def test_empty(self):
        with pytest.raises(EmptyVideo):
            vop([])

    @given(outcomes, st.randoms())
    def test_permutation_invariant(self, outs, rnd):
        shuffled = outs[:]
        rnd.shuffle(shuffled)
        assert vop(shuffled) == vop(outs)

    @given(outcomes)
    def test_monotone(self, outs):
        assert vop(outs + [failed()]) <= vop(outs)
        assert vop(outs + [ok()]) >= vop(outs)


class TestInlierRatio:
    def test_single(self):
        assert inlier_ratio([ok(70, 100)]) == 0.7

    def test_failures_excluded(self):
        assert inlier_ratio([ok(70, 100), failed(n_matches=100), bad(n_inliers=30, n_matches=100)]) == 0.5

    def test_all_failed(self):
        with pytest.raises(NoModelsFound):
            inlier_ratio([failed(), failed()])

    @given(outcomes)
    def test_bounds(self, outs):
        try:
            r = inlier_ratio(outs)
        except NoModelsFound:
            assert all(o.failure_kind for o in outs)
            return
        assert 0.0 <= r <= 1.0
        found = [o for o in outs if o.failure_kind is None]
        assert (r == 1.0) == all(o.n_inliers == o.n_matches for o in found)


def test_pair_outcome_validation():
    with pytest.raises(ValueError):
        PairOutcome(0, 1, "FAST", True, None, 10, 5)
    with pytest.raises(ValueError):
        PairOutcome(0, 1, "FAST", False, 9.0, 10, 11)


class TestAssembleReport:
    def test_single_extractor_single_pair(self):
        rows = assemble_report("s", "850", {"FAST": [ok()]}, {"FAST": [100, 120]})
        assert [r.extractor for r in rows] == ["FAST", AGGREGATE]
        assert rows[0].vop == 100.0 and rows[0].frames == 2

    def test_aggregate_mean(self):
        counts = {"FAST": [10], "SIFT": [20], "SURF": [30]}
        outs = {k: [ok()] for k in counts}
        rows = assemble_report("s", "850", outs, counts)
        assert all(r.mean_median_features == 20.0 for r in rows)
        assert rows[-1].extractor == AGGREGATE and rows[-1].median_features == 20.0

    def test_zero_count_log_view(self):
        rows = assemble_report("s", "850", {"FAST": [failed()]}, {"FAST": [0, 0]})
        assert rows[0].ln_median_features == 0.0
        assert math.isnan(rows[0].inlier_ratio)

    def test_aggregate_pools_pairs(self):
        outs = {"FAST": [ok(10, 100)], "SIFT": [failed(), ok(30, 100)]}
        rows = assemble_report("s", "850", outs, {"FAST": [5], "SIFT": [7]})
        assert rows[-1].vop == pytest.approx(200 / 3)
        assert rows[-1].inlier_ratio == pytest.approx(0.2)

    def test_mismatched_maps(self):
        with pytest.raises(ValueError):
            assemble_report("s", "850", {"FAST": [ok()]}, {"SIFT": [1]})


def test_report_validation():
    with pytest.raises(ValueError):
        EvalReport("s", "850", "FAST", 3, 10, 10.0, 101.0, 0.5)
    with pytest.raises(ValueError):
        EvalReport("s", "850", "FAST", 3, 10, 10.0, 50.0, 1.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5000), outcomes), min_size=1, max_size=3))
def test_report_csv_round_trip(tmp_path_factory, data):
    names = ["FAST", "SIFT", "SURF"][: len(data)]
    counts = {n: [c, c + 1] for n, (c, _) in zip(names, data)}
    outs = {n: o for n, (_, o) in zip(names, data)}
    rows = assemble_report("scene, with comma", "900", outs, counts)
    path = tmp_path_factory.mktemp("csv") / "report.csv"
    write_report_csv(path, rows)
    back = read_report_csv(path)
    assert len(back) == len(rows)
    assert all(a.same_as(b) for a, b in zip(rows, back))
