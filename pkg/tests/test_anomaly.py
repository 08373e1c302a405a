import math

import numpy as np
import pytest

from flowanomaly.anomaly import (
    PROVENANCE_SELF,
    PROVENANCE_WITNESS,
    AnomalyReport,
    DetectConfig,
    ScoredRecord,
    containment_counts,
    contains,
    daily_series,
    filter_significant,
    localize,
    rank_anomalies,
    score,
)
from flowanomaly.core import build_network
from flowanomaly.errors import EmptyInput, ZeroVariance
from flowanomaly.models import Baseline1Model

from conftest import chain_path, make_record, make_route

ROUTE_NODES = "ABCDEFGH"


def scored(rid, o, d, t0, t1, alpha=1.0, expected=None):
    """ScoredRecord on the shared A..H line with 100 m gaps."""
    i, j = ROUTE_NODES.index(o), ROUTE_NODES.index(d)
    path = chain_path(ROUTE_NODES[i : j + 1], [100.0] * (j - i))
    r = make_record(
        record_id=rid, service_id="s1", origin=o, destination=d,
        t_start=t0, t_end=t1, distance_m=100.0 * (j - i),
    )
    return ScoredRecord(record=r, path=path, alpha=alpha,
                        expected_s=expected if expected is not None else r.observed_s)


class TestScore:
    def setup_method(self):
        self.net = build_network([make_route("s1", "ab", (0.0, 300.0))])

    def test_hand_ratio(self):
        model = Baseline1Model(c=15.0, sigma2=1.0)  # expected 300/15 = 20 s
        r = make_record(origin="a", destination="b", t_start=0.0, t_end=30.0,
                        distance_m=300.0)
        (s,) = score(model, [r], self.net)
        assert math.isclose(s.alpha, 10.0 / math.sqrt(300.0), rel_tol=1e-12)
        assert s.expected_s == 20.0

    def test_zero_and_negative(self):
        model = Baseline1Model(c=15.0, sigma2=1.0)
        r_eq = make_record(origin="a", destination="b", t_start=0.0, t_end=20.0,
                           distance_m=300.0)
        r_fast = make_record(record_id="r2", origin="a", destination="b",
                             t_start=0.0, t_end=10.0, distance_m=300.0)
        s_eq, s_fast = score(model, [r_eq, r_fast], self.net)
        assert s_eq.alpha == 0.0
        assert s_fast.alpha < 0.0

    def test_zero_variance(self):
        model = Baseline1Model(c=15.0, sigma2=0.0)
        r = make_record(origin="a", destination="b", distance_m=300.0)
        with pytest.raises(ZeroVariance):
            score(model, [r], self.net)


class TestFilterSignificant:
    def test_top_one_of_hundred(self):
        records = [scored(f"r{i}", "A", "B", 0.0, 10.0, alpha=float(i + 1))
                   for i in range(100)]
        kept, delta = filter_significant(records, DetectConfig(delta_quantile=0.01))
        assert delta == 99.0
        assert [s.record.record_id for s in kept] == ["r99"]

    def test_override_zero_keeps_positive(self):
        records = [scored("r1", "A", "B", 0.0, 10.0, alpha=-1.0),
                   scored("r2", "A", "B", 0.0, 10.0, alpha=0.0),
                   scored("r3", "A", "B", 0.0, 10.0, alpha=2.0)]
        kept, delta = filter_significant(records, DetectConfig(delta_override=0.0))
        assert delta == 0.0
        assert [s.record.record_id for s in kept] == ["r3"]

    def test_all_tied_filters_to_nothing(self):
        records = [scored(f"r{i}", "A", "B", 0.0, 10.0, alpha=3.0) for i in range(10)]
        kept, delta = filter_significant(records, DetectConfig(delta_quantile=0.1))
        assert delta == 3.0
        assert kept == []

    def test_monotone_in_delta(self):
        rng = np.random.default_rng(1)
        records = [scored(f"r{i}", "A", "B", 0.0, 10.0, alpha=float(a))
                   for i, a in enumerate(rng.normal(size=200))]
        previous = None
        for delta in (-1.0, 0.0, 0.5, 1.5):
            kept, _ = filter_significant(records, DetectConfig(delta_override=delta))
            ids = {s.record.record_id for s in kept}
            if previous is not None:
                assert ids <= previous
            previous = ids

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            filter_significant([], DetectConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DetectConfig(delta_quantile=0.0)


class TestContains:
    def test_nested_true(self):
        outer = scored("out", "A", "D", 600.0, 1800.0)
        inner = scored("in", "B", "C", 900.0, 1200.0)
        assert contains(outer, inner)
        assert not contains(inner, outer)

    def test_earlier_boarding_breaks_nesting(self):
        outer = scored("out", "A", "D", 600.0, 1800.0)
        inner = scored("in", "B", "C", 599.0, 1200.0)
        assert not contains(outer, inner)

    def test_identical_records_not_contained(self):
        a = scored("a", "A", "D", 600.0, 1800.0)
        b = scored("b", "A", "D", 600.0, 1800.0)
        assert not contains(a, b)
        assert not contains(a, a)

    def test_non_contiguous_nodes_rejected(self):
        outer = scored("out", "A", "D", 0.0, 100.0)
        # same endpoints on a different route: nodes A,X,D are not a run of A,B,C,D
        other_path = chain_path(("A", "X", "D"), [100.0, 100.0])
        r = make_record(record_id="in", service_id="s2", origin="A", destination="D",
                        t_start=10.0, t_end=90.0, distance_m=200.0)
        inner = ScoredRecord(record=r, path=other_path, alpha=1.0, expected_s=80.0)
        assert not contains(outer, inner)

    def test_cross_service_containment_allowed(self):
        # only node sequences and times matter, not service ids
        outer = scored("out", "A", "D", 0.0, 1000.0)
        r = make_record(record_id="in", service_id="other", origin="B",
                        destination="C", t_start=100.0, t_end=900.0, distance_m=100.0)
        inner = ScoredRecord(record=r, path=chain_path("BC", [100.0]), alpha=1.0,
                             expected_s=800.0)
        assert contains(outer, inner)


def oracle_counts(filtered):
    """Independent containment counter: delimited-string node matching."""
    counts = {}
    for inner in filtered:
        n = 0
        inner_key = "|" + "|".join(inner.path.nodes) + "|"
        for outer in filtered:
            if outer is inner:
                continue
            if not (outer.record.t_start < inner.record.t_start
                    and outer.record.t_end > inner.record.t_end):
                continue
            outer_key = "|" + "|".join(outer.path.nodes) + "|"
            if inner_key in outer_key:
                n += 1
        counts[inner.record.record_id] = n
    return counts


def random_scored(rng, n, rid_prefix="r"):
    out = []
    for i in range(n):
        a, b = sorted(rng.choice(len(ROUTE_NODES), size=2, replace=False))
        t0 = float(rng.uniform(0.0, 5000.0))
        t1 = t0 + float(rng.uniform(10.0, 3000.0))
        out.append(scored(f"{rid_prefix}{i}", ROUTE_NODES[a], ROUTE_NODES[b], t0, t1,
                          alpha=float(rng.normal())))
    return out


class TestContainmentCounts:
    def test_russian_dolls(self):
        outer = scored("outer", "A", "F", 0.0, 1000.0)
        middle = scored("middle", "B", "E", 100.0, 900.0)
        inner = scored("inner", "C", "D", 200.0, 800.0)
        counts = containment_counts([outer, middle, inner])
        assert counts == {"outer": 0, "middle": 1, "inner": 2}

    def test_disjoint_records(self):
        a = scored("a", "A", "B", 0.0, 100.0)
        b = scored("b", "C", "D", 200.0, 300.0)
        assert containment_counts([a, b]) == {"a": 0, "b": 0}

    def test_single(self):
        assert containment_counts([scored("a", "A", "B", 0.0, 1.0)]) == {"a": 0}

    def test_matches_oracle_on_random_sets(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            filtered = random_scored(rng, 60)
            assert containment_counts(filtered) == oracle_counts(filtered)


class TestRankAnomalies:
    def test_count_ordering(self):
        r1 = scored("r1", "A", "F", 0.0, 1000.0, alpha=1.0)
        r2 = scored("r2", "B", "E", 100.0, 900.0, alpha=2.0)
        r3 = scored("r3", "C", "D", 200.0, 800.0, alpha=0.5)
        filtered = [r1, r2, r3]
        counts = containment_counts(filtered)
        reports = rank_anomalies(filtered, counts)
        assert [rep.scored.record.record_id for rep in reports] == ["r3", "r2", "r1"]

    def test_alpha_breaks_count_ties(self):
        a = scored("a", "A", "B", 0.0, 100.0, alpha=3.0)
        b = scored("b", "C", "D", 0.0, 100.0, alpha=2.0)
        reports = rank_anomalies([b, a], {"a": 0, "b": 0})
        assert [rep.scored.record.record_id for rep in reports] == ["a", "b"]

    def test_id_breaks_full_ties(self):
        a = scored("a", "A", "B", 0.0, 100.0, alpha=1.0)
        b = scored("b", "C", "D", 0.0, 100.0, alpha=1.0)
        reports = rank_anomalies([b, a], {"a": 0, "b": 0})
        assert [rep.scored.record.record_id for rep in reports] == ["a", "b"]

    def test_congestion_matches_standalone_localize(self):
        rng = np.random.default_rng(5)
        filtered = random_scored(rng, 40)
        counts = containment_counts(filtered)
        reports = rank_anomalies(filtered, counts)
        by_id = {rep.scored.record.record_id: rep for rep in reports}
        for s in filtered:
            entries, provenance = localize(s, filtered)
            rep = by_id[s.record.record_id]
            assert rep.provenance == provenance
            assert list(rep.congested_segments) == entries


class TestLocalize:
    def test_dolls_localize_to_innermost(self):
        outer = scored("outer", "A", "F", 0.0, 1000.0)
        middle = scored("middle", "B", "E", 100.0, 900.0)
        inner = scored("inner", "C", "D", 200.0, 800.0)
        entries, provenance = localize(outer, [outer, middle, inner])
        assert provenance == PROVENANCE_WITNESS
        assert [(seg.key, w0, w1) for seg, w0, w1 in entries] == [
            (("C", "D"), 200.0, 800.0)
        ]

    def test_no_nested_falls_back_to_own_path(self):
        only = scored("only", "A", "C", 0.0, 1000.0)
        entries, provenance = localize(only, [only])
        assert provenance == PROVENANCE_SELF
        assert [(seg.key, w0, w1) for seg, w0, w1 in entries] == [
            (("A", "B"), 0.0, 1000.0),
            (("B", "C"), 0.0, 1000.0),
        ]

    def test_two_disjoint_innermost_witnesses(self):
        outer = scored("outer", "A", "H", 0.0, 10000.0)
        w1 = scored("w1", "B", "C", 100.0, 900.0)
        w2 = scored("w2", "E", "F", 2000.0, 2900.0)
        entries, provenance = localize(outer, [outer, w1, w2])
        assert provenance == PROVENANCE_WITNESS
        assert [(seg.key, w0, w1_) for seg, w0, w1_ in entries] == [
            (("B", "C"), 100.0, 900.0),
            (("E", "F"), 2000.0, 2900.0),
        ]


class TestRelationProperties:
    def test_partial_order_properties(self):
        rng = np.random.default_rng(123)
        pool = random_scored(rng, 150)
        for s in pool:
            assert not contains(s, s)
        idx = rng.integers(0, len(pool), size=(2000, 3))
        for i, j, k in idx:
            a, b, c = pool[i], pool[j], pool[k]
            if a is not b:
                assert not (contains(a, b) and contains(b, a))
            if contains(a, b) and contains(b, c):
                assert contains(a, c)

    def test_scale_invariance_of_alpha(self):
        net = build_network([make_route("s1", "ab", (0.0, 300.0))])
        records = [
            make_record(record_id=f"r{i}", origin="a", destination="b",
                        t_start=0.0, t_end=20.0 + i, distance_m=300.0)
            for i in range(5)
        ]
        base = score(Baseline1Model(c=15.0, sigma2=4.0), records, net)
        k = 7.0
        scaled_records = [
            make_record(record_id=r.record_id, origin="a", destination="b",
                        t_start=0.0, t_end=k * r.t_end, distance_m=300.0)
            for r in records
        ]
        scaled = score(Baseline1Model(c=15.0 / k, sigma2=4.0 * k * k),
                       scaled_records, net)
        for s, t in zip(base, scaled):
            assert math.isclose(s.alpha, t.alpha, rel_tol=1e-12)


class TestDailySeries:
    def mkreport(self, rid, day_ts, count, alpha):
        s = scored(rid, "A", "B", day_ts, day_ts + 60.0, alpha=alpha)
        return AnomalyReport(scored=s, containment_count=count,
                             congested_segments=(), provenance=PROVENANCE_SELF)

    def test_single_day_stats(self):
        day = 86400.0 * 10
        reports = [self.mkreport("r1", day + 100, 0, 1.0),
                   self.mkreport("r2", day + 200, 2, 2.0),
                   self.mkreport("r3", day + 300, 4, 3.0)]
        (row,) = daily_series(reports)
        assert row.mean_count == 2.0
        assert row.median_count == 2.0
        assert row.mean_alpha == 2.0
        assert row.median_alpha == 2.0

    def test_empty_day_absent(self):
        reports = [self.mkreport("r1", 86400.0 * 3 + 10, 1, 1.0)]
        rows = daily_series(reports)
        assert len(rows) == 1
        assert rows[0].date == "1970-01-04"

    def test_two_days_sorted(self):
        reports = [self.mkreport("r1", 86400.0 * 7 + 10, 1, 1.0),
                   self.mkreport("r2", 86400.0 * 2 + 10, 1, 1.0)]
        rows = daily_series(reports)
        assert [r.date for r in rows] == ["1970-01-03", "1970-01-08"]
