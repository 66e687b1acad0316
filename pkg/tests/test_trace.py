"""Trace recording, bigram distributions, KL divergence, near-pair fixture."""

import math
from collections import Counter

import numpy as np
import pytest

from rulevault.enclave import Mode, TrustedBoundary
from rulevault.errors import AlphabetMismatch, EmptyTrace, TracingDisabled
from rulevault.model import ActionCommand, Condition, DeviceEvent, Operator, Rule
from rulevault.trace import (
    BIGRAM_COUNT,
    SMOOTHING_ALPHA,
    AccessTrace,
    TraceDistribution,
    build_distribution,
    distinguishability_report,
    kl_divergence,
    near_pair_boundary,
    near_pair_event_sets,
    record_trace,
)


def _plain_boundary_with_rule(trace_sink=None):
    rule = Rule(
        id="r1",
        name="single condition",
        conditions=(Condition("s1", "reading", Operator.GREATER_THAN, 10),),
        actions=(ActionCommand("b1", "switch", "on"),),
    )
    boundary = TrustedBoundary(mode=Mode.PLAIN, trace_sink=trace_sink)
    boundary.provision_ruleset([rule])
    return boundary


def _event(value, ts=1, device="s1"):
    return DeviceEvent(device=device, capability="c", attribute="reading", value=value, timestamp=ts)


class TestRecordTrace:
    def test_matching_event_touches_expected_regions(self):
        boundary = _plain_boundary_with_rule(AccessTrace())
        trace = record_trace(boundary, [_event(50)])
        ops = Counter(trace.symbols)
        assert ops[("R", "event_buf")] >= 1
        assert ops[("R", "rule_cond")] >= 1
        assert ops[("W", "out_buf")] >= 1

    def test_identical_event_sets_identical_traces(self):
        events = [_event(v, ts=i + 1) for i, v in enumerate([5, 50, 95])]
        t1 = record_trace(_plain_boundary_with_rule(AccessTrace()), events)
        t2 = record_trace(_plain_boundary_with_rule(AccessTrace()), events)
        assert t1 == t2

    def test_empty_event_set_empty_trace(self):
        boundary = _plain_boundary_with_rule(AccessTrace())
        trace = record_trace(boundary, [])
        assert len(trace) == 0

    def test_tracing_disabled(self):
        boundary = _plain_boundary_with_rule(trace_sink=None)
        with pytest.raises(TracingDisabled):
            record_trace(boundary, [_event(50)])

    def test_recording_does_not_change_outputs(self):
        events = [_event(v, ts=i + 1) for i, v in enumerate([5, 50, 95])]
        with_sink = _plain_boundary_with_rule(AccessTrace())
        without = _plain_boundary_with_rule(trace_sink=None)
        out_with = [with_sink.handle_event(e) for e in events]
        out_without = [without.handle_event(e) for e in events]
        assert out_with == out_without

    def test_trace_dump_round_trip(self):
        boundary = _plain_boundary_with_rule(AccessTrace())
        trace = record_trace(boundary, [_event(50)])
        assert AccessTrace.from_lines(trace.to_lines()) == trace


class TestDistribution:
    def test_degenerate_single_repeated_symbol(self):
        trace = AccessTrace()
        for _ in range(100):
            trace.record("R", "cache")
        dist = build_distribution(trace)
        # 99 identical bigrams: mass concentrated on one cell up to smoothing
        assert dist.probabilities.max() == pytest.approx(
            (99 + SMOOTHING_ALPHA) / (99 + SMOOTHING_ALPHA * BIGRAM_COUNT)
        )
        assert dist.probabilities.min() > 0

    def test_matches_direct_frequency_count(self):
        """Oracle: independent dict-based bigram frequency count."""
        symbols = [
            ("R", "event_buf"),
            ("R", "cache"),
            ("R", "rule_cond"),
            ("R", "cache"),
            ("R", "rule_cond"),
            ("W", "out_buf"),
        ]
        trace = AccessTrace()
        for op, region in symbols:
            trace.record(op, region)
        dist = build_distribution(trace)

        counts = {}
        for a, b in zip(symbols, symbols[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
        total = sum(counts.values())
        from rulevault.trace import _SYMBOL_INDEX, SYMBOL_COUNT

        for pair, count in counts.items():
            idx = _SYMBOL_INDEX[pair[0]] * SYMBOL_COUNT + _SYMBOL_INDEX[pair[1]]
            expected = (count + SMOOTHING_ALPHA) / (total + SMOOTHING_ALPHA * BIGRAM_COUNT)
            assert dist.probabilities[idx] == pytest.approx(expected)

    def test_uniform_synthetic_trace_near_uniform_over_realized_bigrams(self):
        trace = AccessTrace()
        cycle = [("R", "event_buf"), ("R", "cache"), ("W", "cache"), ("R", "store")]
        for i in range(4000):
            trace.record(*cycle[i % 4])
        dist = build_distribution(trace)
        realized = dist.probabilities[dist.probabilities > 1e-3]
        assert len(realized) == 4  # a cycle realizes 4 of the 16 possible bigrams
        assert realized.max() / realized.min() < 1.01

    def test_probabilities_sum_to_one(self):
        boundary = _plain_boundary_with_rule(AccessTrace())
        trace = record_trace(boundary, [_event(50), _event(5, ts=2)])
        dist = build_distribution(trace)
        assert float(dist.probabilities.sum()) == pytest.approx(1.0, abs=1e-9)

    def test_empty_trace_rejected(self):
        with pytest.raises(EmptyTrace):
            build_distribution(AccessTrace())


class TestKl:
    def test_identity_is_exactly_zero(self):
        boundary = _plain_boundary_with_rule(AccessTrace())
        trace = record_trace(boundary, [_event(50)])
        dist = build_distribution(trace)
        assert kl_divergence(dist, dist) == 0.0

    def test_hand_computed_two_cell_example(self):
        p = TraceDistribution(probabilities=np.array([0.5, 0.5]), sample_count=2)
        q = TraceDistribution(probabilities=np.array([0.9, 0.1]), sample_count=2)
        expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
        assert kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)
        assert kl_divergence(p, q) == pytest.approx(0.5108, abs=1e-4)

    def test_nonnegative_on_traces(self):
        sets = near_pair_event_sets(3)
        b = near_pair_boundary(3)
        report = distinguishability_report(sets, b)
        assert (report.scores >= 0).all()

    def test_alphabet_mismatch(self):
        p = TraceDistribution(probabilities=np.array([0.5, 0.5]), sample_count=2)
        q = TraceDistribution(probabilities=np.array([0.2, 0.3, 0.5]), sample_count=3)
        with pytest.raises(AlphabetMismatch):
            kl_divergence(p, q)


class TestReport:
    def test_three_sets_six_off_diagonal_scores(self):
        sets = near_pair_event_sets(1)
        report = distinguishability_report(sets, near_pair_boundary(1))
        assert report.names == ["base", "near", "far"]
        off_diag = [
            report.scores[i, j] for i in range(3) for j in range(3) if i != j
        ]
        assert len(off_diag) == 6
        assert np.diag(report.scores).tolist() == [0.0, 0.0, 0.0]

    def test_duplicated_set_scores_zero(self):
        sets = near_pair_event_sets(2)
        sets["copy"] = list(sets["base"])
        report = distinguishability_report(sets, near_pair_boundary(2))
        assert report.score("base", "copy") == 0.0
        assert report.score("copy", "base") == 0.0

    def test_near_pair_scores_lowest(self):
        sets = near_pair_event_sets(4)
        report = distinguishability_report(sets, near_pair_boundary(4))
        pair = max(report.score("base", "near"), report.score("near", "base"))
        for a, b in (("base", "far"), ("far", "base"), ("near", "far"), ("far", "near")):
            assert pair < report.score(a, b)

    def test_threshold_flags_near_pair(self):
        sets = near_pair_event_sets(5)
        report = distinguishability_report(sets, near_pair_boundary(5), threshold=0.05)
        flagged_names = {(a, b) for a, b, _ in report.flagged_pairs}
        assert ("base", "near") in flagged_names

    def test_csv_shape(self):
        sets = near_pair_event_sets(6)
        report = distinguishability_report(sets, near_pair_boundary(6))
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "set,base,near,far"
        assert len(lines) == 4

    def test_needs_two_sets(self):
        with pytest.raises(AlphabetMismatch):
            distinguishability_report({"only": []}, near_pair_boundary(7))
