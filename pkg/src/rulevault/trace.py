"""Access-pattern traces and their distinguishability under KL divergence.

The engine emits one symbol per read/write touching six named regions
(event_buf, cache, store, rule_cond, rule_act, out_buf). A trace is the
symbol sequence for a whole event set; its distribution is the smoothed
relative frequency of symbol bigrams over the full 144-cell alphabet
(2 ops x 6 regions, squared), so sequence structure and not just op counts
drives the score. Additive smoothing keeps every cell positive and the
divergence finite.

If two event sets are near-duplicates they produce near-identical traces
and a low pairwise score — that is the leakage this analyzer is built to
expose.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass

import numpy as np

from .bench import EVENT_ATTRIBUTE, EVENT_CAPABILITY, EVENT_VALUE_MAX, device_name, generate_ruleset
from .enclave import Mode, TrustedBoundary, encode_event_for_mode
from .errors import AlphabetMismatch, EmptyTrace, TracingDisabled
from .model import DeviceEvent

OPS = ("R", "W")
REGIONS = ("event_buf", "cache", "store", "rule_cond", "rule_act", "out_buf")
SYMBOL_COUNT = len(OPS) * len(REGIONS)
BIGRAM_COUNT = SYMBOL_COUNT * SYMBOL_COUNT
SMOOTHING_ALPHA = 1e-3

_SYMBOL_INDEX = {
    (op, region): oi * len(REGIONS) + ri
    for oi, op in enumerate(OPS)
    for ri, region in enumerate(REGIONS)
}


class AccessTrace:
    """Ordered (op, region) symbols; also usable as a boundary trace sink."""

    def __init__(self):
        self.symbols: list[tuple[str, str]] = []

    def record(self, op: str, region: str) -> None:
        self.symbols.append((op, region))

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, AccessTrace) and self.symbols == other.symbols

    def to_lines(self) -> str:
        """One `R|W,region` pair per line (the trace dump format)."""
        return "\n".join(f"{op},{region}" for op, region in self.symbols) + (
            "\n" if self.symbols else ""
        )

    @classmethod
    def from_lines(cls, text: str) -> "AccessTrace":
        trace = cls()
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            op, region = line.split(",", 1)
            trace.record(op, region)
        return trace


@dataclass(frozen=True)
class TraceDistribution:
    probabilities: np.ndarray
    sample_count: int

    def __post_init__(self) -> None:
        total = float(np.sum(self.probabilities))
        if abs(total - 1.0) > 1e-9:
            raise EmptyTrace(f"distribution does not normalize (sum={total})")


def record_trace(boundary: TrustedBoundary, events: list[DeviceEvent]) -> AccessTrace:
    """Run an event set through the boundary and return the emitted symbols.

    Requires a trace sink on the boundary; recording changes nothing about
    what the engine outputs. Events are serialized/encrypted as the
    boundary's mode requires before submission.
    """
    sink = boundary.trace_sink
    if sink is None or not isinstance(sink, AccessTrace):
        raise TracingDisabled("boundary has no AccessTrace sink")
    start = len(sink.symbols)
    for event in events:
        message, topic = encode_event_for_mode(event, boundary.mode, boundary.device_keys)
        boundary.handle_event(message, topic)
    trace = AccessTrace()
    trace.symbols = sink.symbols[start:]
    return trace


def build_distribution(trace: AccessTrace, alpha: float = SMOOTHING_ALPHA) -> TraceDistribution:
    """Smoothed bigram distribution over the full 144-cell alphabet."""
    if len(trace) == 0:
        raise EmptyTrace("cannot build a distribution from an empty trace")
    counts = np.zeros(BIGRAM_COUNT, dtype=np.float64)
    symbols = trace.symbols
    for first, second in zip(symbols, symbols[1:]):
        counts[_SYMBOL_INDEX[first] * SYMBOL_COUNT + _SYMBOL_INDEX[second]] += 1.0
    total = counts.sum()
    probabilities = (counts + alpha) / (total + alpha * BIGRAM_COUNT)
    return TraceDistribution(probabilities=probabilities, sample_count=int(total))


def kl_divergence(p: TraceDistribution, q: TraceDistribution) -> float:
    """Forward KL divergence sum(p * ln(p/q)) in nats; 0 iff p == q."""
    if p.probabilities.shape != q.probabilities.shape:
        raise AlphabetMismatch(
            f"alphabets differ: {p.probabilities.shape} vs {q.probabilities.shape}"
        )
    return float(np.sum(p.probabilities * np.log(p.probabilities / q.probabilities)))


# ---------------------------------------------------------------------------
# Pairwise distinguishability
# ---------------------------------------------------------------------------


@dataclass
class DistinguishabilityReport:
    names: list[str]
    scores: np.ndarray  # scores[i, j] = KL(set_i, set_j)
    flagged_pairs: list[tuple[str, str, float]]

    def score(self, a: str, b: str) -> float:
        return float(self.scores[self.names.index(a), self.names.index(b)])

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["set"] + self.names)
        for i, name in enumerate(self.names):
            writer.writerow([name] + [f"{self.scores[i, j]:.6f}" for j in range(len(self.names))])
        return out.getvalue()


def distinguishability_report(
    named_sets: dict[str, list[DeviceEvent]],
    boundary: TrustedBoundary,
    threshold: float | None = None,
) -> DistinguishabilityReport:
    """Pairwise forward-KL matrix over the sets' trace distributions.

    Each set is recorded from a cold engine (runtime state reset between
    sets) so traces depend only on the set itself. Pairs scoring below the
    threshold are flagged as practically indistinguishable to an observer.
    """
    if len(named_sets) < 2:
        raise AlphabetMismatch("need at least two event sets to compare")
    if boundary.trace_sink is None:
        boundary.trace_sink = AccessTrace()
    names = list(named_sets)
    distributions = []
    for name in names:
        boundary.reset_runtime_state()
        trace = record_trace(boundary, named_sets[name])
        distributions.append(build_distribution(trace))
    n = len(names)
    scores = np.zeros((n, n), dtype=np.float64)
    flagged = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            scores[i, j] = kl_divergence(distributions[i], distributions[j])
    if threshold is not None:
        for i in range(n):
            for j in range(i + 1, n):
                pair_score = max(scores[i, j], scores[j, i])
                if pair_score < threshold:
                    flagged.append((names[i], names[j], pair_score))
    return DistinguishabilityReport(names=names, scores=scores, flagged_pairs=flagged)


# ---------------------------------------------------------------------------
# Near-pair fixture: two near-identical sets and one distinct set
# ---------------------------------------------------------------------------


def near_pair_event_sets(
    seed: int,
    devices: int = 4,
    events_per_set: int = 10,
) -> dict[str, list[DeviceEvent]]:
    """Three named event sets: 'base', 'near' (= base with one reading
    resampled), and 'far' (independent). The analyzer should score
    (base, near) well below any pair involving 'far'."""
    rng = random.Random(f"near-pair-{seed}")
    device_ids = [device_name(i) for i in range(devices)]

    def random_event(device: str, ts: int) -> DeviceEvent:
        return DeviceEvent(
            device=device,
            capability=EVENT_CAPABILITY,
            attribute=EVENT_ATTRIBUTE,
            value=rng.randint(0, EVENT_VALUE_MAX),
            timestamp=ts,
        )

    base = [
        random_event(device_ids[i % devices], 1_000_000 + i) for i in range(events_per_set)
    ]
    near = list(base)
    swap_at = rng.randrange(events_per_set)
    original = near[swap_at]
    delta = rng.choice([d for d in range(-8, 9) if d != 0])
    nudged = min(EVENT_VALUE_MAX, max(0, original.value + delta))
    near[swap_at] = DeviceEvent(
        device=original.device,
        capability=original.capability,
        attribute=original.attribute,
        value=nudged,
        timestamp=original.timestamp,
    )
    # the distinct set draws devices independently too, not just readings
    far = [
        random_event(rng.choice(device_ids), 2_000_000 + i) for i in range(events_per_set)
    ]
    return {"base": base, "near": near, "far": far}


def near_pair_boundary(seed: int, devices: int = 4, rules: int = 10) -> TrustedBoundary:
    """Plain-mode boundary provisioned with the fixture ruleset and tracing on."""
    boundary = TrustedBoundary(
        mode=Mode.PLAIN,
        k_sgx=None,
        cache_capacity=100,
        trace_sink=AccessTrace(),
    )
    boundary.provision_ruleset(generate_ruleset(rules, devices, seed))
    return boundary
