"""Hand-simulated LRU eviction sequences.

Each case: (name, capacity, ops, expected_order) where ops are
("put", key), ("get", key), or ("inv", key) and expected_order is the
final cache contents from least- to most-recently used, worked out by
hand in the trailing comment.
"""

LRU_CASES = [
    ("spec-example", 2, ["pA", "pB", "gA", "pC"], ["A", "C"]),  # gA:[B,A]; pC evicts B
    ("single-slot", 1, ["pA", "pB"], ["B"]),  # pB evicts A
    ("plain-overflow", 2, ["pA", "pB", "pC"], ["B", "C"]),  # pC evicts A
    ("hit-on-mru", 2, ["pA", "pB", "gB", "pC"], ["B", "C"]),  # gB keeps order; pC evicts A
    ("cap3-promote", 3, ["pA", "pB", "pC", "gA", "pD"], ["C", "A", "D"]),  # pD evicts B
    ("double-hit", 2, ["pA", "gA", "gA", "pB", "pC"], ["B", "C"]),  # pC evicts A
    ("re-put-promotes", 2, ["pA", "pB", "pA", "pC"], ["A", "C"]),  # pA moves A to MRU; pC evicts B
    ("rolling-window", 3, ["pA", "pB", "pC", "pD", "pE"], ["C", "D", "E"]),
    ("miss-then-fill", 2, ["gX", "pA"], ["A"]),  # miss leaves no entry
    ("cap4-two-hits", 4, ["pA", "pB", "pC", "pD", "gA", "gB", "pE"], ["D", "A", "B", "E"]),
    ("swap-recency", 2, ["pA", "pB", "gA", "gB", "pC"], ["B", "C"]),  # A became LRU again
    ("cap3-two-evictions", 3, ["pA", "pB", "pC", "gB", "pD", "pE"], ["B", "D", "E"]),
    ("single-slot-replace", 1, ["pA", "gA", "pB"], ["B"]),
    ("invalidate-frees-slot", 2, ["pA", "pB", "iA", "pC"], ["B", "C"]),  # no eviction needed
    ("invalidate-mru", 2, ["pA", "pB", "iB", "gA", "pC"], ["A", "C"]),
    ("full-reversal", 3, ["pA", "pB", "pC", "gC", "gB", "gA", "pD"], ["B", "A", "D"]),  # evicts C
    ("update-in-place", 2, ["pA", "pB", "pB", "pC"], ["B", "C"]),  # pB re-put; pC evicts A
    ("cap5-mixed", 5, ["pA", "pB", "pC", "pD", "pE", "gA", "gC", "pF"], ["D", "E", "A", "C", "F"]),
    ("misses-then-hit", 1, ["gA", "gA", "pA", "gA"], ["A"]),
    ("fill-after-hit", 3, ["pA", "pB", "gA", "pC", "pD"], ["A", "C", "D"]),  # pD evicts B
    ("promote-both", 2, ["pA", "pB", "gB", "gA", "pC"], ["A", "C"]),  # gA makes B LRU; pC evicts B
    ("cap4-one-hit", 4, ["pA", "pB", "pC", "gA", "pD", "pE"], ["C", "A", "D", "E"]),  # evicts B
]


def run_ops(cache, ops):
    """Apply the compact op strings to a cache; returns (hits, misses)."""
    for op in ops:
        kind, key = op[0], op[1:]
        if kind == "p":
            cache.put(key, [f"rules-{key}"])
        elif kind == "g":
            cache.get(key)
        elif kind == "i":
            cache.invalidate(key)
        else:
            raise AssertionError(op)
    return cache.hits, cache.misses
