"""Bounded per-device rule cache with LRU (default) or LFU eviction."""

from __future__ import annotations

import threading
from collections import OrderedDict

from .errors import InvalidConfig
from .model import Rule

LRU = "lru"
LFU = "lfu"


class RuleCache:
    def __init__(self, capacity: int = 100, policy: str = LRU):
        if capacity < 1:
            raise InvalidConfig("cache capacity must be >= 1")
        if policy not in (LRU, LFU):
            raise InvalidConfig(f"unknown cache policy {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self._entries: OrderedDict[str, list[Rule]] = OrderedDict()
        self._freq: dict[str, int] = {}
        self._age: dict[str, int] = {}
        self._tick = 0
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, device: str) -> bool:
        with self._lock:
            return device in self._entries

    def get(self, device: str) -> list[Rule] | None:
        """Return the cached rules or None on miss; a hit refreshes recency."""
        with self._lock:
            self._tick += 1
            rules = self._entries.get(device)
            if rules is None:
                self.misses += 1
                return None
            self.hits += 1
            self._entries.move_to_end(device)
            self._freq[device] += 1
            self._age[device] = self._tick
            return rules

    def put(self, device: str, rules: list[Rule]) -> None:
        with self._lock:
            self._tick += 1
            if device in self._entries:
                self._entries[device] = rules
                self._entries.move_to_end(device)
                self._age[device] = self._tick
                return
            if len(self._entries) >= self.capacity:
                self._evict_one()
            self._entries[device] = rules
            self._freq[device] = 0
            self._age[device] = self._tick

    def _evict_one(self) -> None:
        if self.policy == LRU:
            victim, _ = self._entries.popitem(last=False)
        else:
            # least frequently used; ties broken by least recent touch
            victim = min(self._entries, key=lambda d: (self._freq[d], self._age[d]))
            del self._entries[victim]
        self._freq.pop(victim, None)
        self._age.pop(victim, None)

    def invalidate(self, device: str) -> None:
        with self._lock:
            self._entries.pop(device, None)
            self._freq.pop(device, None)
            self._age.pop(device, None)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._freq.clear()
            self._age.clear()

    def devices(self) -> list[str]:
        with self._lock:
            return list(self._entries)

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def reset_counters(self) -> None:
        self.hits = 0
        self.misses = 0
