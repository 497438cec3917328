"""Latency and synchrony model for the simulator."""
from __future__ import annotations

import random
from dataclasses import dataclass, field


@dataclass
class NetworkModel:
    """Integer-tick latency model.

    ``windows`` lists ``[a, b]`` send-time intervals during which every
    message is delivered within ``delta`` ticks. ``None`` means the whole run
    is delta-synchronous. Outside windows a message is either delayed by a
    random amount up to ``async_max`` or held until the next window opens;
    nothing is ever dropped.
    """

    delta: int = 10
    latency: str = "constant"  # "constant" or "uniform"
    min_latency: int = 1
    windows: list[tuple[int, int]] | None = None
    async_max: int = 100
    async_mode: str = "random"  # "random" or "hold"
    _sorted: list[tuple[int, int]] = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        if self.delta < 1 or not 1 <= self.min_latency <= self.delta:
            raise ValueError("need 1 <= min_latency <= delta")
        if self.latency not in ("constant", "uniform"):
            raise ValueError(f"unknown latency model {self.latency!r}")
        if self.async_mode not in ("random", "hold"):
            raise ValueError(f"unknown async mode {self.async_mode!r}")
        if self.windows is not None:
            self.windows = [tuple(w) for w in self.windows]
            self._sorted = sorted(self.windows)

    def synchronous_at(self, t: int) -> bool:
        if self.windows is None:
            return True
        return any(a <= t <= b for a, b in self._sorted)

    def _base(self, rng: random.Random) -> int:
        if self.latency == "constant":
            return self.delta
        return rng.randint(self.min_latency, self.delta)

    def delay(self, sender: int, receiver: int, t: int, rng: random.Random) -> int:
        if sender == receiver:
            return 0
        if self.synchronous_at(t):
            return self._base(rng)
        if self.async_mode == "hold":
            nxt = [a for a, _ in self._sorted if a > t]
            if nxt:
                return nxt[0] - t + self._base(rng)
        return rng.randint(1, self.async_max)
