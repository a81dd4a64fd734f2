"""Exponential backoff with full jitter, shared by the LMM client and the webhook notifier."""

from __future__ import annotations

import random
from dataclasses import dataclass


def is_retryable_status(status: int) -> bool:
    return status == 429 or 500 <= status <= 599


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 8
    base: float = 0.5
    factor: float = 2.0
    cap: float = 8.0
    jitter: bool = True

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base < 0 or self.factor < 1 or self.cap < 0:
            raise ValueError("backoff needs base >= 0, factor >= 1, cap >= 0")

    def scheduled_delay(self, retry: int) -> float:
        """Upper bound of the wait before retry number ``retry`` (1-based)."""
        return min(self.cap, self.base * self.factor ** (retry - 1))

    def delay(self, retry: int, rng: random.Random | None = None) -> float:
        bound = self.scheduled_delay(retry)
        if not self.jitter:
            return bound
        return (rng or random).uniform(0.0, bound)
