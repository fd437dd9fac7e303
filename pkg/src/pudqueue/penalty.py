"""Penalty functions charged at each decision.

A policy holds three callables:

- ``correct(delay)``
- ``incorrect(delay, delta_s)``
- ``missed(r, delta_s, n)``

They are built from module-level functions and ``functools.partial`` so that
policies pickle into worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable

from pudqueue.errors import ArgumentError


@dataclass(frozen=True)
class PenaltyPolicy:
    name: str
    correct: Callable[[float], float]
    incorrect: Callable[[float, int], float]
    missed: Callable[[float, int, int], float]


def _delay(delay: float) -> float:
    return delay


def _power_incorrect(delay: float, delta_s: int, k: float) -> float:
    d = abs(delta_s)
    return delay + d * delay ** (k * d + 1)


def _power_missed(r: float, delta_s: int, n: int, k: float) -> float:
    return n * r ** (k * abs(delta_s) + 1)


def _delay_incorrect(delay: float, delta_s: int) -> float:
    return delay


def _delay_missed(r: float, delta_s: int, n: int) -> float:
    return n * r


def power_policy(k: float, name: str | None = None) -> PenaltyPolicy:
    """Policy whose state-mismatch penalties grow as delay^(k |delta_s| + 1)."""
    if not (k > 0 and math.isfinite(k)):
        raise ArgumentError(f"Power policy exponent must be positive, got {k}")
    return PenaltyPolicy(
        name=name or f"power:k={k:g}",
        correct=_delay,
        incorrect=partial(_power_incorrect, k=k),
        missed=partial(_power_missed, k=k),
    )


MISMATCH = power_policy(1.0, name="mismatch")

DELAY_ONLY = PenaltyPolicy(
    name="delay",
    correct=_delay,
    incorrect=_delay_incorrect,
    missed=_delay_missed,
)


def parse_policy(text: str) -> PenaltyPolicy:
    """Parse ``mismatch``, ``delay`` or ``power:k=<f>``."""
    text = text.strip()
    if text == "mismatch":
        return MISMATCH
    if text == "delay":
        return DELAY_ONLY
    name, _, rest = text.partition(":")
    key, eq, value = rest.partition("=")
    if name != "power" or key.strip() != "k" or not eq:
        raise ArgumentError(f"Unknown penalty policy: '{text}'")
    try:
        k = float(value)
    except ValueError:
        raise ArgumentError(f"Not a number in policy: '{value}'") from None
    return power_policy(k)
