"""Core domain types shared by every layer: identities, time, positions, config.

Conventions used throughout the package:
  * node ids are plain ints >= 1
  * simulation time is integer milliseconds since scenario start
  * positions are local Cartesian meters (no geodetic coordinates anywhere)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

# Node ids and simulation timestamps are plain ints; these aliases only
# document intent in signatures.
NodeId = int
SimTime = int

PLAIN_ETX = "plain_etx"
SPEED_WEIGHTED_ETX = "speed_weighted_etx"
METRIC_KINDS = (PLAIN_ETX, SPEED_WEIGHTED_ETX)


class Position(NamedTuple):
    """A point in the local Cartesian frame, in meters."""

    x: float
    y: float
    z: float = 0.0

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


def euclidean_distance(a: Position, b: Position) -> float:
    """3-D Euclidean distance between two positions, in meters."""
    return math.dist(a, b)


def seconds_to_ms(seconds: float) -> SimTime:
    return int(round(seconds * 1000.0))


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol timing and metric parameters for one run.

    alpha is the link-quality aging factor of the receiving-ratio average,
    beta the speed weighting exponent (s/m) and gamma the smoothing factor
    of the relative-speed average.  metric_kind selects between the plain
    ETX cost and the speed-weighted cost.
    """

    hello_interval: float = 0.5
    tc_interval: float = 1.0
    # Neighbor entries are held for three missed probes by default.
    link_hold_time: float = 1.5
    alpha: float = 0.05
    beta: float = 0.2
    gamma: float = 0.04
    metric_kind: str = SPEED_WEIGHTED_ETX

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1] (got {self.alpha})")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1] (got {self.gamma})")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0 (got {self.beta})")
        if self.hello_interval <= 0.0:
            raise ValueError(f"hello_interval must be > 0 (got {self.hello_interval})")
        if self.tc_interval <= 0.0:
            raise ValueError(f"tc_interval must be > 0 (got {self.tc_interval})")
        if self.link_hold_time < self.hello_interval:
            raise ValueError(
                "link_hold_time must be >= hello_interval "
                f"(got {self.link_hold_time} < {self.hello_interval})"
            )
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(
                f"metric_kind must be one of {METRIC_KINDS} (got {self.metric_kind!r})"
            )

    @property
    def hello_interval_ms(self) -> SimTime:
        return seconds_to_ms(self.hello_interval)

    @property
    def tc_interval_ms(self) -> SimTime:
        return seconds_to_ms(self.tc_interval)

    @property
    def link_hold_ms(self) -> SimTime:
        return seconds_to_ms(self.link_hold_time)
