"""Link-quality metrics: receiving-ratio averaging, ETX costs, speed estimation.

The receiving ratio of a link is an exponential moving average of probe
receptions (1 for a received Hello, 0 for a missed one) starting from 0.
The plain ETX cost of a link is 1 / (r_forward * r_reverse).  The
speed-weighted variant multiplies it by exp(v * beta), where v is the
smoothed relative radial speed between the two endpoints: negative while
they approach (discounting the link), positive while they separate
(penalizing it before the ratios have had time to decay).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .model import NodeId, ProtocolConfig, SimTime, SPEED_WEIGHTED_ETX

INFINITE_COST = math.inf


def _check_ratio(value: float, name: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1] (got {value})")


def update_receiving_ratio(r_prev: float, received: bool, alpha: float) -> float:
    """One probe-window update of the receiving-ratio moving average."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1] (got {alpha})")
    _check_ratio(r_prev, "r_prev")
    h = 1.0 if received else 0.0
    return alpha * h + (1.0 - alpha) * r_prev


def link_etx(r_forward: float, r_reverse: float) -> float:
    """Plain ETX of a link; infinite when either ratio is zero."""
    _check_ratio(r_forward, "r_forward")
    _check_ratio(r_reverse, "r_reverse")
    product = r_forward * r_reverse
    if product == 0.0:
        return INFINITE_COST
    return 1.0 / product


def speed_weighted_etx(r_forward: float, r_reverse: float, v: float, beta: float) -> float:
    """ETX weighted by exp(v * beta); reduces to plain ETX for v == 0 or beta == 0."""
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0 (got {beta})")
    if not math.isfinite(v):
        raise ValueError(f"relative speed must be finite (got {v})")
    _check_ratio(r_forward, "r_forward")
    _check_ratio(r_reverse, "r_reverse")
    product = r_forward * r_reverse
    if product == 0.0:
        return INFINITE_COST
    return math.exp(v * beta) / product


def route_etx(link_costs) -> float:
    """Total cost of a route: the sum of its link costs."""
    costs = list(link_costs)
    if not costs:
        raise ValueError("route must contain at least one link")
    total = 0.0
    for cost in costs:
        total += cost
    return total


def instantaneous_speed(
    d_now: float, d_prev: float, t_now: SimTime, t_prev: SimTime
) -> float:
    """Radial speed in m/s from two distance samples; positive when separating."""
    if t_now <= t_prev:
        raise ValueError(f"samples out of order (t_now={t_now} <= t_prev={t_prev})")
    return (d_now - d_prev) / ((t_now - t_prev) / 1000.0)


def update_speed_ema(v_prev: float, v_inst: float, gamma: float) -> float:
    """One update of the relative-speed moving average."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1] (got {gamma})")
    return gamma * v_inst + (1.0 - gamma) * v_prev


@dataclass(frozen=True)
class SpeedEstimate:
    """Smoothed relative speed plus the last distance sample it was built from."""

    v: float = 0.0
    last_distance: float = 0.0
    last_time: SimTime = 0
    initialized: bool = False


@dataclass(frozen=True)
class LinkQualityState:
    """Everything one node tracks about a direct neighbor link."""

    neighbor: NodeId
    r_forward: float = 0.0
    r_reverse: float = 0.0
    speed: SpeedEstimate = SpeedEstimate()
    last_hello_seq: int = 0
    expiry: SimTime = 0


def new_link_state(neighbor: NodeId) -> LinkQualityState:
    return LinkQualityState(neighbor=neighbor)


def on_hello_observation(
    state: LinkQualityState,
    hello_seen: bool,
    reported_reverse: float | None,
    distance: float | None,
    now: SimTime,
    config: ProtocolConfig,
) -> LinkQualityState:
    """Apply one probe-window observation for a neighbor.

    Called once per elapsed Hello interval: with hello_seen=True at the
    arrival of a probe (carrying the neighbor's reported reverse ratio and
    the distance derived from its advertised position), with
    hello_seen=False when the expected probe never arrived.  The first
    distance sample only stores the baseline; speed samples start with the
    second one.
    """
    r_forward = update_receiving_ratio(state.r_forward, hello_seen, config.alpha)
    if not hello_seen:
        return replace(state, r_forward=r_forward)

    if distance is None and config.metric_kind == SPEED_WEIGHTED_ETX:
        raise ValueError("distance is required for the speed-weighted metric")

    speed = state.speed
    if distance is not None:
        if not speed.initialized:
            speed = SpeedEstimate(
                v=0.0, last_distance=distance, last_time=now, initialized=True
            )
        elif now > speed.last_time:
            v_inst = instantaneous_speed(distance, speed.last_distance, now, speed.last_time)
            v = update_speed_ema(speed.v, v_inst, config.gamma)
            speed = SpeedEstimate(
                v=v, last_distance=distance, last_time=now, initialized=True
            )

    r_reverse = state.r_reverse if reported_reverse is None else reported_reverse
    _check_ratio(r_reverse, "reported_reverse")
    return replace(
        state,
        r_forward=r_forward,
        r_reverse=r_reverse,
        speed=speed,
        last_hello_seq=state.last_hello_seq + 1,
        expiry=now + config.link_hold_ms,
    )


def link_cost(state: LinkQualityState, config: ProtocolConfig) -> float:
    """Cost of a local link under the configured metric."""
    if config.metric_kind == SPEED_WEIGHTED_ETX:
        return speed_weighted_etx(state.r_forward, state.r_reverse, state.speed.v, config.beta)
    return link_etx(state.r_forward, state.r_reverse)
