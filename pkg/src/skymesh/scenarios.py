"""Builders for the two benchmark experiments plus the loss-rate pipeline.

Two-relay: a fixed destination (node 1) at the origin, two relay UAVs
(nodes 3 and 4) loitering on 20 m circles centered 300 m and 600 m out
along the x axis, and a source UAV (node 2) flying 850 m out and back in
160 s while streaming 85 datagrams per second to node 1.  The route grows
from direct to 2-hop to 3-hop and back, so the topology changes 4 times
per loop.

Open-area: 30 static relays (nodes 3..32) on a 5x6 grid with 300 m
spacing covering a 1200x1500 m rectangle, the destination just west of
the grid, and the source scanning the area on a lawnmower path that takes
870 s.  Relay numbering runs down each column: node 3+6*c+r sits at
(300*c, 300*r).

Both scenarios share one logistic channel, chosen so that 300 m links are
solid (p ~ 0.98), the 424 m grid diagonals are marginal (p ~ 0.54, just
above the 0.5 neighborhood threshold), and 600 m links are effectively
dead (p ~ 0.006).
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .model import Position, ProtocolConfig, seconds_to_ms
from .sim import (
    ChannelModel,
    EventLog,
    MobilityTrace,
    Scenario,
    TrafficPlan,
    run,
)

CHANNEL_D50 = 430.0
CHANNEL_STEEPNESS = 0.03

TWO_RELAY_DURATION_S = 160
TWO_RELAY_RANGE_M = 850.0
RELAY_RADIUS_M = 20.0
RELAY_SPEED_MPS = 15.0  # loiter speed of a small fixed-wing UAV
RELAY_WAYPOINT_STEP_MS = 500

OPEN_AREA_DURATION_S = 870
GRID_SPACING_M = 300.0
GRID_COLUMNS = 5
GRID_ROWS = 6

DLR_WINDOW_MS = 1000
OUTAGE_THRESHOLD = 0.2


def _scenario_channel(seed: int) -> ChannelModel:
    return ChannelModel(d50=CHANNEL_D50, steepness=CHANNEL_STEEPNESS, rng_seed=seed)


def _circle_trace(node, center_x, duration_ms) -> MobilityTrace:
    omega = RELAY_SPEED_MPS / RELAY_RADIUS_M / 1000.0  # rad per ms
    waypoints = []
    for t in range(0, duration_ms + RELAY_WAYPOINT_STEP_MS, RELAY_WAYPOINT_STEP_MS):
        angle = omega * t
        waypoints.append(
            (
                t,
                Position(
                    center_x + RELAY_RADIUS_M * math.cos(angle),
                    RELAY_RADIUS_M * math.sin(angle),
                    0.0,
                ),
            )
        )
    return MobilityTrace(node, tuple(waypoints))


def build_two_relay(protocol: ProtocolConfig, seed: int) -> Scenario:
    """The out-and-back 2-relay experiment (one 160 s loop per run)."""
    duration = seconds_to_ms(TWO_RELAY_DURATION_S)
    half = duration // 2
    nodes = (
        MobilityTrace(1, ((0, Position(0.0, 0.0, 0.0)),)),
        MobilityTrace(
            2,
            (
                (0, Position(0.0, 0.0, 0.0)),
                (half, Position(TWO_RELAY_RANGE_M, 0.0, 0.0)),
                (duration, Position(0.0, 0.0, 0.0)),
            ),
        ),
        _circle_trace(3, 300.0, duration),
        _circle_trace(4, 600.0, duration),
    )
    return Scenario(
        nodes=nodes,
        channel=_scenario_channel(seed),
        traffic=TrafficPlan(source=2, destination=1, start=0, end=duration),
        protocol=protocol,
        duration=duration,
        seed=seed,
    )


def open_area_relay_position(node) -> Position:
    """Grid slot of an open-area relay (nodes 3..32), numbered down columns."""
    index = node - 3
    column, row = divmod(index, GRID_ROWS)
    return Position(GRID_SPACING_M * column, GRID_SPACING_M * row, 0.0)


def _lawnmower_waypoints(duration_ms) -> tuple:
    width = GRID_SPACING_M * (GRID_COLUMNS - 1)
    speed = 10.0  # m/s; 6 sweeps plus 5 connectors in 870 s
    waypoints = [(0, Position(0.0, 0.0, 0.0))]
    t = 0.0
    x, y = 0.0, 0.0
    for row in range(GRID_ROWS):
        x = width if x == 0.0 else 0.0
        t += width / speed
        waypoints.append((seconds_to_ms(t), Position(x, y, 0.0)))
        if row < GRID_ROWS - 1:
            y += GRID_SPACING_M
            t += GRID_SPACING_M / speed
            waypoints.append((seconds_to_ms(t), Position(x, y, 0.0)))
    assert seconds_to_ms(t) == duration_ms
    return tuple(waypoints)


def build_open_area(protocol: ProtocolConfig, seed: int) -> Scenario:
    """The 32-node open-area coverage experiment (870 s scan per run)."""
    duration = seconds_to_ms(OPEN_AREA_DURATION_S)
    nodes = [
        MobilityTrace(1, ((0, Position(-GRID_SPACING_M, 600.0, 0.0)),)),
        MobilityTrace(2, _lawnmower_waypoints(duration)),
    ]
    for node in range(3, 3 + GRID_COLUMNS * GRID_ROWS):
        nodes.append(MobilityTrace(node, ((0, open_area_relay_position(node)),)))
    return Scenario(
        nodes=tuple(nodes),
        channel=_scenario_channel(seed),
        traffic=TrafficPlan(source=2, destination=1, start=0, end=duration),
        protocol=protocol,
        duration=duration,
        seed=seed,
        # Control-plane records for 32 flooding nodes would dwarf the log.
        record_control=False,
    )


# ---------------------------------------------------------------------------
# Loss-rate pipeline


class DlrWindow(NamedTuple):
    second: int
    sent: int
    lost: int
    dlr: float


@dataclass(frozen=True)
class DlrSeries:
    windows: tuple[DlrWindow, ...]

    def dlrs(self) -> list[float]:
        return [w.dlr for w in self.windows]

    def write_csv(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_csv_bytes())

    def to_csv_bytes(self) -> bytes:
        lines = ["second,sent,lost,dlr"]
        for w in self.windows:
            lines.append(f"{w.second},{w.sent},{w.lost},{w.dlr!r}")
        return ("\n".join(lines) + "\n").encode()

    @classmethod
    def from_csv(cls, path) -> "DlrSeries":
        windows = []
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "second,sent,lost,dlr":
                raise ValueError(f"unexpected DLR header: {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                second, sent, lost, dlr = line.split(",")
                windows.append(DlrWindow(int(second), int(sent), int(lost), float(dlr)))
        return cls(tuple(windows))


@dataclass(frozen=True)
class OutageSummary:
    threshold: float
    outage_percent: float
    runs: int


def compute_dlr(log: EventLog, traffic: TrafficPlan) -> DlrSeries:
    """Per-second loss rate, attributing each datagram to its send window."""
    sent_window: dict[int, int] = {}
    sent_counts: dict[int, int] = {}
    for rec in log.records:
        if rec.kind == "data_tx" and rec.node == traffic.source:
            window = (rec.time - traffic.start) // DLR_WINDOW_MS
            sent_window[int(rec.info)] = window
            sent_counts[window] = sent_counts.get(window, 0) + 1
    received: dict[int, int] = {}
    for rec in log.records:
        if rec.kind == "data_rx" and rec.node == traffic.destination:
            datagram = int(rec.info.split()[0])
            window = sent_window.get(datagram)
            if window is not None:
                received[window] = received.get(window, 0) + 1
    windows = []
    for window in sorted(sent_counts):
        sent = sent_counts[window]
        lost = sent - received.get(window, 0)
        windows.append(DlrWindow(window, sent, lost, lost / sent))
    return DlrSeries(tuple(windows))


def outage_summary(series, threshold: float = OUTAGE_THRESHOLD) -> OutageSummary:
    """Average per-run percentage of windows whose DLR strictly exceeds threshold."""
    series = list(series)
    if not series:
        raise ValueError("outage_summary needs at least one run")
    percents = []
    for run_series in series:
        windows = run_series.windows
        over = sum(1 for w in windows if w.dlr > threshold)
        percents.append(100.0 * over / len(windows))
    return OutageSummary(threshold, math.fsum(percents) / len(percents), len(series))


def average_dlr_profile(series) -> DlrSeries:
    """Pointwise mean DLR across runs aligned on the same windows."""
    series = list(series)
    if not series:
        raise ValueError("average_dlr_profile needs at least one run")
    lengths = {len(s.windows) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"mismatched window counts across runs: {sorted(lengths)}")
    n = len(series)
    windows = []
    for i in range(lengths.pop()):
        seconds = {s.windows[i].second for s in series}
        if len(seconds) != 1:
            raise ValueError("runs are not aligned on the same seconds")
        sent = sum(s.windows[i].sent for s in series)
        lost = sum(s.windows[i].lost for s in series)
        mean = math.fsum(s.windows[i].dlr for s in series) / n
        windows.append(DlrWindow(seconds.pop(), sent, lost, mean))
    return DlrSeries(tuple(windows))


# ---------------------------------------------------------------------------
# Replication harness


def hop_modes(log: EventLog, traffic: TrafficPlan) -> list[int | None]:
    """Per send-window modal hop count of delivered datagrams (None when none)."""
    sent_window: dict[int, int] = {}
    last_window = -1
    for rec in log.records:
        if rec.kind == "data_tx" and rec.node == traffic.source:
            window = (rec.time - traffic.start) // DLR_WINDOW_MS
            sent_window[int(rec.info)] = window
            last_window = max(last_window, window)
    per_window: dict[int, Counter] = {}
    for rec in log.records:
        if rec.kind == "data_rx" and rec.node == traffic.destination:
            datagram, hops = rec.info.split()
            window = sent_window.get(int(datagram))
            if window is not None:
                per_window.setdefault(window, Counter())[int(hops)] += 1
    modes: list[int | None] = []
    for window in range(last_window + 1):
        counter = per_window.get(window)
        if not counter:
            modes.append(None)
            continue
        top = max(counter.values())
        modes.append(min(h for h, c in counter.items() if c == top))
    return modes


def collapse_transitions(modes) -> list[int]:
    """Hop-count phases: consecutive duplicates collapsed, gaps skipped."""
    phases: list[int] = []
    for mode in modes:
        if mode is None:
            continue
        if not phases or phases[-1] != mode:
            phases.append(mode)
    return phases


@dataclass(frozen=True)
class RunResult:
    seed: int
    dlr: DlrSeries
    hop_modes: tuple
    log: EventLog | None = None


def _run_one(args) -> RunResult:
    scenario, keep_log = args
    log = run(scenario)
    return RunResult(
        seed=scenario.seed,
        dlr=compute_dlr(log, scenario.traffic),
        hop_modes=tuple(hop_modes(log, scenario.traffic)),
        log=log if keep_log else None,
    )


def replicate(
    builder: Callable[[ProtocolConfig, int], Scenario],
    protocol: ProtocolConfig,
    base_seed: int,
    runs: int,
    keep_logs: bool = False,
    workers: int = 1,
) -> list[RunResult]:
    """Run `runs` replications with seeds base_seed..base_seed+runs-1.

    Replications are independent; with workers > 1 they execute in parallel
    processes and results are merged in seed order either way.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [(builder(protocol, base_seed + i), keep_logs) for i in range(runs)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]
