"""Deterministic discrete-event simulator for the routing experiments.

The engine owns one ProtocolNode per scenario node and drives Hello/TC
timers, per-neighbor missed-probe sampling, neighbor/topology expiry,
traffic emission and hop-by-hop datagram forwarding.  Packet deliveries
are Bernoulli trials against a logistic distance-loss channel; every
(link, packet-kind) pair draws from its own seeded stream, so runs with
the same scenario and seed replay byte-identically.

Times are integer milliseconds.  Propagation delay is a fixed 1 ms per
transmission and data datagrams start with a TTL of 16 transmissions.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import math
import random
from dataclasses import dataclass
from typing import NamedTuple

from . import wire
from .model import NodeId, Position, ProtocolConfig, SimTime, euclidean_distance
from .routing import ProtocolNode

PROPAGATION_DELAY_MS = 1
DATA_TTL = 16
# Below this delivery probability a trial is skipped without drawing.
P_MIN = 1e-9


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Mobility


@dataclass(frozen=True)
class MobilityTrace:
    """Time-ordered waypoints of one node, linearly interpolated between."""

    node: NodeId
    waypoints: tuple[tuple[SimTime, Position], ...]

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise ScenarioError(f"node {self.node}: trace has no waypoints")
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError(f"node {self.node}: waypoint times must strictly increase")
        if any(not p.is_finite() for _, p in self.waypoints):
            raise ScenarioError(f"node {self.node}: non-finite waypoint position")

    def is_static(self) -> bool:
        first = self.waypoints[0][1]
        return all(p == first for _, p in self.waypoints)


def position_at(trace: MobilityTrace, t: SimTime) -> Position:
    """Position at time t, clamped to the first/last waypoint outside the trace."""
    points = trace.waypoints
    if t <= points[0][0]:
        return points[0][1]
    if t >= points[-1][0]:
        return points[-1][1]
    times = [wt for wt, _ in points]
    i = bisect.bisect_right(times, t)
    t0, p0 = points[i - 1]
    t1, p1 = points[i]
    f = (t - t0) / (t1 - t0)
    return Position(
        p0.x + f * (p1.x - p0.x),
        p0.y + f * (p1.y - p0.y),
        p0.z + f * (p1.z - p0.z),
    )


def read_trace_csv(path) -> list[MobilityTrace]:
    """Load traces from a CSV with header time_ms,node,x_m,y_m,z_m."""
    per_node: dict[int, list[tuple[int, Position]]] = {}
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != "time_ms,node,x_m,y_m,z_m":
            raise ScenarioError(f"unexpected trace header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, node, x, y, z = line.split(",")
            per_node.setdefault(int(node), []).append(
                (int(t), Position(float(x), float(y), float(z)))
            )
    return [
        MobilityTrace(node, tuple(sorted(points)))
        for node, points in sorted(per_node.items())
    ]


def write_trace_csv(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("time_ms,node,x_m,y_m,z_m\n")
        for trace in traces:
            for t, p in trace.waypoints:
                fh.write(f"{t},{trace.node},{p.x!r},{p.y!r},{p.z!r}\n")


# ---------------------------------------------------------------------------
# Channel


@dataclass(frozen=True)
class ChannelModel:
    """Logistic distance-loss surrogate: p(d) = 1 / (1 + exp(k * (d - d50)))."""

    d50: float = 300.0
    steepness: float = 0.05
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.d50 <= 0.0:
            raise ScenarioError(f"d50 must be > 0 (got {self.d50})")
        if self.steepness < 0.0:
            raise ScenarioError(f"steepness must be >= 0 (got {self.steepness})")


def delivery_probability(model: ChannelModel, distance: float) -> float:
    exponent = model.steepness * (distance - model.d50)
    if exponent > 700.0:
        return 0.0
    if exponent < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(exponent))


def delivery_trial(model: ChannelModel, distance: float, draw: float) -> bool:
    """One Bernoulli delivery trial; draw is a uniform value in [0, 1)."""
    if distance < 0.0:
        raise ValueError(f"distance must be >= 0 (got {distance})")
    if not 0.0 <= draw < 1.0:
        raise ValueError(f"draw must be in [0, 1) (got {draw})")
    return draw < delivery_probability(model, distance)


# ---------------------------------------------------------------------------
# Traffic and scenario


@dataclass(frozen=True)
class TrafficPlan:
    source: NodeId
    destination: NodeId
    datagrams_per_second: int = 85
    datagram_size: int = 11765  # bits; 85 datagrams make roughly 1 Mbit
    start: SimTime = 0
    end: SimTime = 0

    def __post_init__(self) -> None:
        if self.source == self.destination:
            raise ScenarioError("traffic source and destination must differ")
        if self.datagrams_per_second < 1:
            raise ScenarioError("datagrams_per_second must be >= 1")
        if self.end <= self.start:
            raise ScenarioError("traffic window is empty")


@dataclass(frozen=True)
class Scenario:
    """Everything one run needs: nodes, channel, traffic, protocol, duration."""

    nodes: tuple[MobilityTrace, ...]
    channel: ChannelModel
    traffic: TrafficPlan
    protocol: ProtocolConfig
    duration: SimTime
    seed: int = 0
    record_control: bool = True

    def __post_init__(self) -> None:
        ids = [trace.node for trace in self.nodes]
        if len(ids) != len(set(ids)):
            raise ScenarioError("duplicate node ids in scenario")
        if any(i < 1 for i in ids):
            raise ScenarioError("node ids must be >= 1")
        for endpoint in (self.traffic.source, self.traffic.destination):
            if endpoint not in ids:
                raise ScenarioError(f"traffic endpoint {endpoint} has no trace")
        if self.duration < self.traffic.end:
            raise ScenarioError("duration does not cover the traffic window")


# ---------------------------------------------------------------------------
# Event log


class Record(NamedTuple):
    time: SimTime
    kind: str
    node: NodeId
    peer: NodeId | None
    info: str


class EventLog:
    """Time-ordered record of everything observable that happened in a run."""

    __slots__ = ("records",)

    def __init__(self, records=None):
        self.records: list[Record] = list(records) if records else []

    def append(self, time, kind, node, peer, info) -> None:
        self.records.append(Record(time, kind, node, peer, info))

    def __eq__(self, other) -> bool:
        return isinstance(other, EventLog) and self.records == other.records

    def __len__(self) -> int:
        return len(self.records)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for rec in self.records:
            out[rec.kind] = out.get(rec.kind, 0) + 1
        return out

    def to_csv_bytes(self) -> bytes:
        lines = ["time_ms,kind,node,peer,info"]
        for t, kind, node, peer, info in self.records:
            lines.append(f"{t},{kind},{node},{'' if peer is None else peer},{info}")
        return ("\n".join(lines) + "\n").encode()

    def write_csv(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_csv_bytes())


# ---------------------------------------------------------------------------
# Engine

_HELLO_TIMER, _TC_TIMER, _SWEEP, _TRAFFIC, _HELLO_ARRIVE, _TC_ARRIVE, _DATA = range(7)
_K_HELLO, _K_TC, _K_DATA = 0, 1, 2


class _Packet:
    """Encoded control message; decoded lazily once per packet."""

    __slots__ = ("data", "msg")

    def __init__(self, data: bytes):
        self.data = data
        self.msg = None


class Engine:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.log = EventLog()
        config = scenario.protocol
        self._interval = config.hello_interval_ms
        self._tc_interval = config.tc_interval_ms
        self._dest = scenario.traffic.destination
        self._source = scenario.traffic.source

        self.nodes: dict[NodeId, ProtocolNode] = {}
        self._traces: dict[NodeId, MobilityTrace] = {}
        self._static_pos: dict[NodeId, Position] = {}
        for trace in scenario.nodes:
            self.nodes[trace.node] = ProtocolNode(trace.node, config)
            self._traces[trace.node] = trace
            if trace.is_static():
                self._static_pos[trace.node] = trace.waypoints[0][1]
        self._ids = sorted(self.nodes)
        self._mobile_ids = [i for i in self._ids if i not in self._static_pos]
        self._mobile_waypoints = {
            i: (
                [t for t, _ in self._traces[i].waypoints],
                [p for _, p in self._traces[i].waypoints],
            )
            for i in self._mobile_ids
        }

        self._queue: list = []
        self._seq = 0
        self._rngs: dict[tuple, random.Random] = {}
        self._probe_deadline: dict[NodeId, dict[NodeId, SimTime]] = {
            i: {} for i in self._ids
        }
        self._last_route: dict[NodeId, tuple | None] = {}
        self._static_targets = self._build_static_targets()
        self._unicast_cache: dict[tuple[NodeId, NodeId], tuple] = {}

    # -- randomness ---------------------------------------------------------

    def _rng(self, src: NodeId, dst: NodeId, kind: int) -> random.Random:
        key = (src, dst, kind)
        rng = self._rngs.get(key)
        if rng is None:
            token = (
                f"{self.scenario.seed}:{self.scenario.channel.rng_seed}:"
                f"{src}:{dst}:{kind}"
            )
            digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
            rng = random.Random(int.from_bytes(digest, "big"))
            self._rngs[key] = rng
        return rng

    def _build_static_targets(self):
        """Per static sender, the static receivers in range with cached p and draw."""
        channel = self.scenario.channel
        out: dict[NodeId, dict[int, list]] = {}
        for src, spos in self._static_pos.items():
            per_kind: dict[int, list] = {}
            for kind in (_K_HELLO, _K_TC):
                targets = []
                for dst, dpos in sorted(self._static_pos.items()):
                    if dst == src:
                        continue
                    p = delivery_probability(channel, euclidean_distance(spos, dpos))
                    if p >= P_MIN:
                        targets.append((dst, p, self._rng(src, dst, kind).random))
                per_kind[kind] = targets
            out[src] = per_kind
        return out

    # -- positions ----------------------------------------------------------

    def _pos(self, node: NodeId, t: SimTime) -> Position:
        pos = self._static_pos.get(node)
        if pos is not None:
            return pos
        times, points = self._mobile_waypoints[node]
        if t <= times[0]:
            return points[0]
        if t >= times[-1]:
            return points[-1]
        i = bisect.bisect_right(times, t)
        t0, t1 = times[i - 1], times[i]
        p0, p1 = points[i - 1], points[i]
        f = (t - t0) / (t1 - t0)
        return Position(
            p0.x + f * (p1.x - p0.x),
            p0.y + f * (p1.y - p0.y),
            p0.z + f * (p1.z - p0.z),
        )

    # -- scheduling -----------------------------------------------------------

    def _push(self, time: SimTime, kind: int, *args) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind) + args)

    def _broadcast(self, src: NodeId, kind: int, arrive_kind: int, pkt: _Packet, now: SimTime) -> None:
        channel = self.scenario.channel
        arrival = now + PROPAGATION_DELAY_MS
        queue = self._queue
        push = heapq.heappush
        seq = self._seq
        static = self._static_targets.get(src)
        if static is not None:
            for dst, p, draw in static[kind]:
                if draw() < p:
                    seq += 1
                    push(queue, (arrival, seq, arrive_kind, dst, src, pkt))
            others = self._mobile_ids
            spos = self._static_pos[src]
        else:
            others = self._ids
            spos = self._pos(src, now)
        for dst in others:
            if dst == src:
                continue
            p = delivery_probability(channel, euclidean_distance(spos, self._pos(dst, now)))
            if p >= P_MIN and self._rng(src, dst, kind).random() < p:
                seq += 1
                push(queue, (arrival, seq, arrive_kind, dst, src, pkt))
        self._seq = seq

    def _unicast_ok(self, src: NodeId, dst: NodeId, now: SimTime) -> bool:
        cached = self._unicast_cache.get((src, dst))
        if cached is not None:
            p, draw = cached
            return draw() < p
        if src in self._static_pos and dst in self._static_pos:
            p = delivery_probability(
                self.scenario.channel,
                euclidean_distance(self._static_pos[src], self._static_pos[dst]),
            )
            entry = (p, self._rng(src, dst, _K_DATA).random)
            self._unicast_cache[(src, dst)] = entry
            return entry[1]() < p
        p = delivery_probability(
            self.scenario.channel,
            euclidean_distance(self._pos(src, now), self._pos(dst, now)),
        )
        if p < P_MIN:
            return False
        return self._rng(src, dst, _K_DATA).random() < p

    # -- route consultation ---------------------------------------------------

    def _route(self, node_id: NodeId, now: SimTime):
        entry = self.nodes[node_id].route_to(self._dest, now)
        signature = None if entry is None else (entry.next_hop, entry.hop_count)
        if signature != self._last_route.get(node_id, -1):
            self._last_route[node_id] = signature
            if entry is None:
                info = "no_route"
            else:
                info = (
                    f"next_hop={entry.next_hop} hops={entry.hop_count} "
                    f"cost={entry.total_cost:.6g}"
                )
            self.log.append(now, "route_change", node_id, self._dest, info)
        return entry

    # -- main loop -------------------------------------------------------------

    def run(self) -> EventLog:
        scenario = self.scenario
        duration = scenario.duration
        traffic = scenario.traffic
        record_control = scenario.record_control
        interval = self._interval
        nodes = self.nodes
        log = self.log
        queue = self._queue

        for node_id in self._ids:
            self._push(0, _HELLO_TIMER, node_id)
        for node_id in self._ids:
            self._push(self._tc_interval, _TC_TIMER, node_id)
        for node_id in self._ids:
            self._push(interval // 2, _SWEEP, node_id)
        self._push(traffic.start, _TRAFFIC, traffic.start, 0)

        dest = self._dest
        half = interval + interval // 2

        while queue:
            ev = heapq.heappop(queue)
            t = ev[0]
            kind = ev[2]

            if kind == _TC_ARRIVE:
                dst, src, pkt = ev[3], ev[4], ev[5]
                msg = pkt.msg
                if msg is None:
                    msg = pkt.msg = wire.decode_tc(pkt.data)
                forward = nodes[dst].process_tc(msg, t)
                if record_control:
                    log.append(t, "tc_rx", dst, src, f"{msg.originator}:{msg.sequence}")
                if forward:
                    if record_control:
                        log.append(t, "tc_tx", dst, msg.originator, str(msg.sequence))
                    self._broadcast(dst, _K_TC, _TC_ARRIVE, pkt, t)

            elif kind == _DATA:
                node_id, did, ttl, hops, prev = ev[3], ev[4], ev[5], ev[6], ev[7]
                if hops == 0:
                    log.append(t, "data_tx", node_id, dest, str(did))
                if node_id == dest:
                    log.append(t, "data_rx", node_id, prev, f"{did} {hops}")
                    continue
                entry = self._route(node_id, t)
                if entry is None:
                    log.append(t, "data_drop", node_id, None, f"{did} no_route")
                    continue
                if ttl == 0:
                    log.append(t, "data_drop", node_id, None, f"{did} ttl_exceeded")
                    continue
                next_hop = entry.next_hop
                if self._unicast_ok(node_id, next_hop, t):
                    self._push(
                        t + PROPAGATION_DELAY_MS, _DATA, next_hop, did, ttl - 1, hops + 1, node_id
                    )
                else:
                    log.append(t, "data_drop", node_id, next_hop, f"{did} channel_loss")

            elif kind == _HELLO_ARRIVE:
                dst, src, pkt = ev[3], ev[4], ev[5]
                msg = pkt.msg
                if msg is None:
                    msg = pkt.msg = wire.decode_hello(pkt.data)
                node = nodes[dst]
                node.position = self._pos(dst, t)
                node.process_hello(msg, src, t)
                self._probe_deadline[dst][src] = t + half
                if record_control:
                    log.append(t, "hello_rx", dst, src, str(len(msg.neighbors)))

            elif kind == _HELLO_TIMER:
                node_id = ev[3]
                node = nodes[node_id]
                node.position = self._pos(node_id, t)
                msg = node.generate_hello(t)
                pkt = _Packet(wire.encode_hello(msg))
                if record_control:
                    log.append(t, "hello_tx", node_id, None, str(len(msg.neighbors)))
                self._broadcast(node_id, _K_HELLO, _HELLO_ARRIVE, pkt, t)
                if t + interval <= duration:
                    self._push(t + interval, _HELLO_TIMER, node_id)

            elif kind == _TC_TIMER:
                node_id = ev[3]
                node = nodes[node_id]
                msg = node.generate_tc(t)
                pkt = _Packet(wire.encode_tc(msg))
                if record_control:
                    log.append(t, "tc_tx", node_id, node_id, str(msg.sequence))
                self._broadcast(node_id, _K_TC, _TC_ARRIVE, pkt, t)
                if t + self._tc_interval <= duration:
                    self._push(t + self._tc_interval, _TC_TIMER, node_id)

            elif kind == _SWEEP:
                node_id = ev[3]
                node = nodes[node_id]
                node.expire(t)
                deadlines = self._probe_deadline[node_id]
                table = node.neighbor_table
                for nbr in list(table):
                    dl = deadlines.get(nbr)
                    if dl is None:
                        deadlines[nbr] = t + half
                        continue
                    while dl <= t and nbr in table:
                        node.record_missed_probe(nbr, t)
                        dl += interval
                    deadlines[nbr] = dl
                for nbr in [n for n in deadlines if n not in table]:
                    del deadlines[nbr]
                if t + interval <= duration:
                    self._push(t + interval, _SWEEP, node_id)

            elif kind == _TRAFFIC:
                window_start, did_base = ev[3], ev[4]
                dps = traffic.datagrams_per_second
                for i in range(dps):
                    et = window_start + round(i * 1000 / dps)
                    if et < traffic.end:
                        self._push(et, _DATA, self._source, did_base + i, DATA_TTL, 0, -1)
                nxt = window_start + 1000
                if nxt < traffic.end:
                    self._push(nxt, _TRAFFIC, nxt, did_base + dps)

        return self.log


def run(scenario: Scenario) -> EventLog:
    """Run one scenario to completion and return its event log."""
    return Engine(scenario).run()
