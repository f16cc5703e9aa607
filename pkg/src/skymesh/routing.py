"""Per-node protocol engine: neighbor sensing, TC flooding, route computation.

Each node runs one ProtocolNode instance.  Hello processing feeds the
per-neighbor link-quality state; TC processing maintains a network-wide
topology database (full flooding with per-originator duplicate
suppression); Dijkstra over local links plus the topology database yields
the routing table.

Each node weights its own local links with its live speed estimates.  TC
advertisements fold the same weighting into the advertised ratios (see
generate_tc), so the whole network prices a link consistently and routes
stay loop-free while nodes move.
"""

from __future__ import annotations

import heapq
import math
from typing import NamedTuple

from . import metrics, wire
from .model import (
    NodeId,
    Position,
    ProtocolConfig,
    SimTime,
    SPEED_WEIGHTED_ETX,
    euclidean_distance,
)


class TopologyEntry(NamedTuple):
    cost: float
    freshness: SimTime
    seq: int


class RouteEntry(NamedTuple):
    next_hop: NodeId
    total_cost: float
    hop_count: int


class ProtocolNode:
    """Protocol state and operations for a single node."""

    def __init__(self, node_id: NodeId, config: ProtocolConfig):
        if node_id < 1:
            raise ValueError(f"node id must be >= 1 (got {node_id})")
        self.node_id = node_id
        self.config = config
        self.position = Position(0.0, 0.0, 0.0)
        self.neighbor_table: dict[NodeId, metrics.LinkQualityState] = {}
        # Advertised links keyed by originator, then advertised neighbor.
        self.topology: dict[NodeId, dict[NodeId, TopologyEntry]] = {}
        self.routing_table: dict[NodeId, RouteEntry] = {}
        self.hello_seq = 0
        self.tc_seq = 0
        # Highest TC sequence seen per originator; bounds re-flooding.
        self.tc_seen: dict[NodeId, int] = {}
        # Topology entries go stale after three missed TC periods.
        self.topology_hold_ms = 3 * config.tc_interval_ms
        self._dirty = True
        # First moment an entry used by the current table goes stale.
        self._valid_until: SimTime = 0

    # -- Hello handling ----------------------------------------------------

    def generate_hello(self, now: SimTime) -> wire.HelloMessage:
        """Build the periodic Hello: own position plus measured forward ratios."""
        self.hello_seq += 1
        blocks = []
        for neighbor, state in self.neighbor_table.items():
            if state.r_reverse > 0.0:
                code = wire.make_link_code(wire.SYM_LINK, wire.SYM_NEIGH)
            else:
                code = wire.make_link_code(wire.ASYM_LINK, wire.NOT_NEIGH)
            blocks.append(wire.NeighborBlock(code, neighbor, state.r_forward))
        return wire.HelloMessage(
            htime=self.config.hello_interval,
            willingness=3,
            position=self.position,
            neighbors=tuple(blocks),
        )

    def process_hello(self, hello: wire.HelloMessage, sender: NodeId, now: SimTime) -> None:
        """Refresh the neighbor entry for the Hello's sender."""
        if sender == self.node_id:
            raise ValueError("hello names this node as its sender")
        state = self.neighbor_table.get(sender)
        if state is None:
            state = metrics.new_link_state(sender)
        reported = None
        for block in hello.neighbors:
            if block.neighbor_address == self.node_id:
                reported = block.lq_forward
                break
        distance = euclidean_distance(self.position, hello.position)
        self.neighbor_table[sender] = metrics.on_hello_observation(
            state,
            hello_seen=True,
            reported_reverse=reported,
            distance=distance,
            now=now,
            config=self.config,
        )
        self._dirty = True

    def record_missed_probe(self, neighbor: NodeId, now: SimTime) -> None:
        """Apply a zero sample for a probe window with no Hello from neighbor."""
        state = self.neighbor_table.get(neighbor)
        if state is None:
            return
        self.neighbor_table[neighbor] = metrics.on_hello_observation(
            state,
            hello_seen=False,
            reported_reverse=None,
            distance=None,
            now=now,
            config=self.config,
        )
        self._dirty = True

    # -- TC handling --------------------------------------------------------

    def generate_tc(self, now: SimTime) -> wire.TcMessage:
        """Advertise all symmetric neighbors with both measured ratios.

        Under the speed-weighted metric the advertised ratios are scaled by
        exp(-v*beta/2) each, so the cost remote nodes reconstruct equals this
        node's own weighted estimate for the link.  Without that, a receding
        link keeps advertising its still-good ratios and remote nodes happily
        route toward it while its owner is already routing away, which wedges
        pairs of nodes into forwarding loops.  Ratios are capped at 1, so an
        approaching link can never advertise a cost below 1.
        """
        self.tc_seq += 1
        weighted = self.config.metric_kind == SPEED_WEIGHTED_ETX
        links = []
        for neighbor, state in self.neighbor_table.items():
            if state.r_forward <= 0.0 or state.r_reverse <= 0.0:
                continue
            r_forward, r_reverse = state.r_forward, state.r_reverse
            if weighted and state.speed.initialized and state.speed.v != 0.0:
                scale = math.exp(-state.speed.v * self.config.beta / 2.0)
                r_forward = min(1.0, r_forward * scale)
                r_reverse = min(1.0, r_reverse * scale)
            links.append(wire.TcLink(neighbor, r_forward, r_reverse))
        return wire.TcMessage(
            originator=self.node_id, sequence=self.tc_seq, advertised=tuple(links)
        )

    def process_tc(self, tc: wire.TcMessage, now: SimTime) -> bool:
        """Store a fresh TC's links; returns True when it should be re-flooded."""
        origin = tc.originator
        if origin == self.node_id:
            return False
        last = self.tc_seen.get(origin)
        if last is not None and tc.sequence <= last:
            return False
        self.tc_seen[origin] = tc.sequence
        # A fresh TC carries the originator's full advertised set, so it
        # replaces whatever the originator previously advertised.  Decoded
        # ratios are already in [0, 1], so the plain ETX is computed inline.
        links: dict[NodeId, TopologyEntry] = {}
        for link in tc.advertised:
            product = link.lq_forward * link.lq_reverse
            if product > 0.0:
                links[link.neighbor_address] = TopologyEntry(
                    1.0 / product, now, tc.sequence
                )
        self.topology[origin] = links
        self._dirty = True
        return True

    # -- Route computation ---------------------------------------------------

    def expire(self, now: SimTime) -> None:
        """Drop neighbor entries past expiry and stale topology entries."""
        changed = False
        for neighbor in [n for n, s in self.neighbor_table.items() if s.expiry <= now]:
            del self.neighbor_table[neighbor]
            changed = True
        stale = now - self.topology_hold_ms
        for origin, links in self.topology.items():
            old = [dst for dst, e in links.items() if e.freshness <= stale]
            for dst in old:
                del links[dst]
                changed = True
        if changed:
            self._dirty = True

    def compute_routes(self, now: SimTime) -> dict[NodeId, RouteEntry]:
        """Dijkstra over local links plus the topology database.

        Ties on total cost break toward the smaller next-hop id, then the
        smaller hop count, so recomputation is fully deterministic.
        """
        self.routing_table = self._dijkstra(self.link_graph(now))
        self._dirty = False
        return self.routing_table

    def link_graph(self, now: SimTime) -> dict[NodeId, list[tuple[NodeId, float]]]:
        """Directed edges used for routing: fresh local links plus TC links.

        Local links take their cost from the configured metric; links learned
        through TCs cost whatever their originator's advertised ratios imply.
        """
        adjacency: dict[NodeId, list[tuple[NodeId, float]]] = {}
        valid_until = None
        local = []
        for neighbor, state in self.neighbor_table.items():
            if state.expiry <= now:
                continue
            if valid_until is None or state.expiry < valid_until:
                valid_until = state.expiry
            cost = metrics.link_cost(state, self.config)
            if cost != metrics.INFINITE_COST:
                local.append((neighbor, cost))
        if local:
            adjacency[self.node_id] = local
        stale = now - self.topology_hold_ms
        hold = self.topology_hold_ms
        for origin, links in self.topology.items():
            if origin == self.node_id:
                continue
            edges = []
            for dst, entry in links.items():
                if entry.freshness > stale:
                    edges.append((dst, entry.cost))
                    deadline = entry.freshness + hold
                    if valid_until is None or deadline < valid_until:
                        valid_until = deadline
            if edges:
                adjacency[origin] = edges
        self._valid_until = 2**62 if valid_until is None else valid_until
        return adjacency

    def _dijkstra(self, adjacency) -> dict[NodeId, RouteEntry]:
        # Labels order lexicographically: total cost, then next hop, then hops.
        source = self.node_id
        best: dict[NodeId, tuple[float, NodeId, int]] = {}
        heap: list[tuple[float, NodeId, int, NodeId]] = []
        for v, cost in adjacency.get(source, ()):
            label = (cost, v, 1)
            if v not in best or label < best[v]:
                best[v] = label
        for v, label in best.items():
            heapq.heappush(heap, label + (v,))
        settled: set[NodeId] = set()
        while heap:
            cost, next_hop, hops, u = heapq.heappop(heap)
            if u in settled or best.get(u) != (cost, next_hop, hops):
                continue
            settled.add(u)
            for v, edge_cost in adjacency.get(u, ()):
                if v == source or v in settled:
                    continue
                label = (cost + edge_cost, next_hop, hops + 1)
                if v not in best or label < best[v]:
                    best[v] = label
                    heapq.heappush(heap, label + (v,))
        return {
            dest: RouteEntry(next_hop, cost, hops)
            for dest, (cost, next_hop, hops) in best.items()
            if dest in settled
        }

    def route_to(self, dest: NodeId, now: SimTime) -> RouteEntry | None:
        """Current route toward dest, recomputing first if state changed or aged."""
        if self._dirty or now >= self._valid_until:
            self.compute_routes(now)
        return self.routing_table.get(dest)
