"""Speed-aware ETX routing for UAV ad-hoc networks, with a deterministic simulator."""

from .model import (
    NodeId,
    Position,
    ProtocolConfig,
    SimTime,
    PLAIN_ETX,
    SPEED_WEIGHTED_ETX,
    euclidean_distance,
)
from .metrics import (
    LinkQualityState,
    SpeedEstimate,
    instantaneous_speed,
    link_etx,
    on_hello_observation,
    route_etx,
    speed_weighted_etx,
    update_receiving_ratio,
    update_speed_ema,
)
from .routing import ProtocolNode, RouteEntry
from .sim import (
    ChannelModel,
    EventLog,
    MobilityTrace,
    Scenario,
    TrafficPlan,
    delivery_probability,
    delivery_trial,
    position_at,
    run,
)
from .scenarios import (
    DlrSeries,
    OutageSummary,
    average_dlr_profile,
    build_open_area,
    build_two_relay,
    compute_dlr,
    outage_summary,
    replicate,
)

__version__ = "0.1.0"
