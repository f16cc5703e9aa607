import math
import random

import pytest

from skymesh.model import Position, ProtocolConfig
from skymesh.sim import (
    ChannelModel,
    MobilityTrace,
    Scenario,
    ScenarioError,
    TrafficPlan,
    delivery_probability,
    delivery_trial,
    position_at,
    read_trace_csv,
    run,
    write_trace_csv,
)

CONFIG = ProtocolConfig(alpha=0.2, metric_kind="plain_etx")


def static(node, x, y=0.0):
    return MobilityTrace(node, ((0, Position(x, y, 0.0)),))


def make_scenario(nodes, channel, duration_ms, seed=1, config=CONFIG):
    return Scenario(
        nodes=tuple(nodes),
        channel=channel,
        traffic=TrafficPlan(source=2, destination=1, start=0, end=duration_ms),
        protocol=config,
        duration=duration_ms,
        seed=seed,
    )


# -- mobility interpolation -----------------------------------------------------


def test_position_clamped_before_first_waypoint():
    trace = MobilityTrace(1, ((1000, Position(5, 5, 5)), (2000, Position(9, 9, 9))))
    assert position_at(trace, 0) == Position(5, 5, 5)
    assert position_at(trace, 99_999) == Position(9, 9, 9)


def test_position_midpoint():
    trace = MobilityTrace(1, ((0, Position(0, 0, 0)), (10_000, Position(100, 0, 0))))
    assert position_at(trace, 5_000) == Position(50, 0, 0)


def test_position_matches_piecewise_linear_oracle():
    rng = random.Random(8)
    for _ in range(50):
        times = sorted(rng.sample(range(0, 100_000), rng.randint(2, 6)))
        points = [
            (t, Position(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(0, 50)))
            for t in times
        ]
        trace = MobilityTrace(1, tuple(points))
        for _ in range(20):
            t = rng.randint(0, 100_000)
            # independent piecewise-linear evaluation
            if t <= times[0]:
                expected = points[0][1]
            elif t >= times[-1]:
                expected = points[-1][1]
            else:
                for (t0, p0), (t1, p1) in zip(points, points[1:]):
                    if t0 <= t <= t1:
                        w = (t - t0) / (t1 - t0)
                        expected = Position(
                            p0.x * (1 - w) + p1.x * w,
                            p0.y * (1 - w) + p1.y * w,
                            p0.z * (1 - w) + p1.z * w,
                        )
                        break
            got = position_at(trace, t)
            assert got.x == pytest.approx(expected.x, abs=1e-9)
            assert got.y == pytest.approx(expected.y, abs=1e-9)
            assert got.z == pytest.approx(expected.z, abs=1e-9)


def test_trace_requires_increasing_times():
    with pytest.raises(ScenarioError):
        MobilityTrace(1, ((0, Position(0, 0, 0)), (0, Position(1, 1, 1))))
    with pytest.raises(ScenarioError):
        MobilityTrace(1, ())


def test_trace_csv_round_trip(tmp_path):
    traces = [
        MobilityTrace(1, ((0, Position(0.5, -1.25, 3.0)),)),
        MobilityTrace(2, ((0, Position(0, 0, 0)), (5000, Position(10, 20, 30)))),
    ]
    path = tmp_path / "traces.csv"
    write_trace_csv(path, traces)
    assert read_trace_csv(path) == traces


# -- channel ----------------------------------------------------------------------


def test_delivery_probability_midpoint():
    model = ChannelModel(d50=300.0, steepness=0.05)
    assert delivery_probability(model, 300.0) == 0.5
    assert delivery_trial(model, 300.0, 0.49)
    assert not delivery_trial(model, 300.0, 0.51)


def test_delivery_probability_at_zero_distance():
    model = ChannelModel(d50=300.0, steepness=0.05)
    expected = 1.0 / (1.0 + math.exp(0.05 * (0.0 - 300.0)))
    assert delivery_probability(model, 0.0) == pytest.approx(expected, abs=1e-15)
    assert 1.0 - delivery_probability(model, 0.0) == pytest.approx(3.059e-7, rel=1e-3)


def test_channel_calibration_points():
    model = ChannelModel(d50=300.0, steepness=0.05)
    assert delivery_probability(model, 150.0) >= 0.99
    assert delivery_probability(model, 450.0) <= 0.01
    distances = [0, 100, 200, 300, 400, 500, 1e6]
    probs = [delivery_probability(model, d) for d in distances]
    assert all(0.0 <= p <= 1.0 for p in probs)
    assert probs == sorted(probs, reverse=True)


def test_delivery_monte_carlo_within_binomial_bounds():
    model = ChannelModel(d50=300.0, steepness=0.05)
    p = delivery_probability(model, 280.0)
    rng = random.Random(42)
    n = 100_000
    hits = sum(delivery_trial(model, 280.0, rng.random()) for _ in range(n))
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) <= 3 * sigma


def test_delivery_trial_validates_inputs():
    model = ChannelModel()
    with pytest.raises(ValueError):
        delivery_trial(model, -1.0, 0.5)
    with pytest.raises(ValueError):
        delivery_trial(model, 10.0, 1.0)


# -- scenario validation --------------------------------------------------------


def test_scenario_rejects_duplicate_ids():
    with pytest.raises(ScenarioError, match="duplicate"):
        make_scenario([static(1, 0), static(1, 10), static(2, 5)], ChannelModel(), 5000)


def test_scenario_rejects_missing_endpoint():
    with pytest.raises(ScenarioError, match="endpoint"):
        make_scenario([static(1, 0), static(3, 10)], ChannelModel(), 5000)


def test_scenario_rejects_short_duration():
    with pytest.raises(ScenarioError, match="duration"):
        Scenario(
            nodes=(static(1, 0), static(2, 10)),
            channel=ChannelModel(),
            traffic=TrafficPlan(source=2, destination=1, start=0, end=10_000),
            protocol=CONFIG,
            duration=5_000,
        )


# -- end-to-end runs -------------------------------------------------------------


def test_lossless_two_node_run():
    scenario = make_scenario(
        [static(1, 0.0), static(2, 50.0)], ChannelModel(d50=1e8), 10_000
    )
    log = run(scenario)
    counts = log.counts()
    assert counts["data_tx"] == 850
    # Everything sent after the route exists is delivered; the only losses
    # are the no-route drops while the first Hellos are still in flight.
    drops = [r for r in log.records if r.kind == "data_drop"]
    assert all(r.info.endswith("no_route") for r in drops)
    assert all(r.time < 1200 for r in drops)
    assert counts["data_rx"] + counts["data_drop"] == counts["data_tx"]


def test_relay_scenario_converges_to_two_hops():
    scenario = make_scenario(
        [static(1, 0.0), static(2, 400.0), static(3, 200.0)],
        ChannelModel(d50=300.0, steepness=0.05),
        20_000,
    )
    log = run(scenario)
    # the source's route to the destination goes through the relay
    changes = [
        r for r in log.records
        if r.kind == "route_change" and r.node == 2 and "next_hop=3" in r.info
    ]
    assert changes, "no route through the relay was ever logged"
    hops = [int(r.info.split()[1]) for r in log.records if r.kind == "data_rx"]
    assert hops and sorted(set(hops))[0] >= 2
    late_rx = [r for r in log.records if r.kind == "data_rx" and r.time >= 5_000]
    late_tx = [r for r in log.records if r.kind == "data_tx" and r.time >= 5_000]
    assert len(late_rx) / len(late_tx) > 0.9


def test_same_seed_runs_are_byte_identical():
    scenario = make_scenario(
        [static(1, 0.0), static(2, 400.0), static(3, 200.0)],
        ChannelModel(d50=300.0, steepness=0.05, rng_seed=7),
        15_000,
        seed=7,
    )
    log_a = run(scenario)
    log_b = run(scenario)
    assert log_a == log_b
    assert log_a.to_csv_bytes() == log_b.to_csv_bytes()


def test_different_seeds_differ():
    nodes = [static(1, 0.0), static(2, 290.0)]
    channel = ChannelModel(d50=300.0, steepness=0.05)
    log_a = run(make_scenario(nodes, channel, 10_000, seed=1))
    log_b = run(make_scenario(nodes, channel, 10_000, seed=2))
    assert log_a != log_b


def test_conservation_and_causality():
    scenario = make_scenario(
        [static(1, 0.0), static(2, 350.0), static(3, 180.0)],
        ChannelModel(d50=300.0, steepness=0.05),
        15_000,
    )
    log = run(scenario)
    counts = log.counts()
    assert counts["data_tx"] == counts.get("data_rx", 0) + counts.get("data_drop", 0)
    tx_times = {
        int(r.info): r.time for r in log.records if r.kind == "data_tx"
    }
    for r in log.records:
        if r.kind != "data_rx":
            continue
        datagram, hops = (int(x) for x in r.info.split())
        assert r.time - tx_times[datagram] == hops  # 1 ms per transmission
    # every datagram has exactly one terminal record
    terminal = [
        int(r.info.split()[0])
        for r in log.records
        if r.kind in ("data_rx", "data_drop")
    ]
    assert sorted(terminal) == sorted(tx_times)


def test_event_log_is_time_ordered_and_parses_back():
    import csv
    import io

    scenario = make_scenario(
        [static(1, 0.0), static(2, 100.0)], ChannelModel(d50=300.0), 5_000
    )
    log = run(scenario)
    times = [r.time for r in log.records]
    assert times == sorted(times)
    rows = list(csv.reader(io.StringIO(log.to_csv_bytes().decode())))
    assert rows[0] == ["time_ms", "kind", "node", "peer", "info"]
    assert len(rows) == len(log.records) + 1
    for row, rec in zip(rows[1:], log.records):
        assert int(row[0]) == rec.time
        assert row[1] == rec.kind
        assert int(row[2]) == rec.node
        assert row[3] == ("" if rec.peer is None else str(rec.peer))


def test_control_records_can_be_suppressed():
    nodes = [static(1, 0.0), static(2, 100.0)]
    base = make_scenario(nodes, ChannelModel(d50=300.0), 5_000)
    quiet = Scenario(
        nodes=base.nodes, channel=base.channel, traffic=base.traffic,
        protocol=base.protocol, duration=base.duration, seed=base.seed,
        record_control=False,
    )
    loud_counts = run(base).counts()
    quiet_counts = run(quiet).counts()
    assert loud_counts.get("hello_tx", 0) > 0
    assert "hello_tx" not in quiet_counts and "tc_rx" not in quiet_counts
    assert quiet_counts["data_tx"] == loud_counts["data_tx"]
