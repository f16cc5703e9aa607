"""Command-line front end: run replicated experiments and compare algorithms.

Defaults reproduce the benchmark settings: Hello interval 0.5 s for both
algorithms, link-quality aging 0.2 for olsr_etx and 0.05 for
predictive_olsr, speed weighting beta 0.2 and speed smoothing gamma 0.04.
A bare `skymesh run` therefore reruns the two-relay experiment as used by
the acceptance suite.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import scenarios, sim
from .model import PLAIN_ETX, SPEED_WEIGHTED_ETX, ProtocolConfig

ALGORITHMS = {
    "olsr_etx": {"metric_kind": PLAIN_ETX, "alpha": 0.2},
    "predictive_olsr": {"metric_kind": SPEED_WEIGHTED_ETX, "alpha": 0.05},
}

SCENARIO_BUILDERS = {
    "two_relay": scenarios.build_two_relay,
    "open_area": scenarios.build_open_area,
}

# Flags that tune the protocol configuration, keyed by config field.
_PROTOCOL_KEYS = ("alpha", "beta", "gamma", "hello_interval", "tc_interval")
_CONFIG_KEYS = _PROTOCOL_KEYS + (
    "scenario",
    "algorithm",
    "runs",
    "seed",
    "d50",
    "steepness",
    "output_dir",
    "emit_event_log",
    "workers",
)


@dataclass(frozen=True)
class RunSpec:
    """One resolved experiment request."""

    scenario: str = "two_relay"
    algorithm: str = "predictive_olsr"
    runs: int = 1
    seed: int = 1
    overrides: dict = field(default_factory=dict)
    output_dir: str = "out"
    emit_event_log: bool = False
    workers: int = 1

    def protocol(self) -> ProtocolConfig:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"algorithm must be one of {sorted(ALGORITHMS)} (got {self.algorithm!r})"
            )
        kwargs = dict(ALGORITHMS[self.algorithm])
        for key in _PROTOCOL_KEYS:
            if self.overrides.get(key) is not None:
                kwargs[key] = self.overrides[key]
        return ProtocolConfig(**kwargs)

    def builder(self):
        if self.scenario in SCENARIO_BUILDERS:
            base = SCENARIO_BUILDERS[self.scenario]
        elif self.scenario.startswith("file:"):
            base = _trace_file_builder(self.scenario[len("file:"):])
        else:
            raise ValueError(
                f"scenario must be two_relay, open_area or file:<path> (got {self.scenario!r})"
            )
        d50 = self.overrides.get("d50")
        steepness = self.overrides.get("steepness")
        if d50 is None and steepness is None:
            return base

        def with_channel(protocol, seed):
            scenario = base(protocol, seed)
            channel = scenario.channel
            channel = sim.ChannelModel(
                d50=channel.d50 if d50 is None else d50,
                steepness=channel.steepness if steepness is None else steepness,
                rng_seed=channel.rng_seed,
            )
            return replace(scenario, channel=channel)

        return with_channel


def _trace_file_builder(path: str):
    traces = sim.read_trace_csv(path)
    end = max(t for trace in traces for t, _ in trace.waypoints)
    end -= end % 1000

    def build(protocol, seed):
        return sim.Scenario(
            nodes=tuple(traces),
            channel=sim.ChannelModel(
                d50=scenarios.CHANNEL_D50,
                steepness=scenarios.CHANNEL_STEEPNESS,
                rng_seed=seed,
            ),
            traffic=sim.TrafficPlan(source=2, destination=1, start=0, end=end),
            protocol=protocol,
            duration=end,
            seed=seed,
        )

    return build


def execute_run(spec: RunSpec) -> dict:
    """Run all replications for one spec and return its result bundle."""
    protocol = spec.protocol()  # validates overrides before any run starts
    results = scenarios.replicate(
        spec.builder(),
        protocol,
        spec.seed,
        spec.runs,
        keep_logs=spec.emit_event_log,
        workers=spec.workers,
    )
    series = [r.dlr for r in results]
    average = scenarios.average_dlr_profile(series)
    outage = scenarios.outage_summary(series)
    dlrs = average.dlrs()
    return {
        "results": results,
        "series": series,
        "average": average,
        "outage": outage,
        "mean_dlr": math.fsum(dlrs) / len(dlrs),
        "max_dlr": max(dlrs),
    }


def _summary_text(spec: RunSpec, bundle: dict) -> str:
    return (
        f"algorithm={spec.algorithm}\n"
        f"runs={spec.runs}\n"
        f"outage_percent={bundle['outage'].outage_percent!r}\n"
        f"mean_dlr={bundle['mean_dlr']!r}\n"
        f"max_dlr={bundle['max_dlr']!r}\n"
    )


def cmd_run(spec: RunSpec) -> int:
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        bundle = execute_run(spec)
        for i, result in enumerate(bundle["results"]):
            path = out_dir / f"dlr_run_{i:03d}.csv"
            result.dlr.write_csv(path)
            written.append(path)
            if spec.emit_event_log and result.log is not None:
                path = out_dir / f"events_run_{i:03d}.csv"
                result.log.write_csv(path)
                written.append(path)
        path = out_dir / "dlr_avg.csv"
        bundle["average"].write_csv(path)
        written.append(path)
        path = out_dir / "summary.txt"
        path.write_text(_summary_text(spec, bundle))
        written.append(path)
    except (ValueError, OSError) as exc:
        for path in written:
            path.unlink(missing_ok=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def compare_runs(spec_a: RunSpec, spec_b: RunSpec) -> str:
    """Side-by-side outage / DLR table for two specs on the same scenario and seed."""
    if spec_a.scenario != spec_b.scenario:
        raise ValueError(
            f"compared specs must share a scenario "
            f"(got {spec_a.scenario!r} vs {spec_b.scenario!r})"
        )
    if spec_a.seed != spec_b.seed or spec_a.runs != spec_b.runs:
        raise ValueError("compared specs must share seed and replication count")
    bundle_a = execute_run(spec_a)
    bundle_b = execute_run(spec_b)

    def ratio(a: float, b: float) -> float:
        if a == b:
            return 1.0
        if a == 0.0:
            return math.inf
        return b / a

    rows = [
        ("outage_percent", bundle_a["outage"].outage_percent, bundle_b["outage"].outage_percent),
        ("mean_dlr", bundle_a["mean_dlr"], bundle_b["mean_dlr"]),
        ("max_dlr", bundle_a["max_dlr"], bundle_b["max_dlr"]),
    ]
    name_a, name_b = spec_a.algorithm, spec_b.algorithm
    if name_a == name_b:
        name_a, name_b = name_a + "(a)", name_b + "(b)"
    lines = [f"{'metric':<16} {name_a:>18} {name_b:>18} {'ratio(b/a)':>12}"]
    for name, a, b in rows:
        lines.append(f"{name:<16} {a:>18.6f} {b:>18.6f} {ratio(a, b):>12.4f}")
    return "\n".join(lines) + "\n"


def cmd_compare(spec_a: RunSpec, spec_b: RunSpec, output_dir: str | None = None) -> int:
    try:
        table = compare_runs(spec_a, spec_b)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(table, end="")
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.txt").write_text(table)
    return 0


# ---------------------------------------------------------------------------
# Argument handling


def _read_config_file(path: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


_INT_KEYS = {"runs", "seed", "workers"}
_FLOAT_KEYS = {"alpha", "beta", "gamma", "hello_interval", "tc_interval", "d50", "steepness"}
_BOOL_KEYS = {"emit_event_log"}


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        return value.lower() in ("1", "true", "yes", "on")
    return value


def _build_spec(args, algorithm: str | None = None) -> RunSpec:
    settings: dict = {}
    if args.config:
        for key, value in _read_config_file(args.config).items():
            settings[key] = _coerce(key, value)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    overrides = {k: settings.pop(k, None) for k in _PROTOCOL_KEYS + ("d50", "steepness")}
    spec = RunSpec(
        scenario=settings.get("scenario", "two_relay"),
        algorithm=algorithm or settings.get("algorithm", "predictive_olsr"),
        runs=settings.get("runs", 1),
        seed=settings.get("seed", 1),
        overrides=overrides,
        output_dir=settings.get("output_dir", "out"),
        emit_event_log=settings.get("emit_event_log", False),
        workers=settings.get("workers", 1),
    )
    spec.protocol()  # fail fast on bad overrides
    return spec


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", choices=None, default=None,
                        help="two_relay, open_area or file:<trace.csv>")
    parser.add_argument("--runs", type=int, default=None, help="replication count")
    parser.add_argument("--seed", type=int, default=None, help="base seed; run i uses seed+i")
    parser.add_argument("--alpha", type=float, default=None, help="link-quality aging in [0,1]")
    parser.add_argument("--beta", type=float, default=None, help="speed weighting exponent, s/m")
    parser.add_argument("--gamma", type=float, default=None, help="speed smoothing in [0,1]")
    parser.add_argument("--hello-interval", type=float, default=None, dest="hello_interval",
                        help="Hello period in seconds")
    parser.add_argument("--tc-interval", type=float, default=None, dest="tc_interval",
                        help="TC period in seconds")
    parser.add_argument("--d50", type=float, default=None, help="channel 50%% loss distance, m")
    parser.add_argument("--steepness", type=float, default=None, help="channel steepness, 1/m")
    parser.add_argument("--output-dir", default=None, dest="output_dir", help="output directory")
    parser.add_argument("--emit-event-log", action="store_const", const=True, default=None,
                        dest="emit_event_log", help="also write per-run event logs")
    parser.add_argument("--workers", type=int, default=None, help="parallel replication workers")
    parser.add_argument("--config", default=None, help="key=value config file; flags win")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="skymesh",
                                     description="UAV ad-hoc routing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one algorithm and write DLR/outage files")
    run_parser.add_argument("--algorithm", choices=sorted(ALGORITHMS), default=None)
    _add_common_flags(run_parser)

    cmp_parser = sub.add_parser("compare", help="run two algorithms on the same scenario")
    cmp_parser.add_argument("--algorithm-a", choices=sorted(ALGORITHMS), default="olsr_etx")
    cmp_parser.add_argument("--algorithm-b", choices=sorted(ALGORITHMS),
                            default="predictive_olsr")
    _add_common_flags(cmp_parser)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(_build_spec(args))
        spec_a = _build_spec(args, algorithm=args.algorithm_a)
        spec_b = _build_spec(args, algorithm=args.algorithm_b)
        return cmd_compare(spec_a, spec_b, output_dir=args.output_dir)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
