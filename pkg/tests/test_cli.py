from pathlib import Path

import pytest

from skymesh import cli
from skymesh.model import Position
from skymesh.scenarios import DlrSeries
from skymesh.sim import MobilityTrace, write_trace_csv


def write_tiny_traces(tmp_path) -> Path:
    path = tmp_path / "traces.csv"
    write_trace_csv(
        path,
        [
            MobilityTrace(1, ((0, Position(0.0, 0.0, 0.0)),)),
            MobilityTrace(2, ((0, Position(350.0, 0.0, 0.0)), (8000, Position(350.0, 0.0, 0.0)))),
            MobilityTrace(3, ((0, Position(180.0, 0.0, 0.0)),)),
        ],
    )
    return path


def run_cli(args):
    return cli.main(args)


def test_run_writes_expected_files(tmp_path):
    out = tmp_path / "out"
    code = run_cli(
        [
            "run", f"--scenario=file:{write_tiny_traces(tmp_path)}",
            "--algorithm", "predictive_olsr", "--runs", "2", "--seed", "7",
            "--output-dir", str(out),
        ]
    )
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["dlr_avg.csv", "dlr_run_000.csv", "dlr_run_001.csv", "summary.txt"]
    summary = dict(
        line.split("=", 1) for line in (out / "summary.txt").read_text().splitlines()
    )
    assert summary["algorithm"] == "predictive_olsr"
    assert summary["runs"] == "2"
    assert set(summary) == {"algorithm", "runs", "outage_percent", "mean_dlr", "max_dlr"}
    # CSVs parse back losslessly
    parsed = DlrSeries.from_csv(out / "dlr_avg.csv")
    assert [w.dlr for w in parsed.windows] == pytest.approx(
        [float(x.split(",")[3]) for x in (out / "dlr_avg.csv").read_text().splitlines()[1:]]
    )


def test_run_emit_event_log(tmp_path):
    out = tmp_path / "out"
    code = run_cli(
        [
            "run", f"--scenario=file:{write_tiny_traces(tmp_path)}",
            "--runs", "1", "--seed", "3", "--output-dir", str(out), "--emit-event-log",
        ]
    )
    assert code == 0
    events = (out / "events_run_000.csv").read_text().splitlines()
    assert events[0] == "time_ms,kind,node,peer,info"
    assert len(events) > 10


def test_invalid_alpha_is_rejected_with_range(tmp_path, capsys):
    code = run_cli(
        ["run", "--alpha", "1.5", "--runs", "1", "--output-dir", str(tmp_path / "x")]
    )
    assert code != 0
    err = capsys.readouterr().err
    assert "alpha" in err and "[0, 1]" in err
    assert not (tmp_path / "x" / "summary.txt").exists()


def test_identical_specs_produce_identical_bytes(tmp_path):
    trace = write_tiny_traces(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli(
            ["run", f"--scenario=file:{trace}", "--runs", "2", "--seed", "11",
             "--output-dir", str(out), "--emit-event-log"]
        ) == 0
        outs.append(out)
    for name in ("dlr_avg.csv", "dlr_run_000.csv", "summary.txt", "events_run_001.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_compare_self_has_unit_ratio(tmp_path, capsys):
    trace = write_tiny_traces(tmp_path)
    code = run_cli(
        ["compare", f"--scenario=file:{trace}", "--algorithm-a", "olsr_etx",
         "--algorithm-b", "olsr_etx", "--runs", "1", "--seed", "5",
         "--output-dir", str(tmp_path / "cmp")]
    )
    assert code == 0
    table = capsys.readouterr().out
    assert "outage_percent" in table and "mean_dlr" in table and "max_dlr" in table
    for line in table.splitlines()[1:]:
        assert line.split()[-1] == "1.0000"
    assert (tmp_path / "cmp" / "compare.txt").read_text() == table


def test_compare_two_algorithms(tmp_path, capsys):
    trace = write_tiny_traces(tmp_path)
    code = run_cli(
        ["compare", f"--scenario=file:{trace}", "--runs", "1", "--seed", "5"]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "olsr_etx" in out and "predictive_olsr" in out


def test_compare_rejects_mismatched_scenarios():
    spec_a = cli.RunSpec(scenario="two_relay")
    spec_b = cli.RunSpec(scenario="open_area")
    with pytest.raises(ValueError, match="scenario"):
        cli.compare_runs(spec_a, spec_b)


def test_config_file_with_flag_override(tmp_path, capsys):
    trace = write_tiny_traces(tmp_path)
    config = tmp_path / "run.conf"
    config.write_text(
        f"scenario=file:{trace}\n"
        "runs=1\n"
        "seed=9\n"
        "alpha=0.3  # comment\n"
        "output-dir=ignored\n"
    )
    out = tmp_path / "cfg_out"
    code = run_cli(
        ["run", "--config", str(config), "--output-dir", str(out), "--runs", "1"]
    )
    assert code == 0
    assert (out / "summary.txt").exists()


def test_config_file_rejects_unknown_key(tmp_path, capsys):
    config = tmp_path / "bad.conf"
    config.write_text("no_such_option=1\n")
    code = run_cli(["run", "--config", str(config)])
    assert code != 0
    assert "no_such_option" in capsys.readouterr().err


def test_unknown_algorithm_rejected(tmp_path, capsys):
    with pytest.raises(SystemExit):
        run_cli(["run", "--algorithm", "hop_count"])


def test_help_enumerates_every_flag(capsys):
    with pytest.raises(SystemExit):
        run_cli(["run", "--help"])
    text = capsys.readouterr().out
    for flag in (
        "--scenario", "--algorithm", "--runs", "--seed", "--alpha", "--beta",
        "--gamma", "--hello-interval", "--tc-interval", "--d50", "--steepness",
        "--output-dir", "--emit-event-log", "--workers", "--config",
    ):
        assert flag in text


def test_d50_override_reaches_channel(tmp_path):
    spec = cli.RunSpec(
        scenario="two_relay", overrides={"d50": 111.0, "steepness": 0.5}
    )
    scenario = spec.builder()(spec.protocol(), 1)
    assert scenario.channel.d50 == 111.0
    assert scenario.channel.steepness == 0.5
