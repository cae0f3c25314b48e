from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from flowrx.errors import ConfigError, InsufficientSamples, InvariantViolation
from flowrx.harness import cli
from flowrx.harness.config import (dump_config, format_duration, load_config, parse_config,
                                   parse_duration, parse_limit)
from flowrx.harness.experiments import (MAP_HEADER, exp_cpu_per_packet, exp_headroom,
                                        exp_latency_dist, exp_mitigation_map, path_percentiles)
from flowrx.model import MS, S, US

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_durations():
    assert parse_duration("10us") == 10 * US
    assert parse_duration("1.5ms") == 1500 * US
    assert parse_duration("2s") == 2 * S
    assert parse_duration("250") == 250
    for bad in ("", "-1ms", "fast", "1 parsec"):
        with pytest.raises(ConfigError):
            parse_duration(bad, "k")


@given(st.integers(1, 10**13))
def test_duration_round_trip(ns):
    assert parse_duration(format_duration(ns)) == ns


def test_limits():
    assert parse_limit("7/1ms") == (7, MS)
    assert parse_limit("unbounded") is None
    with pytest.raises(ConfigError, match="sim.global_limit"):
        parse_limit("0/1ms", "sim.global_limit")


@pytest.mark.parametrize("text, key", [
    ("sim.sytem = modified", "sim.sytem"),
    ("sim.until = forever", "sim.until"),
    ("flow.a.protocol = sctp\nflow.a.port = 1\nflow.a.priority = 3", "flow.a.protocol"),
    ("flow.a.port = 1\nflow.a.priority = 33", "flow.a.priority"),
    ("workload.w.protocol = udp\nworkload.w.port = 9\nworkload.w.pattern = constant\n"
     "workload.w.rate = -100", "workload.w.rate"),
    ("workload.w.flow = nope\nworkload.w.pattern = constant\nworkload.w.rate = 1", "workload.w.flow"),
    ("exp.rates = 10, 1000", "exp.rates"),
    ("exp.flood_size = 10", "exp.flood_size"),
    ("sim.seed = 1\nsim.seed = 2", "sim.seed"),
    ("no equals sign here", "line 1"),
])
def test_config_errors_name_the_field(text, key):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert key in str(e.value)


@pytest.mark.parametrize("name", ["simulate", "cpu_per_packet", "latency_dist", "mitigation_map",
                                  "headroom"])
def test_shipped_configs_round_trip(name):
    cfg = load_config(CONFIGS / f"{name}.cfg")
    again = parse_config(dump_config(cfg))
    assert again.sim == cfg.sim and again.exp == cfg.exp
    assert dump_config(again) == dump_config(cfg)


def test_with_seed_changes_poisson_default_seed():
    cfg = load_config(CONFIGS / "simulate.cfg")
    other = cfg.with_seed(99)
    assert other.sim.seed == 99
    assert other.sim.workload != cfg.sim.workload


def test_path_percentiles():
    assert path_percentiles({1000: 100}) == (1.0,) * 5
    p = path_percentiles({1000: 900, 2000: 99, 5000: 1})
    assert p[0] == 1.0 and p[1] == 1.0 and p[2] == 2.0 and p[4] == 5.0
    with pytest.raises(InsufficientSamples):
        path_percentiles({1000: 99})


def small(text=""):
    return parse_config("sim.seed = 3\n" + text)


def test_small_cpu_sweep_is_deterministic():
    cfg = small("exp.rates = 1000, 100000\nexp.duration = 200ms")
    a, b = exp_cpu_per_packet(cfg), exp_cpu_per_packet(cfg)
    assert a.to_csv() == b.to_csv()
    assert len(a.rows) == 10


def test_small_latency_dist_reports_paths():
    cfg = small("exp.flood_size = 10000\nexp.min_samples = 50")
    t = exp_latency_dist(cfg)
    rows = {r[0]: r for r in t.rows}
    assert rows["shortcircuit"][1] == pytest.approx(1.62)
    assert rows["mitigating"][1] == pytest.approx(1.62)
    assert any("insufficient" in n for n in t.notes)


def test_small_map_shape():
    cfg = small("exp.hp_rates = 100, 10000\nexp.lp_rates = 100, 10000\nexp.cell_duration = 200ms")
    t = exp_mitigation_map(cfg)
    assert t.header == MAP_HEADER and len(t.rows) == 8
    assert t.to_csv() == exp_mitigation_map(cfg).to_csv()


# -- CLI ------------------------------------------------------------------------------


def test_cli_validate(capsys):
    assert cli.main(["validate", str(CONFIGS / "simulate.cfg")]) == 0
    assert cli.main(["validate", str(CONFIGS / "bad_rate.cfg")]) == 1
    assert "workload.lp.rate" in capsys.readouterr().err


def test_cli_simulate_stdout(capsys):
    assert cli.main(["simulate", str(CONFIGS / "simulate.cfg"), "--audit"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("flow,sent,received")
    assert "udp:5001" in out and "path,isr,polled" in out


def test_cli_simulate_files(tmp_path):
    assert cli.main(["simulate", str(CONFIGS / "simulate.cfg"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "flows.csv").exists() and (tmp_path / "paths.csv").exists()


def test_cli_exp_writes_csv(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("exp.hp_rates = 100, 1000\nexp.lp_rates = 100\nexp.cell_duration = 100ms\n")
    out = tmp_path / "out"
    assert cli.main(["exp", "mitigation-map", str(cfg), "--out", str(out)]) == 0
    lines = (out / "mitigation_map.csv").read_text().splitlines()
    assert lines[0] == ",".join(MAP_HEADER) and len(lines) == 5


def test_cli_seed_override_is_deterministic(capsys):
    cfg = str(CONFIGS / "simulate.cfg")
    cli.main(["simulate", cfg, "--seed", "5"])
    a = capsys.readouterr().out
    cli.main(["simulate", cfg, "--seed", "5"])
    assert capsys.readouterr().out == a


def test_cli_missing_file_and_plot_without_out(capsys, tmp_path):
    assert cli.main(["simulate", str(tmp_path / "nope.cfg")]) == 1
    assert cli.main(["exp", "headroom", str(CONFIGS / "headroom.cfg"), "--plot"]) == 1


def test_cli_invariant_violation_exit_code(monkeypatch, capsys):
    def boom(_):
        raise InvariantViolation("t=0: synthetic")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["simulate", str(CONFIGS / "simulate.cfg")]) == 2
    assert "invariant violation" in capsys.readouterr().err


def test_cli_unknown_experiment_is_usage_error():
    with pytest.raises(SystemExit) as e:
        cli.main(["exp", "nonsense", str(CONFIGS / "simulate.cfg")])
    assert e.value.code == 2


def test_cli_plot_writes_png(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = tmp_path / "c.cfg"
    cfg.write_text("exp.rates = 1e3, 1e5\nexp.duration = 100ms\n")
    assert cli.main(["exp", "cpu-per-packet", str(cfg), "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "cpu_per_packet.png").stat().st_size > 0


def test_plot_every_table_kind(tmp_path):
    pytest.importorskip("matplotlib")
    from flowrx.harness.plots import plot_table
    cfg = small("exp.flood_size = 10000\nexp.hp_rates = 100, 5179\nexp.lp_rates = 100\n"
                "exp.cell_duration = 100ms\nexp.headroom_duration = 50ms\n")
    for table in (exp_latency_dist(cfg), exp_mitigation_map(cfg), exp_headroom(cfg)):
        assert plot_table(table, tmp_path).exists()
