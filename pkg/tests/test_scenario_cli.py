"""Scenario dialect and the command-line surface."""

import pytest

from clbf.cli import main
from clbf.scenario import (
    PRESETS,
    ScenarioError,
    load_preset,
    parse_scenario,
    parse_sweep_spec,
    preset_text,
)

GOOD = """\
[network]
n = 6
delta = 3
road_length_m = 900.0
placement = balanced_prefix
hops = 4

[filters]
m1 = 256
k1 = 3
m2 = 64
k2 = 3
seed = 77

[experiment]
trials = 40
base_seed = 123
sweep = k2:1..3
"""


def test_parse_scenario_full():
    scn = parse_scenario(GOOD, name="good")
    assert scn.name == "good"
    assert scn.setup.n_nodes == 6 and scn.setup.h == 4
    assert scn.setup.placement.policy == "balanced_prefix"
    assert scn.trials == 40 and scn.base_seed == 123
    assert scn.sweep == ("k2", (1, 2, 3))
    assert scn.filter_seed == 77


def test_hops_defaults_to_a_full_chain():
    text = GOOD.replace("hops = 4\n", "")
    assert parse_scenario(text).setup.h == 5


def test_optional_keys_default():
    text = GOOD.replace("sweep = k2:1..3\n", "").replace("seed = 77\n", "")
    scn = parse_scenario(text)
    assert scn.sweep is None
    assert scn.filter_seed == 0


@pytest.mark.parametrize(
    "mutation",
    [
        lambda t: t + "\n[extra]\nx = 1\n",  # unknown section
        lambda t: t.replace("k2 = 3", "k2 = 3\nk3 = 9"),  # unknown key
        lambda t: t.replace("m2 = 64\n", ""),  # missing required key
        lambda t: t.replace("[filters]\nm1 = 256\nk1 = 3\nm2 = 64\nk2 = 3\nseed = 77\n\n", ""),
        lambda t: t.replace("trials = 40", "trials = many"),  # not an integer
        lambda t: t.replace("placement = balanced_prefix", "placement = ring"),
        lambda t: t.replace("sweep = k2:1..3", "sweep = m1:1..3"),  # not sweepable
        lambda t: t.replace("sweep = k2:1..3", "sweep = k2:9..3"),  # empty range
        lambda t: t.replace("n = 6", "n = 3"),  # hops exceed the fleet
    ],
)
def test_dialect_violations_are_fatal(mutation):
    with pytest.raises(ScenarioError):
        parse_scenario(mutation(GOOD))


def test_placement_grammar():
    text = GOOD.replace("placement = balanced_prefix", "placement = uniform_per_segment:2")
    assert parse_scenario(text).setup.placement.per_segment == 2
    text = GOOD.replace("placement = balanced_prefix", "placement = explicit:1,1,2,2,3")
    assert parse_scenario(text).setup.placement.segments == (1, 1, 2, 2, 3)
    text = GOOD.replace("placement = balanced_prefix", "placement = free")
    assert parse_scenario(text).setup.placement.policy == "free"
    with pytest.raises(ScenarioError):
        parse_scenario(GOOD.replace("placement = balanced_prefix", "placement = explicit:"))
    with pytest.raises(ScenarioError):
        parse_scenario(
            GOOD.replace("placement = balanced_prefix", "placement = uniform_per_segment")
        )


def test_sweep_spec_grammar():
    assert parse_sweep_spec("m2:100,200,300") == ("m2", (100, 200, 300))
    assert parse_sweep_spec(" delta : 2..4 ") == ("delta", (2, 3, 4))
    for bad in ("k2", "k2:", "k2:x..3", "k2:1,two", "width:1..3"):
        with pytest.raises(ScenarioError):
            parse_sweep_spec(bad)


def test_presets_parse_and_stay_runnable():
    assert PRESETS == ("hash-sweep-d8", "hash-sweep-d16", "width-sweep", "segment-sweep")
    for name in PRESETS:
        scn = load_preset(name)
        assert scn.sweep is not None
        assert scn.trials == 10000
        assert "[network]" in preset_text(name)
    with pytest.raises(ScenarioError):
        load_preset("nope")


# ---------------------------------------------------------------------------
# command line


def test_cli_analyze_point(capsys):
    rc = main(["analyze", "--m2", "64", "--k2", "3", "--hops", "4", "--delta", "3"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "false-positive probability: " in out
    assert "clamped: no" in out or "clamped: yes" in out


def test_cli_analyze_needs_all_parameters(capsys):
    rc = main(["analyze", "--m2", "64", "--k2", "3"])
    assert rc == 2
    assert "needs" in capsys.readouterr().err


def test_cli_analyze_sweep_csv(capsys):
    rc = main(
        ["analyze", "--m2", "64", "--k2", "3", "--hops", "4", "--delta", "3",
         "--sweep", "k2:1..4", "--backend", "oracle"]
    )
    out = capsys.readouterr().out
    assert rc == 0
    lines = out.strip().split("\n")
    assert lines[0] == "# schema: clbf.analyze.v1"
    assert len(lines) == 2 + 4


def test_cli_analyze_compare_histograms(capsys):
    rc = main(["analyze", "--compare-histograms", "--delta", "2", "--hops", "3"])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("# schema: clbf.fj-comparison.v1")


def test_cli_simulate_scenario_file(tmp_path, capsys):
    scenario = tmp_path / "tiny.ini"
    scenario.write_text(GOOD.replace("sweep = k2:1..3", "sweep = k2:2..3"))
    rc = main(["simulate", "--scenario", str(scenario), "--trials", "60",
               "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    csv = (tmp_path / "tiny.csv").read_text()
    assert csv.startswith("# schema: clbf.sweep.v1")
    assert len(csv.strip().split("\n")) == 2 + 2
    assert "empirical argmin" in out


def test_cli_simulate_point_mode(tmp_path):
    scenario = tmp_path / "point.ini"
    scenario.write_text(GOOD.replace("sweep = k2:1..3\n", ""))
    rc = main(["simulate", "--scenario", str(scenario), "--trials", "50",
               "--out", str(tmp_path)])
    assert rc == 0
    csv = (tmp_path / "point.csv").read_text()
    assert csv.startswith("# schema: clbf.point.v1")


def test_cli_simulate_missing_file(tmp_path, capsys):
    rc = main(["simulate", "--scenario", str(tmp_path / "absent.ini")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_cli_simulate_bad_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(GOOD.replace("[network]", "[netwrk]"))
    rc = main(["simulate", "--scenario", str(bad)])
    assert rc == 2
    assert "scenario error" in capsys.readouterr().err


def test_cli_optimize_k2_mode(capsys):
    rc = main(["optimize", "--m2", "64", "--hops", "4", "--delta", "3"])
    assert rc == 0
    assert capsys.readouterr().out.startswith("k2=")


def test_cli_optimize_budget_mode(capsys):
    rc = main(["optimize", "--budget", "1024", "--hops", "4", "--delta", "3",
               "--nodes", "8"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "edge filter: m1=" in out and "location filter: m2=" in out


def test_cli_optimize_budget_needs_nodes(capsys):
    rc = main(["optimize", "--budget", "1024", "--hops", "4", "--delta", "3"])
    assert rc == 2


def test_cli_optimize_infeasible(capsys):
    rc = main(["optimize", "--budget", "64", "--hops", "10", "--delta", "4",
               "--nodes", "64", "--eps1", "1e-9"])
    assert rc == 3
    assert "infeasible" in capsys.readouterr().err


def test_cli_trace_replays_one_trial(capsys):
    rc = main(["trace", "--preset", "hash-sweep-d8", "--point", "3", "--trial", "5"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "path (unit-outward):" in out
    assert "classification:" in out
    assert "packet: " in out


def test_cli_trace_free_placement_scenario(tmp_path, capsys):
    scenario = tmp_path / "free.ini"
    scenario.write_text(GOOD.replace("placement = balanced_prefix", "placement = free"))
    rc = main(["trace", "--scenario", str(scenario)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "classification:" in out


def test_cli_trace_point_out_of_range(capsys):
    rc = main(["trace", "--preset", "hash-sweep-d8", "--point", "99"])
    assert rc == 2


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
