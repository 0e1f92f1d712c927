import json
import subprocess
import sys
from pathlib import Path

import pytest

from opphunt.cli import EXIT_INVALID, EXIT_OK, EXIT_REFUTED, ConfigError, config_from_dict, load_config, main
from opphunt.strategy import ZenoSchedule

FIXTURE = Path(__file__).parent / "fixtures" / "zeno_example.txt"


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


def run(args, capsys):
    code = main(args + ["--quiet"])
    return code, capsys.readouterr().out


def test_zero_lambda_names_field(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, {"params": {"lambda": 0}}))
    assert "params.lambda" in str(err.value)


def test_bad_budget_and_kind_name_fields():
    with pytest.raises(ConfigError, match="sim.budget"):
        config_from_dict({"sim": {"budget": 0}})
    with pytest.raises(ConfigError, match="strategies.player2"):
        config_from_dict({"strategies": {"player2": {"kind": "telepathy"}}})
    with pytest.raises(ConfigError, match="params.colour"):
        config_from_dict({"params": {"colour": 1}})


def test_parse_failure_reports_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, '{\n  "params": {\n    "r": 0.1,\n  }\n}'))
    assert ":4:" in str(err.value)


def test_missing_sim_gets_defaults(tmp_path):
    cfg = load_config(write(tmp_path, {"params": {"r": 0.2}}))
    echoed = cfg.to_dict()
    assert echoed["sim"]["replications"] == 10_000 and echoed["sim"]["budget"] == 100_000
    assert echoed["sim"]["master_seed"] == 0
    assert echoed["params"]["r"] == 0.2


def test_zeno_kind_builds_example_schedule():
    cfg = config_from_dict({"strategies": {"player1": {"kind": "zeno"}}})
    s = cfg.strategy(1)
    assert isinstance(s, ZenoSchedule)
    from opphunt.history import History
    h, times = History.empty(), []
    for _ in range(3):
        t = h.final_time + s.next_distribution(h).atoms[0][0]
        times.append(t)
        h = h.append_inspection(t, (1,), (1,))
    assert times == pytest.approx([1 / 2, 2 / 3, 3 / 4], abs=1e-15)


def test_demo_zeno_output(capsys):
    code, out = run(["demo-zeno"], capsys)
    assert code == EXIT_OK
    block = out.split("\n\n")[0] + "\n"
    assert block == FIXTURE.read_text()
    assert "w,1.0" in out and "w*2,2.0" in out and "w+1,1.5" in out
    assert "expected_cost,divergent" in out


def test_evaluate_never_never_is_all_zero(tmp_path, capsys):
    cfg = write(tmp_path, {"strategies": {"player1": {"kind": "never"}, "player2": {"kind": "never"}}})
    code, out = run(["evaluate", "--config", cfg, "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == EXIT_OK and doc["schema_version"] == 1
    for p in doc["players"]:
        for k in ("u_tilde", "p_tilde", "q_factor", "lambda_ratio", "fixed_point_value"):
            assert p[k] == 0.0


def test_verify_exit_codes(tmp_path, capsys):
    ok = write(tmp_path, {"params": {"c": 2.0, "v1": 1.0, "v2": 0.0},
                          "strategies": {"player1": {"kind": "never"}, "player2": {"kind": "never"}}}, "ok.json")
    assert run(["verify", "--config", ok], capsys)[0] == EXIT_OK
    bad = write(tmp_path, {"params": {"c": 0.0, "v2": 0.0},
                           "strategies": {"player1": {"kind": "never"},
                                          "player2": {"kind": "deterministic", "tau": 1.0}}}, "bad.json")
    assert run(["verify", "--config", bad], capsys)[0] == EXIT_REFUTED
    invalid = write(tmp_path, {"params": {"lambda": -1}}, "invalid.json")
    assert run(["verify", "--config", invalid], capsys)[0] == EXIT_INVALID


def test_evaluate_rejects_non_markov(tmp_path, capsys):
    cfg = write(tmp_path, {"strategies": {"player1": {"kind": "zeno"}}})
    assert run(["evaluate", "--config", cfg], capsys)[0] == EXIT_INVALID


def test_simulate_is_reproducible(tmp_path, capsys):
    cfg = write(tmp_path, {"strategies": {"player1": {"kind": "deterministic", "tau": 0.5},
                                          "player2": {"kind": "exponential", "mu": 1.0}}})
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        assert main(["simulate", "--config", cfg, "--seed", "9", "--replications", "500",
                     "--out", str(out), "--quiet"]) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header, row = outs[0].decode().splitlines()
    assert header == "replications,mean1,se1,mean2,se2,discovery_rate,truncation_rate"
    assert row.startswith("500,")


def test_simulate_traces(tmp_path, capsys):
    traces = tmp_path / "plays.txt"
    code, _ = run(["simulate", "--replications", "20", "--traces", str(traces)], capsys)
    assert code == EXIT_OK and traces.read_text().count("OUTCOME") == 10


def test_respond_reports_both_routes(tmp_path, capsys):
    cfg = write(tmp_path, {"strategies": {"player1": {"kind": "zeno"}, "player2": {"kind": "never"}}})
    code, out = run(["respond", "--config", cfg, "--replications", "10", "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["extraction"]["strategy"] == {"kind": "deterministic", "tau": 0.5}
    assert doc["best_response"]["value"] >= doc["extraction"]["value"]
    assert "config" in doc


def test_echo_goes_to_stderr(capsys):
    assert main(["demo-zeno"]) == EXIT_OK
    err = capsys.readouterr().err
    assert err.startswith("# effective config: ")
    json.loads(err.split(": ", 1)[1])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "opphunt", "demo-zeno", "--quiet"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("#history v1")
