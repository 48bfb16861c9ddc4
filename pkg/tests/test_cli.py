"""Front end: YAML parsing with strict keys, manifest reproducibility, output
files, and process exit codes."""

import json

import pytest

import ltvmpc.cli as cli
from ltvmpc.cli import ConfigError, load_config, main, parse_config
from ltvmpc.sim import SimLog

MINIMAL = """
name: tiny
trajectory: {kind: sinusoid}
"""

SHORT_RUN = """
name: tiny
duration: 30
trajectory: {kind: sinusoid}
mpc: {N: 8}
"""


def test_minimal_config_materializes_defaults():
    scn = parse_config(MINIMAL).scenario
    assert scn.name == "tiny"
    assert scn.duration == 600
    assert scn.cfg.N == 10
    assert scn.cfg.beta == 2.0
    assert scn.cfg.avoidance_mode == "off"
    assert scn.Q_diag == (1.0, 1.0, 0.5)
    assert scn.seed == 0


def test_invalid_horizon_is_a_config_error():
    with pytest.raises(ConfigError, match="horizon"):
        parse_config("name: x\ntrajectory: {kind: line}\nmpc: {N: 0}\n")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key 'trajectory.speeed'"):
        parse_config("name: x\ntrajectory: {kind: line, speeed: 1.0}\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("name: x\ntrajectory: {kind: line}\nextra: 1\n")


def test_sweep_section_parsed():
    bundle = parse_config(SHORT_RUN + "sweep: {param: beta, values: [0.1, 1, 2, 5]}\n")
    assert bundle.sweep_spec == ("beta", [0.1, 1, 2, 5])
    with pytest.raises(ConfigError, match="sweep.param"):
        parse_config(SHORT_RUN + "sweep: {param: Q, values: [1]}\n")
    with pytest.raises(ConfigError, match="sweep.values"):
        parse_config(SHORT_RUN + "sweep: {param: N, values: []}\n")


def write_config(tmp_path, text, name="scn.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_run_writes_expected_files(tmp_path, capsys):
    cfg = write_config(tmp_path, SHORT_RUN)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "tiny_log.csv").exists()
    assert (out / "tiny_metrics.json").exists()
    assert (out / "manifest.json").exists()
    for part in ("trajectory", "errors", "controls", "costs"):
        assert (out / f"tiny_{part}.csv").exists()
    metrics = json.loads((out / "tiny_metrics.json").read_text())
    assert metrics["converged"] is True
    assert "tiny: 30 steps" in capsys.readouterr().out


def test_manifest_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SHORT_RUN)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", str(cfg), "--out", str(out1), "--quiet"]) == 0
    manifest = out1 / "manifest.json"
    assert main(["run", "--config", str(manifest), "--out", str(out2),
                 "--quiet"]) == 0
    assert (out1 / "tiny_log.csv").read_bytes() == (out2 / "tiny_log.csv").read_bytes()


def test_manifest_round_trips_scenario(tmp_path):
    text = SHORT_RUN + ("obstacles:\n"
                        "  - {kind: static, position: [3.0, 0.5], radius: 0.4}\n")
    cfg = write_config(tmp_path, text)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    reloaded = load_config(out / "manifest.json").scenario
    assert cli.scenario_to_dict(reloaded) == cli.scenario_to_dict(
        parse_config(text).scenario)


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path, SHORT_RUN)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet",
                 "--seed", "7"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["scenario"]["seed"] == 7


def test_sweep_writes_per_value_logs(tmp_path):
    cfg = write_config(tmp_path, SHORT_RUN +
                       "sweep: {param: N, values: [5, 8]}\n")
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert (out / "tiny_N5_log.csv").exists()
    assert (out / "tiny_N8_log.csv").exists()
    summary = (out / "sweep_summary.csv").read_text().strip().splitlines()
    assert summary[0].startswith("N,")
    assert len(summary) == 3


def test_sweep_without_section_fails(tmp_path, capsys):
    cfg = write_config(tmp_path, SHORT_RUN)
    assert main(["sweep", "--config", str(cfg), "--out",
                 str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_exit_codes_for_bad_invocations(tmp_path, capsys):
    assert main(["explode", "--config", "x.yaml"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = write_config(tmp_path, "name: x\ntrajectory: {kind: line}\nmpc: {N: 0}\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "config error" in err


def test_dump_figures_requires_existing_log(tmp_path, capsys):
    cfg = write_config(tmp_path, SHORT_RUN)
    out = tmp_path / "out"
    assert main(["dump-figures", "--config", str(cfg), "--out", str(out)]) == 2
    assert "run the scenario first" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert main(["dump-figures", "--config", str(cfg), "--out", str(out),
                 "--quiet"]) == 0


def test_halted_run_exits_one(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path, SHORT_RUN)

    def fake_run(scn):
        return SimLog(scn, [], halted=True, halt_reason="forced for the test")

    monkeypatch.setattr(cli, "run_scenario", fake_run)
    assert main(["run", "--config", str(cfg), "--out",
                 str(tmp_path / "o")]) == 1
    assert "halted" in capsys.readouterr().err


def test_compare_lqr_outputs(tmp_path):
    cfg = write_config(tmp_path, SHORT_RUN)
    out = tmp_path / "out"
    assert main(["compare-lqr", "--config", str(cfg), "--out", str(out),
                 "--quiet"]) == 0
    assert (out / "tiny_mpc_log.csv").exists()
    assert (out / "tiny_lqr_log.csv").exists()
    assert (out / "tiny_lqr_compare.csv").exists()


def test_terminal_set_command(tmp_path, capsys):
    cfg = write_config(tmp_path, SHORT_RUN +
                       "terminal_set: {e_max: [1.0, 1.0, 3.14159], c0: 10.0}\n")
    out = tmp_path / "out"
    assert main(["terminal-set", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "tiny_terminal_set.csv").exists()
    assert "all pass" in capsys.readouterr().out
