import json

import pytest

from zollkam.cli import main
from zollkam.config import PipelineConfig, dump_config, parse_config
from zollkam.errors import ConfigError

TINY = """[model]
kind = circle
k_max = 4
[frequency]
d = 1
n_max = 2
count = 3
l_max = 6
[kam]
n_psi = 4
[evolution]
enabled = false
[oracle]
n_lattice = 2
"""


def test_defaults_and_derived():
    cfg = PipelineConfig()
    assert cfg.tau == 3.0
    assert cfg.gamma == pytest.approx(1e-3 ** 0.5)
    cfg.frequency.epsilon = 0.0
    assert cfg.gamma == 0.0


def test_parse_and_dump_round_trip():
    cfg = parse_config(TINY)
    assert cfg.model.k_max == 4 and cfg.evolution.enabled is False
    again = parse_config(dump_config(cfg))
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[model]\nkmax = 3\n",
                                  "[model]\nk_max = three\n", "[frequency]\nepsilon = 1.5\n",
                                  "[frequency]\nalpha = 0\n", "[perturbation]\ndelta = 1\n",
                                  "[model]\nkind = torus\n", "[kam]\nchi = 1\n"])
def test_rejected_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_delta_above_half_warns():
    with pytest.warns(UserWarning):
        parse_config("[perturbation]\ndelta = 0.7\n")


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY)
    return p


def test_cli_model_and_excise(tiny, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["model", "--config", str(tiny), "--out", str(out)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["gaps_ok"] and rec["k_max"] == 4
    assert main(["excise", "--config", str(tiny), "--out", str(out), "--N", "2"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["count"] == 3 and "N=2" in rec
    assert (out / "omega.csv").exists()


def test_cli_perturb_and_dump(tiny, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["perturb", "--config", str(tiny), "--out", str(out), "--seed", "5"]) == 0
    capsys.readouterr()
    assert main(["dump", str(out / "W.zkam")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(len(x.split()) >= 3 for x in lines)


def test_cli_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[nope]\n")
    assert main(["model", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    junk = tmp_path / "junk.zkam"
    junk.write_bytes(b"ZKAM")
    assert main(["dump", str(junk)]) == 2


def test_cli_pipeline_tiny(tiny, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["pipeline", "--config", str(tiny), "--out", str(out)])
    capsys.readouterr()
    lines = [json.loads(x) for x in (out / "report.jsonl").read_text().splitlines()]
    assert code == 0
    assert lines[-1] == {"kind": "summary", "ok": True, "failed": []}
    checks = {r["check"] for r in lines if r["kind"] == "check"}
    assert {"perturbation_order", "oracle_match", "kam_converged_fraction"} <= checks
    assert (out / "W.zkam").exists() and (out / "run_meta.json").exists()
