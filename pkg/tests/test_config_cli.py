import json

import pytest

from flatbilliard import acceptance as acc
from flatbilliard import cli
from flatbilliard.config import ExperimentConfig, dump_config, load_config, parse_config_text
from flatbilliard.errors import ConfigError


def test_parse_config_text():
    d = parse_config_text("beta = 4  # comment\nsamples = 1e6\nr0 = none\nvariant=half\n")
    assert d == {"beta": 4.0, "samples": 1_000_000, "r0": None, "variant": "half"}


@pytest.mark.parametrize("text", ["nonsense", "colour = red", "seed = abc"])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_load_config_overrides(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("beta = 4\nseed = 5\n")
    cfg = load_config(p, {"seed": 9, "epsilon": None})
    assert cfg.beta == 4 and cfg.seed == 9 and cfg.epsilon == ExperimentConfig().epsilon


def test_dump_round_trip():
    cfg = ExperimentConfig(beta=3.0, r0=1.5)
    again = ExperimentConfig(**parse_config_text(dump_config(cfg)))
    assert again == cfg


@pytest.mark.parametrize("bad", [{"beta": 2.0}, {"epsilon": -1.0}, {"variant": "quarter"}, {"samples": 0}])
def test_validation(bad):
    with pytest.raises(ConfigError):
        load_config(None, bad)


def test_shipped_configs_load():
    for b in (3, 4, 6):
        assert load_config(f"configs/beta{b}.cfg").beta == b


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_unknown_flag_exit_1(tmp_path, capsys):
    code, _, err = _run(["table", "--bogus", "--out", str(tmp_path)], capsys)
    assert code == 1 and "config error" in err


def test_unknown_subcommand_exit_1(capsys):
    assert _run(["launch"], capsys)[0] == 1


def test_invalid_geometry_exit_1(tmp_path, capsys):
    code, _, err = _run(["table", "--beta", "4", "--half-width", "1", "--closure-slack", "0.5", "--out", str(tmp_path)], capsys)
    assert code == 1 and "GeometryError" in err


def test_table_command(tmp_path, capsys):
    code, out, _ = _run(["table", "--beta", "4", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["command"] == "table" and doc["config"]["beta"] == 4
    assert doc["validation"]
    assert (tmp_path / "table.csv").read_text().startswith("# {")


def test_orbit_csv_deterministic(tmp_path, capsys):
    args = ["orbit", "--beta", "6", "--steps", "200", "--seed", "11", "--format", "csv"]
    c1, out1, _ = _run(args + ["--out", str(tmp_path)], capsys)
    first = (tmp_path / "orbit.csv").read_bytes()
    c2, out2, _ = _run(args + ["--out", str(tmp_path)], capsys)
    assert c1 == c2 == 0
    body1 = out1.split("\n", 1)[1]
    assert body1 == out2.split("\n", 1)[1]
    assert body1.splitlines()[0] == "m,r,phi,x,y,tau,K,in_window"
    assert len(body1.splitlines()) == 201
    assert first == (tmp_path / "orbit.csv").read_bytes()


def test_corridor_command(tmp_path, capsys):
    code, out, _ = _run(["corridor", "--beta", "4", "--offset", "1e-10", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["exit_type"] == "pass_through"
    assert doc["lemma"]["monotonicity"]["violations"] == 0


def test_return_tail_command(tmp_path, capsys):
    code, out, _ = _run(
        ["return-tail", "--beta", "6", "--samples", "20000", "--n-max", "1000", "--dump-samples", "--out", str(tmp_path)],
        capsys,
    )
    assert code == 0
    assert {p.name for p in tmp_path.iterdir()} == {"return_tail.csv", "return_tail.json", "return_times.csv"}


def test_verify_subset(tmp_path, capsys):
    code, out, err = _run(["verify", "--criteria", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "PASS criterion 1" in err
    assert json.loads(out)["passed"] is True


def test_verify_unknown_criterion(tmp_path, capsys):
    assert _run(["verify", "--criteria", "42", "--out", str(tmp_path)], capsys)[0] == 1


def test_verify_failure_exit_3(tmp_path, capsys, monkeypatch):
    monkeypatch.setitem(acc.CRITERIA, 1, ("map correctness", lambda ctx: acc.CriterionResult(1, "map correctness", False, {"forced": 1})))
    code, _, err = _run(["verify", "--criteria", "1", "--out", str(tmp_path)], capsys)
    assert code == 3 and "FAIL criterion 1" in err
