import filecmp
import json
import subprocess
import sys

import pytest

from khop import cli
from khop.exceptions import ConfigError

REGION = {"command": "region", "pmf": {"dsbs_chain": [0.1, 0.1]}, "rates": [0.5, 0.5]}


def read_csv(path):
    lines = path.read_text().splitlines()
    head = [l for l in lines if l.startswith("#")]
    body = [l.split(",") for l in lines if not l.startswith("#")]
    return head, body[0], body[1:]


class TestParse:
    def test_defaults(self):
        cfg = cli.parse_config(REGION)
        assert cfg.params["seed"] == 0
        assert cfg.params["n_restarts"] == 16
        assert cfg.params["output"] == "."

    def test_every_error_reported(self):
        bad = {"command": "simulate", "pmf": {"dsbs_chain": [0.1, 1.5]}, "rates": [-0.5, 0.5],
               "blocklengths": [10, 5], "trials": 0, "colour": "red"}
        with pytest.raises(ConfigError) as e:
            cli.parse_config(bad)
        msgs = e.value.errors
        assert any("colour" in m for m in msgs)
        assert any(m.startswith("rates") for m in msgs)
        assert any(m.startswith("blocklengths") for m in msgs)
        assert any(m.startswith("trials") for m in msgs)
        assert any(m.startswith("pmf.dsbs_chain") for m in msgs)
        assert len(msgs) == 5

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="blocklengths: required"):
            cli.parse_config({"command": "diagnose", "pmf": {"dsbs": 0.1}, "rates": [0.5]})

    def test_bad_command_and_json(self):
        with pytest.raises(ConfigError, match="command"):
            cli.parse_config({"command": "fly"})
        with pytest.raises(ConfigError, match="valid JSON"):
            cli.parse_config("{not json")

    def test_rate_count(self):
        with pytest.raises(ConfigError, match="needs 2 rates"):
            cli.parse_config(dict(REGION, rates=[0.5]))

    def test_pmf_forms(self, tmp_path):
        f = tmp_path / "p.json"
        f.write_text(json.dumps({"alphabets": [[0, 1], [0, 1]], "probs": [0.4, 0.1, 0.1, 0.4]}))
        cfg = cli.parse_config({"command": "wz", "pmf": "p.json", "D": 0.05}, tmp_path)
        assert cfg.pmf().shape == (2, 2)
        with pytest.raises(ConfigError, match="sum to 1"):
            cli.parse_config({"command": "wz", "pmf": {"alphabets": [[0, 1], [0, 1]], "probs": [0.5, 0.1, 0.1, 0.4]},
                              "D": 0.05})
        with pytest.raises(ConfigError, match="does not exist"):
            cli.parse_config({"command": "wz", "pmf": "missing.json", "D": 0.05}, tmp_path)

    @pytest.mark.parametrize("raw", [
        REGION,
        {"command": "sweep", "pmf": {"dsbs_chain": [0.1, 0.2]}, "rates": [0.5, 0.25], "blocklengths": [4, 8],
         "epsilons": [0.1], "mu": 0.4},
        {"command": "wz", "pmf": {"dsbs": 0.1}, "D": [0.0, 0.05], "distortion": [[0, 1], [1, 0]]},
    ])
    def test_round_trip(self, raw):
        text = cli.normalize(raw)
        assert cli.serialize(cli.parse_config(text)) == text
        assert cli.normalize(json.dumps(raw, indent=3)) == text


def test_fmt():
    assert cli.fmt(-0.0) == "0"
    assert cli.fmt(True) == "1"
    assert cli.fmt(None) == ""
    assert cli.fmt(0.1 + 0.2) == "0.3"


class TestCommands:
    def test_region(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(REGION))
        assert cli.main(["region", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        head, cols, rows = read_csv(tmp_path / "o" / "region.csv")
        assert cols == ["k", "rate", "eta", "theta_max"]
        assert len(rows) == 2
        assert float(rows[1][3]) == pytest.approx(2 * 0.30268, abs=2e-4)
        assert head[0].startswith("# khop ")
        assert head[2] == "# seed=0"
        echoed = json.loads(head[3][len("# config="):])
        assert "output" not in echoed and echoed["rates"] == [0.5, 0.5]

    def test_eta_flags(self, tmp_path):
        pmf = tmp_path / "p.json"
        pmf.write_text(json.dumps({"dsbs": 0.1}))
        code = cli.main(["eta", "--pmf", str(pmf), "--rates", "0.25", "0.5", "--out", str(tmp_path)])
        assert code == 0
        _, cols, rows = read_csv(tmp_path / "eta.csv")
        assert cols == ["R", "eta", "hop"]
        assert float(rows[-1][1]) == pytest.approx(0.30268, abs=1e-4)

    def test_deterministic_bytes(self, tmp_path):
        raw = {"command": "simulate", "pmf": {"dsbs_chain": [0.1, 0.1]}, "rates": [0.5, 0.5],
               "blocklengths": [4, 6], "trials": 500, "seed": 4}
        for d in ("a", "b"):
            cli.run(cli.parse_config(dict(raw, output=str(tmp_path / d))))
        assert filecmp.cmp(tmp_path / "a" / "simulate.csv", tmp_path / "b" / "simulate.csv", shallow=False)
        cli.run(cli.parse_config(dict(raw, output=str(tmp_path / "c"), seed=5)))
        assert not filecmp.cmp(tmp_path / "a" / "simulate.csv", tmp_path / "c" / "simulate.csv", shallow=False)

    def test_seed_flag_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(REGION))
        assert cli.main(["region", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path)]) == 0
        head, _, _ = read_csv(tmp_path / "region.csv")
        assert head[2] == "# seed=9"

    def test_diagnose_cap(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"command": "diagnose", "pmf": {"dsbs_chain": [0.1, 0.1]}, "rates": [0.5, 0.5],
                                   "blocklengths": [12], "cap": 1000}))
        code = cli.main(["diagnose", "--config", str(cfg), "--out", str(tmp_path)])
        err = capsys.readouterr().err
        assert code == 1
        assert "EnumerationCapError" in err and "cap 1000" in err
        assert "[khop.cli]" in err

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(dict(REGION, rates=[-1, 0.5])))
        assert cli.main(["region", "--config", str(cfg)]) == 2
        assert "rates" in capsys.readouterr().err

    def test_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "khop.cli", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and out.stdout.startswith("khop ")
