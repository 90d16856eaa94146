import csv
import json

import pytest

from memsched import cli
from memsched import config as cfgmod
from memsched.policies import FixedRR, QRRConfig, RandRRSpec, TransmitUntilNack


def write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# memsched-csv v1"
    return list(csv.DictReader(lines[1:]))


class TestConfig:
    def test_defaults_parse(self):
        exp = cfgmod.load()
        assert exp.n == 2 and isinstance(exp.policy, FixedRR) and str(exp.policy.phi) == "11"

    def test_show_defaults_round_trip(self, capsys):
        assert cli.main(["config", "show-defaults"]) == 0
        assert capsys.readouterr().out == cfgmod.DEFAULTS_TOML

    def test_unknown_key(self, tmp_path):
        with pytest.raises(cfgmod.ConfigError, match="run.horizn"):
            cfgmod.load(write(tmp_path, "[run]\nhorizn = 5\n"))

    def test_per_channel_lists(self, tmp_path):
        exp = cfgmod.load(write(tmp_path, "[channels]\nn = 2\np01 = [0.1, 0.3]\np10 = [0.3, 0.1]\n"))
        assert [p.pi_on for p in exp.params] == pytest.approx([0.25, 0.75])

    def test_policies(self, tmp_path):
        (tmp_path / "w.json").write_text(json.dumps({"10": 0.5, "11": 0.5}))
        exp = cfgmod.load(write(tmp_path, '[policy]\nkind = "randrr"\nweights_file = "w.json"\n'))
        assert isinstance(exp.policy, RandRRSpec)
        exp = cfgmod.load(write(tmp_path, '[run]\nmode = "queued"\n[policy]\nkind = "qrr"\n[arrivals]\nrates = [0.1, 0.2]\n'))
        assert isinstance(exp.policy, QRRConfig) and exp.policy.lam == (0.1, 0.2)
        exp = cfgmod.load(write(tmp_path, '[policy]\nkind = "until-nack"\nchannels = [1, 0]\n'))
        assert exp.policy == TransmitUntilNack((1, 0))

    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("[channels]\np01 = 0.6\np10 = 0.5\n", "positive correlation"),
            ("[channels]\nn = 17\n", "channels.n"),
            ('[policy]\nkind = "qrr"\n', "queued"),
            ('[policy]\nphi = "111"\n', "policy.phi"),
            ('[run]\nmode = "queued"\n[arrivals]\nrates = [0.1]\n', "arrivals.rates"),
            ('[policy]\nkind = "randrr"\nweights = {"10" = 0.5, "01" = 0.6}\n', "sum"),
        ],
    )
    def test_validation_messages(self, tmp_path, text, fragment):
        with pytest.raises(cfgmod.ConfigError, match=fragment):
            cfgmod.load(write(tmp_path, text))


class TestSimulate:
    def test_summary_and_series(self, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["simulate", "--horizon", "100000", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["mean_throughput"] == pytest.approx([0.3077, 0.3077], abs=0.02)
        rows = read_csv(out / "series.csv")
        assert rows[0]["slot"] == "1000" and "delivered_1" in rows[0]

    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = write(tmp_path, "[channels]\np01 = 0.6\np10 = 0.5\n")
        assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 2
        assert "p01 + p10 must be < 1" in capsys.readouterr().err

    def test_trace(self, tmp_path):
        out = tmp_path / "t"
        assert cli.main(["simulate", "--horizon", "2000", "--trace", "--out", str(out)]) == 0
        rows = read_csv(out / "trace.csv")
        assert len(rows) == 2000 and set(rows[0]) >= {"slot", "served", "packet_kind", "state", "feedback", "omega_0"}

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["simulate", "--horizon", "20000", "--replications", "3", "--seed", "5"]
        cli.main(args + ["--out", str(a)])
        cli.main(args + ["--out", str(b), "--workers", "2"])
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
        assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()

    def test_replications_differ(self, tmp_path):
        cli.main(["simulate", "--horizon", "20000", "--replications", "2", "--out", str(tmp_path)])
        reps = json.loads((tmp_path / "summary.json").read_text())["replications"]
        assert [r["replication"] for r in reps] == [0, 1]
        assert reps[0]["delivered"] != reps[1]["delivered"]


class TestRegion:
    def test_symmetric_sweep(self, tmp_path, capsys):
        assert cli.main(["region", "--out", str(tmp_path)]) == 0
        assert "23.1%" in capsys.readouterr().out
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 361
        first, diag = rows[0], rows[180]
        assert float(first["inner_0"]) == pytest.approx(0.5) and float(first["outer_0"]) == pytest.approx(0.5)
        assert float(diag["inner_0"]) == pytest.approx(0.3077, abs=1e-4)
        assert float(diag["outer_1"]) == pytest.approx(0.3571, abs=1e-4)
        assert float(diag["blind_0"]) == pytest.approx(0.25)

    def test_asymmetric_blind_warning(self, tmp_path, capsys):
        path = write(tmp_path, "[channels]\np01 = [0.1, 0.3]\np10 = [0.3, 0.1]\n")
        assert cli.main(["region", "--config", str(path), "--out", str(tmp_path)]) == 0
        assert "warning" in capsys.readouterr().err
        assert "blind_0" not in read_csv(tmp_path / "sweep.csv")[0]

    def test_single_channel(self, tmp_path):
        path = write(tmp_path, "[channels]\nn = 1\n")
        assert cli.main(["region", "--config", str(path), "--out", str(tmp_path)]) == 0
        row = read_csv(tmp_path / "sweep.csv")[0]
        assert float(row["inner_0"]) == pytest.approx(0.5) == float(row["outer_0"])

    def test_directions_file(self, tmp_path):
        (tmp_path / "d.txt").write_text("# two rays\n1, 1\n1 0\n")
        assert cli.main(["region", "--directions", str(tmp_path / "d.txt"), "--out", str(tmp_path)]) == 0
        assert len(read_csv(tmp_path / "sweep.csv")) == 2


class TestConvertWeights:
    def test_beta_to_alpha(self, tmp_path):
        src = tmp_path / "b.json"
        src.write_text(json.dumps({"10": 0.5, "11": 0.5}))
        dst = tmp_path / "a.json"
        assert cli.main(["convert-weights", str(src), "--out", str(dst)]) == 0
        alpha = json.loads(dst.read_text())
        assert alpha["10"] == pytest.approx(0.72222, abs=1e-5)
        back = tmp_path / "b2.json"
        assert cli.main(["convert-weights", str(dst), "--from", "alpha", "--out", str(back)]) == 0
        assert json.loads(back.read_text()) == pytest.approx({"10": 0.5, "11": 0.5}, abs=1e-12)

    def test_equal_chi_identity(self, tmp_path):
        src = tmp_path / "b.json"
        src.write_text(json.dumps({"10": 0.3, "01": 0.7}))
        dst = tmp_path / "a.json"
        cli.main(["convert-weights", str(src), "--out", str(dst)])
        assert json.loads(dst.read_text()) == pytest.approx({"10": 0.3, "01": 0.7})

    def test_rejects_non_distribution(self, tmp_path):
        src = tmp_path / "b.json"
        src.write_text(json.dumps({"10": 0.3, "01": 0.3}))
        assert cli.main(["convert-weights", str(src)]) == 2
