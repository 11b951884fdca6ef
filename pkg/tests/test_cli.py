import csv
import json
import subprocess
import sys

import pytest

from dertariff import cli
from dertariff.fixtures import make_feeder
from dertariff.hems import HemsError
from dertariff.io import read_traces_csv, sha256
from dertariff.powerflow import save_network

SMALL = {"seed": 3, "pool": {"customers": 4, "days": 2, "first_day": 40},
         "history": {"customers": 6, "days": 120},
         "study": {"tariffs": ["ToU", "ToUD"], "pv_levels": [0, 50], "batt_levels": [0, 50],
                   "runs": 2}}


def write_cfg(tmp_path, **over):
    doc = {**SMALL, **over}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


@pytest.fixture(scope="module")
def full_runs(tmp_path_factory):
    """The whole pipeline run twice with one seed."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = write_cfg(root)
    outs = []
    for k in range(2):
        out = root / f"run{k}"
        code = cli.main(["run", "--config", str(cfg), "--out", str(out)])
        outs.append((code, out))
    return outs


class TestPipeline:
    def test_synth_only(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "o"
        assert cli.main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["customers.json", "manifest.json", "models.json", "traces.csv"]
        ids, dem, *_ = read_traces_csv(out / "traces.csv")
        assert len(ids) == 4 and dem.shape == (4, 2, 48)

    def test_full_run_succeeds(self, full_runs):
        for code, out in full_runs:
            assert code == 0
            man = json.loads((out / "manifest.json").read_text())
            assert man["complete"] is True
            assert list(man["stages"]) == cli.STAGES

    def test_reruns_are_byte_identical(self, full_runs):
        (_, a), (_, b) = full_runs
        files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        assert len(files) > 10
        for f in files:
            assert sha256(a / f) == sha256(b / f), f

    def test_manifest_hashes_outputs(self, full_runs):
        _, out = full_runs[0]
        man = json.loads((out / "manifest.json").read_text())
        for stage in man["stages"].values():
            for name, digest in stage["outputs"].items():
                assert sha256(out / name) == digest

    def test_report_files(self, full_runs):
        _, out = full_runs[0]
        names = {p.name for p in (out / "report").iterdir()}
        for stem in ("peak_clipping", "monthly_peaks", "annual_costs", "study_distribution"):
            assert {f"{stem}.csv", f"{stem}.png"} <= names
        assert (out / "report" / "annual_costs.png").read_bytes()[:4] == b"\x89PNG"

    def test_costs_fall_with_der(self, full_runs):
        _, out = full_runs[0]
        with (out / "report" / "annual_costs.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        cost = {(r["tariff"], r["scenario"], r["customer_id"]): float(r["total"]) for r in rows}
        for (t, s, c), v in cost.items():
            if s == "III":
                assert v <= cost[t, "I", c] + 1e-9


class TestExitCodes:
    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"bogus": 1}')
        assert cli.main(["synth", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_bad_seed(self, tmp_path):
        assert cli.main(["synth", "--config", str(write_cfg(tmp_path)), "--seed", "-1",
                         "--out", str(tmp_path / "o")]) == 2

    def test_unknown_stage(self, tmp_path):
        assert cli.main(["run", "--stages", "synth,dance", "--out", str(tmp_path)]) == 2

    def test_missing_network_file(self, tmp_path):
        cfg = write_cfg(tmp_path, network="nope.json")
        assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_stage_without_inputs(self, tmp_path):
        out = tmp_path / "o"
        code = cli.main(["optimize", "--config", str(write_cfg(tmp_path)), "--out", str(out)])
        assert code == 3
        man = json.loads((out / "manifest.json").read_text())
        assert man["complete"] is False
        assert man["stages"]["optimize"]["outputs"] == "incomplete"

    def test_solver_failure(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise HemsError("window starting day 40: solver status Infeasible", 40)
        monkeypatch.setattr(cli, "run_rolling_horizon", boom)
        cfg = write_cfg(tmp_path)
        out = str(tmp_path / "o")
        assert cli.main(["run", "--stages", "synth,optimize", "--config", str(cfg),
                         "--out", out]) == 4

    def test_network_mismatch(self, tmp_path):
        save_network(make_feeder(7), tmp_path / "net.json")
        cfg = write_cfg(tmp_path, network="net.json", tariffs=["ToU", "ToUD"])
        out = str(tmp_path / "o")
        assert cli.main(["run", "--stages", "synth,optimize,powerflow", "--config", str(cfg),
                         "--out", out]) == 5


def test_fixture_command(tmp_path):
    assert cli.main(["fixture", "--out", str(tmp_path / "fx"), "--customers", "5"]) == 0
    cfg = cli.load_config(str(tmp_path / "fx" / "config.json"))
    assert cfg["pool"]["customers"] == 5
    assert cfg["network"].endswith("network.json")


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "dertariff.cli", "--help"], capture_output=True,
                       text=True, check=False)
    assert r.returncode == 0 and "synth" in r.stdout
