import csv

import numpy as np
import pytest

from laa_stream import cli
from laa_stream.config import parse_config

FAST = "alpha = 1e6\nnum_ues = 3\nnum_qsis = 2\nsis_per_qsi = 100\n"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def scenario(tmp_path, monkeypatch):
    monkeypatch.setenv("SIM_THREADS", "1")
    path = tmp_path / "scenario.txt"
    path.write_text(FAST)
    return path


def test_one_run_writes_detail_and_summary(scenario, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--config", str(scenario), "--seeds", "1", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.csv")) == ["point_000.csv", "summary.csv"]
    assert parse_config(out / "point_000.config.txt") == parse_config(scenario)
    detail = rows(out / "point_000.csv")
    assert list(detail[0]) == list(cli.DETAIL_COLUMNS)
    assert detail[0]["status"] == "ok"
    assert list(rows(out / "summary.csv")[0]) == list(cli.SUMMARY_COLUMNS)


def test_sweep_grid_row_counts(scenario, tmp_path):
    out = tmp_path / "out"
    code = cli.main(
        ["--config", str(scenario), "--seeds", "20", "--out", str(out), "--policy", "PFS_LAA", "--sweep", "num_ues=2,4,6"]
    )
    assert code == 0
    details = [rows(out / f"point_{i:03d}.csv") for i in range(3)]
    assert sum(len(d) for d in details) == 60
    summary = rows(out / "summary.csv")
    assert len(summary) == 3
    assert [int(r["num_ues"]) for r in summary] == [2, 4, 6]
    assert all(int(r["n_runs"]) == 20 for r in summary)


def test_explicit_seed_list_and_policies(scenario, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--config", str(scenario), "--seeds", "4,9", "--out", str(out), "--policy", "bcasp,AVIS"]) == 0
    detail = rows(out / "point_000.csv")
    assert [(r["policy"], r["seed"]) for r in detail] == [("BCASP", "4"), ("BCASP", "9"), ("AVIS", "4"), ("AVIS", "9")]


@pytest.mark.parametrize(
    "argv",
    [
        ["--bogus"],
        ["--config", "x.txt"],
        ["--out", "o"],
        ["--out", "o", "--policy", "RR"],
        ["--out", "o", "--sweep", "nope=1,2"],
        ["--out", "o", "--seeds", "abc"],
        ["--out", "o", "--emit-figs", "--seeds", "3"],
    ],
)
def test_invalid_invocations_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2


def test_bad_config_exits_2(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("occupancy.mu = 3\n")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["--config", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "o"), "--sweep", "occupancy.mu=0.5,7"]) == 2


def test_partial_failure_keeps_results(scenario, tmp_path):
    scenario.write_text(FAST + "solver.max_iter = 1\n")
    out = tmp_path / "out"
    code = cli.main(["--config", str(scenario), "--seeds", "2", "--out", str(out), "--policy", "BCASP,PFS_LAA"])
    assert code == 1
    detail = rows(out / "point_000.csv")
    assert [r["status"] for r in detail] == ["error", "error", "ok", "ok"]
    assert "QSI 0" in detail[0]["error"]
    summary = {r["policy"]: r for r in rows(out / "summary.csv")}
    assert summary["BCASP"]["n_failed"] == "2" and summary["PFS_LAA"]["n_runs"] == "2"


def test_interrupted_run_leaves_completed_files(scenario, tmp_path, monkeypatch):
    out = tmp_path / "out"
    real = cli.run_scenario
    calls = []

    def flaky(cfg):
        calls.append(cfg.num_ues)
        if cfg.num_ues == 5:
            raise KeyboardInterrupt
        return real(cfg)

    monkeypatch.setattr(cli, "run_scenario", flaky)
    with pytest.raises(KeyboardInterrupt):
        cli.main(["--config", str(scenario), "--seeds", "1", "--out", str(out), "--sweep", "num_ues=2,5"])
    assert len(rows(out / "point_000.csv")) == 1
    assert len(rows(out / "summary.csv")) == 1
    assert not (out / "point_001.csv").exists()
    assert not list(out.glob(".*tmp"))


def test_parallel_matches_serial(scenario, tmp_path, monkeypatch):
    argv = ["--config", str(scenario), "--seeds", "3", "--policy", "BCASP,PFS_LAA"]
    assert cli.main(argv + ["--out", str(tmp_path / "serial")]) == 0
    monkeypatch.setenv("SIM_THREADS", "2")
    assert cli.main(argv + ["--out", str(tmp_path / "par")]) == 0
    a = (tmp_path / "serial" / "point_000.csv").read_text()
    b = (tmp_path / "par" / "point_000.csv").read_text()
    assert a == b


def test_floats_have_nine_significant_digits():
    assert cli.fmt(1 / 3) == "0.333333333"
    assert cli.fmt(123456789012.0) == "1.23456789e+11"
    assert cli.fmt(7) == "7"


def test_emit_figs(scenario, tmp_path):
    out = tmp_path / "out"
    code = cli.main(
        ["--config", str(scenario), "--seeds", "2", "--out", str(out), "--policy", "BCASP,PFS_LAA",
         "--sweep", "num_ues=2,4", "--sweep", "occupancy.mu=0.2,0.8", "--emit-figs"]
    )
    assert code == 0
    for name in cli.FIG_FILES:
        assert (out / name).is_file(), name
    for name in ("fig8_quality_cdf.csv", "fig9_quality_cdf.csv"):
        data = rows(out / name)
        group = "K" if name.startswith("fig8") else "policy"
        for g in {r[group] for r in data}:
            cdf = [float(r["cdf"]) for r in data if r[group] == g]
            assert np.all(np.diff(cdf) >= 0) and cdf[-1] == 1.0
    rate = rows(out / "fig7_rate.csv")
    for pol in ("BCASP", "PFS_LAA"):
        for k in ("2", "4"):
            by_mu = {r["mu"]: float(r["mean_rate_mbps"]) for r in rate if r["K"] == k and r["policy"] == pol}
            assert by_mu["0.8"] > by_mu["0.2"]
    assert [r["K"] for r in rows(out / "fig6_admm_iters.csv")] == ["2", "4"]
    assert list(rows(out / "fig10_freeze.csv")[0]) == ["policy", "sigma2", "freeze_prob", "freeze_dur_s"]


def test_emit_figs_from_existing_results(scenario, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--config", str(scenario), "--seeds", "1", "--out", str(out), "--policy", "PFS_LAA"]) == 0
    assert cli.main(["--out", str(out), "--emit-figs"]) == 0
    # no BCASP rows: the ADMM and per-K CDF datasets are skipped
    assert not (out / "fig6_admm_iters.csv").exists()
    assert (out / "fig9_quality_cdf.csv").exists()


def test_emit_figs_empty_dir(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["--out", str(empty), "--emit-figs"]) != 0
    assert list(empty.iterdir()) == []
