from __future__ import annotations

from pathlib import Path

import pytest

import relq
from mmwave_relq.errors import SolverError
from mmwave_relq.results import read_csv_rows

ERLANG_ENV = """\
name=erlang
jobs=1
traffic.model=poisson
traffic.arrival_rate=1
demand.source=explicit
demand.pmf={"1": 1.0}
system.prbs=2
system.servers=2
system.service_rate=1
sim.horizon=2000
sim.replications=3
"""


@pytest.fixture
def erlang_env(tmp_path) -> Path:
    path = tmp_path / "erlang.env"
    path.write_text(ERLANG_ENV, encoding="utf-8")
    return path


def test_solve_writes_one_row(tmp_path, erlang_env, capsys):
    out = tmp_path / "solve.csv"
    assert relq.main(["solve", "--config", str(erlang_env), "--out", str(out)]) == 0
    rows = read_csv_rows(out)
    assert len(rows) == 1
    assert float(rows[0]["loss_probability"]) == pytest.approx(0.2, abs=1e-11)
    assert f"Wrote 1 row(s) to {out}" in capsys.readouterr().out


def test_solve_ignores_sweep_grid(tmp_path, erlang_env):
    erlang_env.write_text(ERLANG_ENV + "sweep.parameter=arrival_rate\nsweep.values=1,2\n", encoding="utf-8")
    out = tmp_path / "solve.csv"
    assert relq.main(["solve", "--config", str(erlang_env), "--out", str(out)]) == 0
    assert len(read_csv_rows(out)) == 1


def test_simulate_reports_interval(tmp_path, erlang_env):
    out = tmp_path / "sim.csv"
    assert relq.main(["simulate", "--config", str(erlang_env), "--out", str(out), "--seed", "7"]) == 0
    row = read_csv_rows(out)[0]
    assert row["method"] == "sim"
    assert row["loss_ci"]


def test_sweep_is_reproducible(tmp_path, erlang_env):
    erlang_env.write_text(
        ERLANG_ENV + "sweep.parameter=arrival_rate\nsweep.values=0.5,1,2\nsweep.traffic=poisson,spp\n",
        encoding="utf-8",
    )
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        args = ["sweep", "--config", str(erlang_env), "--out", str(out), "--method", "both", "--seed", "3"]
        assert relq.main(args) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert len(read_csv_rows(tmp_path / "a.csv")) == 12


def test_pmf_subcommand(tmp_path, capsys):
    out = tmp_path / "pmf.csv"
    assert relq.main(["pmf", "--out", str(out)]) == 0
    assert sum(float(r["p_j"]) for r in read_csv_rows(out)) == pytest.approx(1.0, abs=1e-9)
    assert "mean demand=" in capsys.readouterr().out


def test_fit_spp_subcommand(tmp_path, capsys):
    out = tmp_path / "fit.csv"
    args = ["fit-spp", "--rate", "0.1", "--cov", "2", "--beta", "0.1", "--out", str(out)]
    assert relq.main(args) == 0
    row = read_csv_rows(out)[0]
    assert float(row["lambda2"]) == pytest.approx(0.5)
    assert float(row["mean_interarrival"]) == pytest.approx(10.0, rel=1e-9)
    assert float(row["cov_amplitude"]) == pytest.approx(0.2, rel=1e-9)
    assert "lambda1=" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, erlang_env, capsys):
    erlang_env.write_text(ERLANG_ENV + "radio.bogus=1\n", encoding="utf-8")
    assert relq.main(["solve", "--config", str(erlang_env), "--out", str(tmp_path / "x.csv")]) == 1
    assert "ERROR:" in capsys.readouterr().err
    assert relq.main(["fit-spp", "--cov", "0.8", "--convention", "canonical"]) == 1
    assert relq.main(["solve", "--config", str(tmp_path / "missing.env")]) == 1


def test_numerical_error_exit_code(tmp_path, erlang_env, monkeypatch, capsys):
    def explode(cfg, strict=False):
        raise SolverError("did not converge", residuals=[1e-3])

    monkeypatch.setattr(relq, "run_experiment", explode)
    assert relq.main(["solve", "--config", str(erlang_env), "--out", str(tmp_path / "x.csv")]) == 2
    assert "did not converge" in capsys.readouterr().err
