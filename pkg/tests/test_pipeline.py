from __future__ import annotations

import sys

import pytest

from mmwave_relq.paths import CONFIGS_DIR, PMF_DIR, RESULTS_DIR
from mmwave_relq.pipeline import (
    CLI,
    PMF_CONFIGS,
    SWEEP_CONFIGS,
    PipelineError,
    PipelineResult,
    PipelineStep,
    figure_steps,
    output_rows,
    run_pipeline,
)


def test_figure_steps_cover_bundled_configs():
    steps = figure_steps("python3", jobs=3)
    assert len(steps) == len(PMF_CONFIGS) + len(SWEEP_CONFIGS)
    for step in steps:
        assert step.command[:2] == ("python3", CLI)
        config = step.command[step.command.index("--config") + 1]
        assert (CONFIGS_DIR / config).exists()
    sweeps = [s for s in steps if s.command[2] == "sweep"]
    assert all(s.command[-2:] == ("--jobs", "3") for s in sweeps)
    assert "--jobs" not in figure_steps("python3")[-1].command
    assert steps[0].output == PMF_DIR / "pmf_c10.csv"
    assert steps[-1].output == RESULTS_DIR / "blocker_density.csv"


def test_run_pipeline_stops_at_failure():
    steps = [
        PipelineStep("ok", (sys.executable, "-c", "pass")),
        PipelineStep("fails", (sys.executable, "-c", "import sys; sys.exit(3)")),
        PipelineStep("never", (sys.executable, "-c", "raise SystemExit(9)")),
    ]
    with pytest.raises(PipelineError) as info:
        run_pipeline(steps)
    assert info.value.result.label == "fails"
    assert info.value.result.returncode == 3


def test_run_pipeline_reports_each_step(tmp_path):
    seen = []
    steps = [PipelineStep(label, (sys.executable, "-c", "pass"), tmp_path / f"{label}.csv") for label in ("a", "b")]
    results = run_pipeline(steps, on_step=lambda done, total, result: seen.append((done, total, result.label)))
    assert [r.returncode for r in results] == [0, 0]
    assert seen == [(1, 2, "a"), (2, 2, "b")]
    assert results[1].output == tmp_path / "b.csv"


def test_output_rows_skips_comments(tmp_path):
    path = tmp_path / "cov.csv"
    path.write_text("# schema_version=1\nname,loss_probability\ncov,0.1\ncov,0.2\n", encoding="utf-8")
    assert output_rows(PipelineResult("Sweep (cov.env)", ("python",), 0, path)) == 2
    assert output_rows(PipelineResult("Sweep (cov.env)", ("python",), 0, tmp_path / "none.csv")) is None
    assert output_rows(PipelineResult("Sweep (cov.env)", ("python",), 0)) is None
