from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import subprocess
import sys
from typing import Callable, Sequence

from mmwave_relq.paths import CONFIGS_DIR, PMF_DIR, PROJECT_ROOT, RESULTS_DIR
from mmwave_relq.results import read_csv_rows

CLI = "src/relq.py"

PMF_CONFIGS = ("pmf_c10.env", "pmf_c20.env")

SWEEP_CONFIGS = (
    "arrival_rate_c10.env",
    "arrival_rate_c20.env",
    "geometric_demand.env",
    "nacf.env",
    "cov.env",
    "service_rate.env",
    "blocker_density.env",
)


@dataclass(frozen=True)
class PipelineStep:
    label: str
    command: tuple[str, ...]
    # CSV the step writes; bundled configs name their output after the file stem
    output: Path | None = None


@dataclass(frozen=True)
class PipelineResult:
    label: str
    command: tuple[str, ...]
    returncode: int
    output: Path | None = None


def output_rows(result: PipelineResult) -> int | None:
    """Data rows in the CSV a finished step wrote, None when there is none."""
    if result.output is None or not result.output.is_file():
        return None
    return len(read_csv_rows(result.output))


class PipelineError(RuntimeError):
    def __init__(self, result: PipelineResult):
        self.result = result
        super().__init__(f"Pipeline step failed: {result.label}")


# called after each finished step with (steps done, steps total, result)
StepCallback = Callable[[int, int, PipelineResult], None]


def figure_steps(python_executable: str | None = None, jobs: int | None = None) -> list[PipelineStep]:
    python = python_executable or sys.executable
    extra = ("--jobs", str(jobs)) if jobs else ()

    steps = [
        PipelineStep(
            f"Demand PMF ({name})",
            (python, CLI, "pmf", "--config", str(CONFIGS_DIR / name)),
            PMF_DIR / f"{Path(name).stem}.csv",
        )
        for name in PMF_CONFIGS
    ]
    steps.extend(
        PipelineStep(
            f"Sweep ({name})",
            (python, CLI, "sweep", "--config", str(CONFIGS_DIR / name), *extra),
            RESULTS_DIR / f"{Path(name).stem}.csv",
        )
        for name in SWEEP_CONFIGS
    )
    return steps


def run_step(step: PipelineStep) -> PipelineResult:
    print(f"\n>>> {step.label}", flush=True)
    completed = subprocess.run(step.command, cwd=PROJECT_ROOT)
    result = PipelineResult(step.label, step.command, completed.returncode, step.output)

    if result.returncode != 0:
        raise PipelineError(result)

    return result


def run_pipeline(steps: Sequence[PipelineStep], on_step: StepCallback | None = None) -> list[PipelineResult]:
    results: list[PipelineResult] = []

    for step in steps:
        results.append(run_step(step))
        if on_step is not None:
            on_step(len(results), len(steps), results[-1])

    return results


def run_figures(
    python_executable: str | None = None,
    jobs: int | None = None,
    on_step: StepCallback | None = None,
) -> list[PipelineResult]:
    results = run_pipeline(figure_steps(python_executable, jobs), on_step)
    print("\n✓ Figures reproduced")
    return results
