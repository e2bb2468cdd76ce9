from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
import sys

from fastapi import FastAPI, HTTPException, status
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

SRC_DIR = Path(__file__).resolve().parents[1] / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from mmwave_relq.paths import DERIVED_DIR
from mmwave_relq.results import iter_result_files, read_csv_rows
from server.run_manager import RunManager


class ResultFile(BaseModel):
    label: str
    path: str
    url: str
    kind: str
    bytes: int


class StepStatus(BaseModel):
    label: str
    output: str | None
    rows: int | None


class RunStatus(BaseModel):
    state: str
    running: bool
    steps_done: int
    steps_total: int | None
    steps: list[StepStatus]
    started_at: str | None
    finished_at: str | None
    last_success_at: str | None
    error: str | None
    failed_step: str | None


def current_run_status() -> RunStatus:
    return RunStatus.model_validate(asdict(run_manager.snapshot()))


class RunStartResponse(BaseModel):
    started: bool
    message: str
    status: RunStatus


app = FastAPI(title="mmWave ReLS results")
run_manager = RunManager()


def result_kind(relative: Path) -> str:
    """Top-level folder under derived/ (results, pmf, traces), else 'file'."""
    if len(relative.parts) > 1:
        return relative.parts[0]
    return "file"


def result_label(path: Path) -> str:
    name = path.stem.replace("_", " ").replace("-", " ").strip()
    return name if name else path.name


def list_results(root: Path | None = None) -> list[ResultFile]:
    root = root or DERIVED_DIR
    files: list[ResultFile] = []

    for path in iter_result_files(root):
        relative = path.relative_to(root)
        files.append(
            ResultFile(
                label=result_label(path),
                path=str(relative),
                url="/derived/" + "/".join(relative.parts),
                kind=result_kind(relative),
                bytes=path.stat().st_size,
            )
        )

    return files


def resolve_result(relative: str, root: Path | None = None) -> Path:
    root = root or DERIVED_DIR
    path = (root / relative).resolve()
    if root.resolve() not in path.parents or path.suffix != ".csv" or not path.is_file():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"No result file {relative!r}")
    return path


@app.get("/api/health")
def health() -> dict[str, str]:
    return {"status": "ok"}


@app.get("/api/results")
def results() -> list[ResultFile]:
    return list_results()


@app.get("/api/results/rows")
def result_rows(path: str) -> list[dict[str, str]]:
    return read_csv_rows(resolve_result(path))


@app.get("/api/runs/status")
def run_status() -> RunStatus:
    return current_run_status()


@app.post("/api/runs", status_code=status.HTTP_202_ACCEPTED)
def start_run() -> RunStartResponse:
    started = run_manager.start()
    current_status = current_run_status()

    if not started:
        raise HTTPException(
            status_code=status.HTTP_409_CONFLICT,
            detail={
                "started": False,
                "message": "A figure run is already in progress",
                "status": current_status.model_dump(),
            },
        )

    return RunStartResponse(
        started=True,
        message="Figure run started",
        status=current_status,
    )


app.mount("/derived", StaticFiles(directory=DERIVED_DIR, check_dir=False), name="derived")
