"""
Background reproduction runs for the results service.

One run at a time executes every bundled config through the step pipeline on
a single worker thread. After each step the manager records how many rows the
step's CSV holds, so clients can follow a long run step by step.
"""

from __future__ import annotations

from concurrent.futures import Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from datetime import datetime
import sys
import threading
from typing import Callable

from mmwave_relq.paths import default_jobs
from mmwave_relq.pipeline import PipelineError, PipelineResult, StepCallback, output_rows, run_figures

Runner = Callable[[StepCallback], object]


def local_now() -> str:
    return datetime.now().astimezone().isoformat()


@dataclass(frozen=True)
class StepReport:
    label: str
    output: str | None
    rows: int | None


@dataclass(frozen=True)
class RunStatusSnapshot:
    state: str = "idle"
    running: bool = False
    steps_done: int = 0
    steps_total: int | None = None
    steps: tuple[StepReport, ...] = ()
    started_at: str | None = None
    finished_at: str | None = None
    last_success_at: str | None = None
    error: str | None = None
    failed_step: str | None = None


def figures_runner(on_step: StepCallback) -> object:
    return run_figures(python_executable=sys.executable, jobs=default_jobs(), on_step=on_step)


@dataclass(eq=False)
class RunManager:
    runner: Runner = figures_runner
    _status: RunStatusSnapshot = field(default_factory=RunStatusSnapshot, init=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)
    _executor: ThreadPoolExecutor = field(
        default_factory=lambda: ThreadPoolExecutor(max_workers=1, thread_name_prefix="relq-run"),
        init=False,
        repr=False,
    )
    _future: Future | None = field(default=None, init=False, repr=False)

    def start(self) -> bool:
        """Queue a run; False when one is already in progress."""
        with self._lock:
            if self._status.running:
                return False
            self._status = replace(
                RunStatusSnapshot(last_success_at=self._status.last_success_at),
                state="running",
                running=True,
                started_at=local_now(),
            )
            self._future = self._executor.submit(self._run)
            return True

    def wait(self, timeout: float | None = None) -> None:
        if self._future is not None:
            wait([self._future], timeout)

    def _record_step(self, done: int, total: int, result: PipelineResult) -> None:
        report = StepReport(result.label, str(result.output) if result.output else None, output_rows(result))
        with self._lock:
            self._status = replace(
                self._status,
                steps_done=done,
                steps_total=total,
                steps=self._status.steps + (report,),
            )

    def _finish(self, state: str, **changes: object) -> None:
        finished_at = local_now()
        if state == "success":
            changes["last_success_at"] = finished_at
        with self._lock:
            self._status = replace(self._status, state=state, running=False, finished_at=finished_at, **changes)

    def _run(self) -> None:
        try:
            self.runner(self._record_step)
        except PipelineError as exc:
            self._finish(
                "error",
                failed_step=exc.result.label,
                error=f"{exc.result.label} failed with exit code {exc.result.returncode}",
            )
        except Exception as exc:
            self._finish("error", error=f"{type(exc).__name__}: {exc}")
        else:
            self._finish("success")

    def snapshot(self) -> RunStatusSnapshot:
        with self._lock:
            return self._status
