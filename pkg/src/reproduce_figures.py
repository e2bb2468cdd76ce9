from __future__ import annotations

import argparse
import sys

from mmwave_relq.paths import default_jobs
from mmwave_relq.pipeline import PipelineError, PipelineResult, output_rows, run_figures


def report_step(done: int, total: int, result: PipelineResult) -> None:
    rows = output_rows(result)
    written = f"{rows} rows in {result.output}" if rows is not None else "no output file"
    print(f"[{done}/{total}] {result.label}: {written}", flush=True)


def main() -> int:
    parser = argparse.ArgumentParser(description="Regenerate every bundled figure dataset under derived/.")
    parser.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="Worker processes per sweep (default: RELQ_JOBS or 1)",
    )
    args = parser.parse_args()

    try:
        run_figures(jobs=args.jobs or default_jobs(), on_step=report_step)
    except PipelineError as exc:
        print(f"\nERROR during step -> {exc.result.label}")
        return exc.result.returncode

    return 0


if __name__ == "__main__":
    sys.exit(main())
