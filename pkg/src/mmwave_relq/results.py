from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

SCHEMA_VERSION = 1
SCHEMA_COMMENT = f"# schema_version={SCHEMA_VERSION}"


def atomic_write_text(path: Path, text: str) -> None:
    """
    Write text to path atomically: write to .tmp then rename.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    tmp_path.replace(path)


def write_csv(
    path: Path,
    fieldnames: Sequence[str],
    rows: Iterable[dict[str, Any]],
    comments: Sequence[str] = (),
) -> int:
    """
    Write rows under a schema-version comment (plus any extra `# key=value`
    comments) and a header row.
    Returns the number of data rows written.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    n = 0
    with open(tmp_path, "w", newline="", encoding="utf-8") as f:
        f.write(SCHEMA_COMMENT + "\n")
        for line in comments:
            f.write(f"# {line}\n")
        w = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)
            n += 1
    tmp_path.replace(path)
    return n


def read_csv_rows(path: Path) -> list[dict[str, str]]:
    """Read a CSV written by write_csv, skipping '#' comment lines."""
    with open(path, newline="", encoding="utf-8") as f:
        lines = (line for line in f if not line.startswith("#"))
        return list(csv.DictReader(lines))


def iter_result_files(root: Path) -> Iterator[Path]:
    """
    Yield CSV files under root, sorted by relative path.
    Skips partially written .tmp files.
    """
    if not root.exists():
        return

    for p in sorted(root.rglob("*.csv")):
        if p.is_file():
            yield p
