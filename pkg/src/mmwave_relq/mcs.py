"""
CQI -> SINR threshold -> spectral efficiency mapping.

The default table is the 15-row CQI mapping used for the numerical study
(QPSK to 64QAM). Row 0 (outage) is implicit: SINR below the CQI-1 threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_COLUMNS = ["cqi", "modulation", "code_rate", "spectral_efficiency", "sinr_db"]


@dataclass(frozen=True)
class McsRow:
    cqi: int
    modulation: str
    code_rate: float
    spectral_efficiency: float
    sinr_db: float


@dataclass(frozen=True)
class McsTable:
    rows: tuple[McsRow, ...]

    def __post_init__(self) -> None:
        if not self.rows:
            raise ValueError("MCS table has no rows")
        thresholds = [row.sinr_db for row in self.rows]
        efficiencies = [row.spectral_efficiency for row in self.rows]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("MCS SINR thresholds must be strictly increasing")
        if any(b <= a for a, b in zip(efficiencies, efficiencies[1:])):
            raise ValueError("MCS spectral efficiencies must be strictly increasing")
        if efficiencies[0] <= 0:
            raise ValueError("MCS spectral efficiencies must be positive")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def thresholds_db(self) -> np.ndarray:
        return np.array([row.sinr_db for row in self.rows])

    def thresholds_linear(self) -> np.ndarray:
        return 10.0 ** (self.thresholds_db() / 10.0)

    def efficiencies(self) -> np.ndarray:
        return np.array([row.spectral_efficiency for row in self.rows])

    @classmethod
    def default(cls) -> "McsTable":
        return DEFAULT_MCS_TABLE


DEFAULT_MCS_TABLE = McsTable(
    rows=(
        McsRow(1, "QPSK", 78 / 1024, 0.152, -9.478),
        McsRow(2, "QPSK", 120 / 1024, 0.234, -6.658),
        McsRow(3, "QPSK", 193 / 1024, 0.377, -4.098),
        McsRow(4, "QPSK", 308 / 1024, 0.602, -1.798),
        McsRow(5, "QPSK", 449 / 1024, 0.877, 0.399),
        McsRow(6, "QPSK", 602 / 1024, 1.176, 2.424),
        McsRow(7, "16QAM", 378 / 1024, 1.477, 4.489),
        McsRow(8, "16QAM", 490 / 1024, 1.914, 6.367),
        McsRow(9, "16QAM", 616 / 1024, 2.406, 8.456),
        McsRow(10, "64QAM", 466 / 1024, 2.730, 10.266),
        McsRow(11, "64QAM", 567 / 1024, 3.322, 12.218),
        McsRow(12, "64QAM", 666 / 1024, 3.902, 14.122),
        McsRow(13, "64QAM", 772 / 1024, 4.523, 15.849),
        McsRow(14, "64QAM", 873 / 1024, 5.115, 17.786),
        McsRow(15, "64QAM", 948 / 1024, 5.555, 19.809),
    )
)


def parse_code_rate(raw: str) -> float:
    """Accept '948/1024' as well as '0.9258'."""
    raw = raw.strip()
    if "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    return float(raw)


def load_mcs_table(path: Path) -> McsTable:
    """
    Load an MCS table from CSV with columns
    cqi, modulation, code_rate, spectral_efficiency, sinr_db.
    A CQI-0 outage row, if present, is skipped.
    """
    if not path.exists():
        raise FileNotFoundError(f"MCS table not found: {path}")

    rows: list[McsRow] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing MCS columns {sorted(missing)}")
        for raw in reader:
            cqi = int(raw["cqi"])
            if cqi == 0:
                continue
            rows.append(
                McsRow(
                    cqi=cqi,
                    modulation=raw["modulation"].strip(),
                    code_rate=parse_code_rate(raw["code_rate"]),
                    spectral_efficiency=float(raw["spectral_efficiency"]),
                    sinr_db=float(raw["sinr_db"]),
                )
            )

    rows.sort(key=lambda row: row.cqi)
    return McsTable(rows=tuple(rows))
