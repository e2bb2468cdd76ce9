from __future__ import annotations

import math

import numpy as np

DBM_TO_DBW = 30.0


def db_to_linear(db):
    """
    Convert a power ratio in dB to linear scale.
    Works on floats and numpy arrays alike.
    """
    if isinstance(db, np.ndarray):
        return np.power(10.0, db / 10.0)
    return 10.0 ** (db / 10.0)


def linear_to_db(value):
    if isinstance(value, np.ndarray):
        return 10.0 * np.log10(value)
    if value <= 0:
        return -math.inf
    return 10.0 * math.log10(value)


def dbm_per_hz_to_watts_per_hz(psd_dbm_hz: float) -> float:
    return 10.0 ** ((psd_dbm_hz - DBM_TO_DBW) / 10.0)


def degrees_to_radians(deg: float) -> float:
    return deg * math.pi / 180.0


def mbps(bits_per_second: float) -> float:
    return bits_per_second / 1e6 if bits_per_second else 0.0
