"""Optical power unit conversions. All powers on the user surface are dBm."""

import numpy as np


def dbm_to_mw(p_dbm):
    return np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)


def dbm_to_watts(p_dbm):
    return dbm_to_mw(p_dbm) / 1000.0


def watts_to_dbm(p_watts):
    p = np.asarray(p_watts, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p * 1000.0)
