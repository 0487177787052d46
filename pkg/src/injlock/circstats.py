"""Small circular-statistics helpers used across the pipeline."""

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_phase(x):
    """Map angles onto [-pi, pi).

    Values already inside the interval are returned untouched (bit-exact),
    which keeps degenerate draws such as a fixed phase of 0.7 exact.
    """
    x = np.asarray(x, dtype=float)
    inside = (x >= -np.pi) & (x < np.pi)
    if np.all(inside):
        return x.copy() if x.ndim else x[()]
    w = np.mod(x + np.pi, TWO_PI) - np.pi
    # np.mod can round up to exactly 2*pi
    w = np.where(w >= np.pi, -np.pi, w)
    out = np.where(inside, x, w)
    return out if out.ndim else out[()]


def angular_difference(a, b):
    """Signed smallest difference a - b, in [-pi, pi)."""
    return wrap_phase(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def mean_resultant(phases, axis=None):
    """Complex first trigonometric moment of a sample."""
    return np.mean(np.exp(1j * np.asarray(phases, dtype=float)), axis=axis)


def resultant_length(phases, axis=None):
    return np.abs(mean_resultant(phases, axis=axis))


def circular_mean(phases, axis=None):
    return wrap_phase(np.angle(mean_resultant(phases, axis=axis)))


def circular_variance(phases, axis=None):
    return 1.0 - resultant_length(phases, axis=axis)


def circular_std(phases, axis=None):
    r = resultant_length(phases, axis=axis)
    with np.errstate(divide="ignore"):
        return np.sqrt(-2.0 * np.log(r))
