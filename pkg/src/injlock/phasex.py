"""Pulse segmentation, analysis window and relative-phase extraction.

Phase convention: the relative phase of a sample is the angle of the
point ``(x, y) = (I_0, I_90)`` measured from ``(1, 0)``, i.e.
``atan2(I_90, I_0)``.  This matches ``I_0 = A cos`` and ``I_90 = A sin``.
A global reflection or rotation of this convention leaves q_rel unchanged.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    EmptyInputError,
    ParameterError,
    UndefinedPhaseError,
    WindowSelectionError,
)

MASK_FRACTION = 0.05


@dataclass
class Segments:
    """Per-pulse sample matrices, shape (n_pulses, samples_per_period)."""

    i0: np.ndarray
    i90: np.ndarray
    sample_period: float
    starts: np.ndarray

    @property
    def n_pulses(self):
        return self.i0.shape[0]

    @property
    def n_samples(self):
        return self.i0.shape[1]

    @property
    def tau(self):
        return self.sample_period * np.arange(self.n_samples)

    def envelope(self):
        """Pulse-averaged amplitude sqrt(I_0**2 + I_90**2) per sample."""
        return np.mean(np.hypot(self.i0, self.i90), axis=0)


def samples_per_period(sample_period, rep_rate):
    ratio = 1.0 / (sample_period * rep_rate)
    per = int(round(ratio))
    return per if abs(ratio - per) < 1e-9 * ratio else int(np.floor(ratio))


def segment_pulses(wf, rep_rate, trigger_offset=0.0):
    """Cut a waveform into complete repetition periods.

    Period ``n`` starts at sample ``round((trigger_offset + n*T - t0)/dt)``;
    each segment holds ``floor(T/dt)`` samples and an incomplete trailing
    period is dropped.
    """
    if not rep_rate > 0:
        raise ParameterError(f"rep_rate must be > 0, got {rep_rate}")
    dt = wf.sample_period
    per = samples_per_period(dt, rep_rate)
    if per < 1:
        raise ParameterError("sample rate below repetition rate")
    first = int(round((trigger_offset - wf.t0) / dt))
    if first < 0:
        raise ParameterError("trigger offset precedes the first sample")
    ratio = 1.0 / (dt * rep_rate)
    if per == round(ratio) and abs(ratio - per) < 1e-9 * ratio:
        n = max((len(wf) - first) // per, 0)
        starts = first + per * np.arange(n)
    else:
        n_max = int(np.floor((len(wf) - first) / ratio)) + 1
        starts = first + np.round(ratio * np.arange(n_max)).astype(np.int64)
        starts = starts[starts + per <= len(wf)]
        n = starts.size
    if n == 0:
        raise EmptyInputError("waveform holds no complete period")
    cols = starts[:, None] + np.arange(per)[None, :]
    return Segments(wf.i0[cols], wf.i90[cols], dt, starts)


def find_trigger_offset(wf, rep_rate, threshold_frac=0.5):
    """Trigger offset from the folded envelope: time of the rising
    half-maximum crossing, backed off by one sample."""
    seg = segment_pulses(wf, rep_rate, wf.t0)
    env = seg.envelope()
    level = threshold_frac * env.max()
    above = env >= level
    rising = np.flatnonzero(above & ~np.roll(above, 1))
    if rising.size == 0:
        return wf.t0
    k = (rising[0] - 1) % seg.n_samples
    return wf.t0 + k * wf.sample_period


class WindowMode(str, Enum):
    AMPLITUDE_THRESHOLD = "amplitude_threshold"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class WindowSpec:
    mode: WindowMode = WindowMode.AMPLITUDE_THRESHOLD
    threshold_frac: float = 0.5
    explicit_range: tuple = None

    def __post_init__(self):
        mode = WindowMode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode is WindowMode.AMPLITUDE_THRESHOLD and not 0 < self.threshold_frac < 1:
            raise ParameterError("threshold_frac must be in (0, 1)")
        if mode is WindowMode.EXPLICIT:
            if self.explicit_range is None or len(self.explicit_range) != 2:
                raise ParameterError("explicit window needs (start, stop) in seconds")
            lo, hi = map(float, self.explicit_range)
            if hi < lo:
                raise ParameterError("explicit window stop precedes start")
            object.__setattr__(self, "explicit_range", (lo, hi))

    @classmethod
    def explicit(cls, start, stop):
        return cls(WindowMode.EXPLICIT, 0.5, (start, stop))

    def to_dict(self):
        return {"mode": self.mode.value, "threshold_frac": self.threshold_frac,
                "explicit_range": None if self.explicit_range is None else list(self.explicit_range)}

    @classmethod
    def from_dict(cls, d):
        rng = d.get("explicit_range")
        return cls(d.get("mode", "amplitude_threshold"), d.get("threshold_frac", 0.5),
                   None if rng is None else tuple(rng))


@dataclass(frozen=True)
class Window:
    """Inclusive sample-index range ``[w_lo, w_hi]`` inside a period."""

    w_lo: int
    w_hi: int
    sample_period: float

    @property
    def indices(self):
        return np.arange(self.w_lo, self.w_hi + 1)

    @property
    def tau(self):
        return self.indices * self.sample_period

    @property
    def size(self):
        return self.w_hi - self.w_lo + 1

    def to_dict(self):
        return {"w_lo": self.w_lo, "w_hi": self.w_hi, "sample_period": self.sample_period,
                "tau_start": self.w_lo * self.sample_period,
                "tau_stop": self.w_hi * self.sample_period}


def select_window(segments, spec=None):
    """Contiguous window around the envelope peak where the pulse-averaged
    amplitude stays above ``threshold_frac`` of its maximum."""
    if spec is None:
        spec = WindowSpec()
    if segments.n_pulses < 1:
        raise EmptyInputError("no pulses")
    dt = segments.sample_period
    if spec.mode is WindowMode.EXPLICIT:
        start, stop = spec.explicit_range
        lo = int(np.ceil(start / dt - 1e-9))
        hi = int(np.floor(stop / dt + 1e-9))
        lo, hi = max(lo, 0), min(hi, segments.n_samples - 1)
        if hi < lo:
            raise WindowSelectionError(f"explicit window {spec.explicit_range} holds no sample")
        return Window(lo, hi, dt)
    env = segments.envelope()
    peak = env.max()
    if not peak > 0:
        raise WindowSelectionError("flat zero envelope")
    above = env >= spec.threshold_frac * peak
    k = int(np.argmax(env))
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < env.size - 1 and above[hi + 1]:
        hi += 1
    if not above[k]:
        raise WindowSelectionError("no sample above threshold")
    return Window(lo, hi, dt)


def extract_phase(i0, i90):
    """Relative phase of one sample: angle of ``(i0, i90)`` from ``(1, 0)`` in [-pi, pi)."""
    if i0 == 0 and i90 == 0:
        raise UndefinedPhaseError("phase of (0, 0) is undefined")
    phi = float(np.arctan2(i90, i0))
    return -np.pi if phi >= np.pi else phi


def extract_phases(i0, i90):
    """Vectorised :func:`extract_phase`; (0, 0) samples become NaN."""
    i0 = np.asarray(i0, dtype=float)
    i90 = np.asarray(i90, dtype=float)
    phi = np.arctan2(i90, i0)
    phi = np.where(phi >= np.pi, -np.pi, phi)
    return np.where((i0 == 0) & (i90 == 0), np.nan, phi)


@dataclass
class PulsePhaseMatrix:
    """Relative phases, shape (N, W). Masked entries are NaN and False in ``valid``."""

    phases: np.ndarray
    window: Window
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.phases = np.atleast_2d(np.asarray(self.phases, dtype=float))
        if self.valid is None:
            self.valid = np.isfinite(self.phases)
        if self.phases.shape[1] < 1:
            raise ParameterError("window must hold at least one sample")

    @property
    def n_pulses(self):
        return self.phases.shape[0]

    @property
    def tau(self):
        return self.window.tau

    def column(self, w):
        col = self.phases[:, w]
        return col[self.valid[:, w]]

    def to_dict(self):
        return {"window": self.window.to_dict(),
                "phases": [[None if not np.isfinite(v) else float(v) for v in row]
                           for row in self.phases]}


def phase_matrix(segments, window, mask_fraction=MASK_FRACTION):
    """Per-pulse, per-window-sample relative phases.

    Samples whose instantaneous amplitude is below ``mask_fraction`` of the
    peak pulse-averaged envelope are masked.
    """
    idx = window.indices
    x = segments.i0[:, idx]
    y = segments.i90[:, idx]
    phases = extract_phases(x, y)
    floor = mask_fraction * segments.envelope().max()
    valid = np.isfinite(phases) & (np.hypot(x, y) >= floor)
    phases = np.where(valid, phases, np.nan)
    return PulsePhaseMatrix(phases, window, valid)


@dataclass
class IntegratedPulses:
    i0_int: np.ndarray
    i90_int: np.ndarray
    phases: np.ndarray
    window: Window


def integrate_pulse(segments, window):
    """Sum each quadrature over the window, then take one phase per pulse."""
    idx = window.indices
    s0 = segments.i0[:, idx].sum(axis=1)
    s90 = segments.i90[:, idx].sum(axis=1)
    dead = (s0 == 0) & (s90 == 0)
    if np.any(dead):
        raise UndefinedPhaseError(f"{int(dead.sum())} pulse(s) integrate to (0, 0)")
    return IntegratedPulses(s0, s90, extract_phases(s0, s90), window)
