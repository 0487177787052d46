"""Ground-truth pulse trains and balanced heterodyne waveforms.

There is no laser model here.  Per-pulse phases are drawn directly from a
parameterised circular distribution, and injected power is mapped to a
concentration by a phenomenological calibration (``LockingCalibration``).
That map is a knob for producing known answers, not device physics.
"""

from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import _rng
from .circfit import wrapped_voigt_density
from .circstats import TWO_PI, wrap_phase
from .errors import EmptyInputError, ParameterError


class PhaseKind(str, Enum):
    UNIFORM = "uniform"
    WRAPPED_GAUSSIAN = "wrapped_gaussian"
    WRAPPED_CAUCHY = "wrapped_cauchy"
    WRAPPED_VOIGT = "wrapped_voigt"
    DELTA = "delta"


@dataclass(frozen=True)
class PhaseDistribution:
    kind: PhaseKind = PhaseKind.UNIFORM
    center: float = 0.0
    sigma: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        kind = PhaseKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.sigma < 0 or self.gamma < 0:
            raise ParameterError(f"negative width: sigma={self.sigma}, gamma={self.gamma}")
        if kind is PhaseKind.DELTA and (self.sigma != 0 or self.gamma != 0):
            raise ParameterError("a delta distribution has sigma = gamma = 0")
        if kind is PhaseKind.WRAPPED_GAUSSIAN and self.sigma == 0:
            raise ParameterError("wrapped Gaussian needs sigma > 0")
        if kind is PhaseKind.WRAPPED_CAUCHY and self.gamma == 0:
            raise ParameterError("wrapped Cauchy needs gamma > 0")
        if kind is PhaseKind.WRAPPED_VOIGT and self.sigma == 0 and self.gamma == 0:
            raise ParameterError("wrapped Voigt needs sigma > 0 or gamma > 0")
        object.__setattr__(self, "center", float(wrap_phase(float(self.center))))

    @classmethod
    def uniform(cls):
        return cls(PhaseKind.UNIFORM)

    @classmethod
    def delta(cls, center):
        return cls(PhaseKind.DELTA, center)

    @classmethod
    def wrapped_gaussian(cls, center, sigma):
        return cls(PhaseKind.WRAPPED_GAUSSIAN, center, sigma, 0.0)

    @classmethod
    def wrapped_cauchy(cls, center, gamma):
        return cls(PhaseKind.WRAPPED_CAUCHY, center, 0.0, gamma)

    @classmethod
    def wrapped_voigt(cls, center, sigma, gamma):
        return cls(PhaseKind.WRAPPED_VOIGT, center, sigma, gamma)

    @property
    def widths(self):
        """(sigma, gamma) actually used by the density."""
        if self.kind is PhaseKind.WRAPPED_GAUSSIAN:
            return self.sigma, 0.0
        if self.kind is PhaseKind.WRAPPED_CAUCHY:
            return 0.0, self.gamma
        return self.sigma, self.gamma

    def pdf(self, theta):
        """Density on the circle. Undefined for a delta distribution."""
        theta = np.asarray(theta, dtype=float)
        if self.kind is PhaseKind.UNIFORM:
            return np.full_like(theta, 1.0 / TWO_PI)
        if self.kind is PhaseKind.DELTA:
            raise ParameterError("a delta distribution has no density")
        sigma, gamma = self.widths
        return wrapped_voigt_density(theta, self.center, sigma, gamma)

    def moment(self, n):
        """Analytic circular moment E[exp(i n theta)]."""
        if self.kind is PhaseKind.UNIFORM:
            return 1.0 + 0j if n == 0 else 0j
        sigma, gamma = self.widths
        return complex(np.exp(1j * n * self.center - 0.5 * (sigma * n) ** 2 - gamma * abs(n)))

    def q_rel(self):
        """Exact 2*pi * min density (0 for a delta)."""
        if self.kind is PhaseKind.UNIFORM:
            return 1.0
        if self.kind is PhaseKind.DELTA:
            return 0.0
        # unimodal and symmetric: minimum at the antipode
        return float(TWO_PI * self.pdf(self.center + np.pi))

    def to_dict(self):
        return {"kind": self.kind.value, "center": self.center,
                "sigma": self.sigma, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d):
        return cls(PhaseKind(d.get("kind", "uniform")), d.get("center", 0.0),
                   d.get("sigma", 0.0), d.get("gamma", 0.0))


def sample_phase(dist, rng, size=None):
    """Draw phase(s) in [-pi, pi) from ``dist`` using generator ``rng``."""
    if not isinstance(dist, PhaseDistribution):
        raise ParameterError("expected a PhaseDistribution")
    kind = dist.kind
    if kind is PhaseKind.UNIFORM:
        return rng.uniform(-np.pi, np.pi, size)
    if kind is PhaseKind.DELTA:
        return dist.center if size is None else np.full(size, dist.center)
    sigma, gamma = dist.widths
    x = np.full(() if size is None else size, dist.center, dtype=float)
    if sigma > 0:
        x = x + sigma * rng.standard_normal(size)
    if gamma > 0:
        x = x + gamma * rng.standard_cauchy(size)
    out = wrap_phase(x)
    return float(out) if size is None else out


@dataclass(frozen=True)
class LockingCalibration:
    kappa_ref: float = 25.0
    p_ref_dbm: float = -42.3
    exponent: float = 0.5

    def __post_init__(self):
        if self.kappa_ref < 0:
            raise ParameterError("kappa_ref must be >= 0")

    def concentration(self, power_dbm, eta=1.0):
        if not 0.0 <= eta <= 1.0:
            raise ParameterError(f"coupling fraction must be in [0, 1], got {eta}")
        if eta == 0 or power_dbm == -np.inf:
            return 0.0
        rel = eta * 10.0 ** ((power_dbm - self.p_ref_dbm) / 10.0)
        return float(self.kappa_ref * rel ** self.exponent)


def locking_distribution(power_dbm, eta, calib):
    """Phase distribution of an injected slave laser (phenomenological).

    Concentration ``1/sigma**2 = kappa_ref * (eta * P/P_ref) ** exponent``;
    zero concentration means no locking at all.
    """
    kappa = calib.concentration(power_dbm, eta)
    if kappa <= 0:
        return PhaseDistribution.uniform()
    return PhaseDistribution.wrapped_gaussian(0.0, 1.0 / np.sqrt(kappa))


class Envelope(str, Enum):
    RAISED_COSINE_RECT = "raised_cosine_rect"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SimConfig:
    rep_rate: float = 40e6
    duty_cycle: float = 0.5
    sample_rate: float = 50e9
    n_pulses: int = 8000
    envelope: Envelope = Envelope.RAISED_COSINE_RECT
    rise_time: float = 1e-9
    chirp_rate: float = 0.0
    noise_rms: float = 0.0
    lo_drift_bound: float = 5e-4
    lo_phase0: float = 0.0
    detector_imbalance: float = 0.0
    signal_amplitude: float = 0.5
    lo_amplitude: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "envelope", Envelope(self.envelope))
        if self.rep_rate <= 0 or self.sample_rate <= 0:
            raise ParameterError("rates must be positive")
        if not 0 < self.duty_cycle <= 1:
            raise ParameterError("duty_cycle must be in (0, 1]")
        if self.sample_rate / self.rep_rate < 10:
            raise ParameterError("need at least 10 samples per period")
        if self.n_pulses < 0:
            raise ParameterError("n_pulses must be >= 0")
        if self.noise_rms < 0 or self.lo_drift_bound < 0 or self.rise_time < 0:
            raise ParameterError("noise_rms, lo_drift_bound and rise_time must be >= 0")
        if not -1 < self.detector_imbalance < 1:
            raise ParameterError("detector_imbalance must be in (-1, 1)")
        if 2 * self.rise_time > self.duty_cycle / self.rep_rate:
            raise ParameterError("rise_time too long for the on-time")

    @property
    def period(self):
        return 1.0 / self.rep_rate

    @property
    def sample_period(self):
        return 1.0 / self.sample_rate

    @property
    def on_time(self):
        return self.duty_cycle * self.period

    @property
    def acquisition_time(self):
        return self.n_pulses / self.rep_rate

    @property
    def n_samples(self):
        return int(round(self.acquisition_time * self.sample_rate))

    def to_dict(self):
        d = asdict(self)
        d["envelope"] = self.envelope.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def envelope_shape(tau, cfg):
    """Normalised signal-field envelope (peak 1) at pulse-relative time ``tau``.

    The raised-cosine pulse fills the on-time ``[0, duty*T]``: raised-cosine
    rise over ``rise_time``, flat top, raised-cosine fall ending at duty*T.
    The Gaussian pulse is centred in the on-time with FWHM of half of it.
    """
    tau = np.asarray(tau, dtype=float)
    on = cfg.on_time
    if cfg.envelope is Envelope.GAUSSIAN:
        fwhm = 0.5 * on
        s = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        return np.exp(-0.5 * ((tau - 0.5 * on) / s) ** 2)
    tr = cfg.rise_time
    out = np.zeros_like(tau)
    flat = (tau >= tr) & (tau <= on - tr)
    out[flat] = 1.0
    if tr > 0:
        rise = (tau >= 0) & (tau < tr)
        out[rise] = 0.5 * (1.0 - np.cos(np.pi * tau[rise] / tr))
        fall = (tau > on - tr) & (tau <= on)
        out[fall] = 0.5 * (1.0 - np.cos(np.pi * (on - tau[fall]) / tr))
    return out


@dataclass
class PulseTrain:
    true_phases: np.ndarray
    chirp_rate: float
    amplitude: float
    cfg: SimConfig = field(repr=False)

    @property
    def n_pulses(self):
        return self.true_phases.size

    def phase(self, n, tau):
        return self.true_phases[n] + self.chirp_rate * tau

    def envelope(self, tau):
        return self.amplitude * envelope_shape(tau, self.cfg)


def generate_pulse_train(cfg, dist):
    if cfg.n_pulses == 0:
        raise EmptyInputError("n_pulses = 0")
    rng = _rng.substream(cfg.seed, _rng.PHASES)
    phases = np.asarray(sample_phase(dist, rng, cfg.n_pulses), dtype=float)
    return PulseTrain(phases, cfg.chirp_rate, cfg.signal_amplitude, cfg)


@dataclass
class LoModel:
    """Local oscillator: constant amplitude, per-pulse phase trajectory."""

    amplitude: float
    phases: np.ndarray

    @classmethod
    def drifting(cls, cfg):
        """Slow random walk whose excursion never exceeds ``lo_drift_bound``."""
        n = max(cfg.n_pulses, 1)
        rng = _rng.substream(cfg.seed, _rng.LO_DRIFT)
        walk = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))])
        peak = np.max(np.abs(walk))
        if peak > 0 and cfg.lo_drift_bound > 0:
            walk *= cfg.lo_drift_bound * rng.uniform() / peak
        else:
            walk[:] = 0.0
        return cls(cfg.lo_amplitude, cfg.lo_phase0 + walk)

    @classmethod
    def fixed(cls, amplitude, phase=0.0, n_pulses=1):
        return cls(amplitude, np.full(n_pulses, float(phase)))

    @property
    def max_excursion(self):
        return float(np.max(np.abs(self.phases - self.phases[0])))


@dataclass
class WaveformPair:
    i0: np.ndarray
    i90: np.ndarray
    sample_period: float
    t0: float = 0.0

    def __post_init__(self):
        self.i0 = np.asarray(self.i0, dtype=float)
        self.i90 = np.asarray(self.i90, dtype=float)
        if self.i0.shape != self.i90.shape or self.i0.ndim != 1:
            raise ParameterError("quadratures must be 1-D arrays of equal length")
        if not self.sample_period > 0:
            raise ParameterError("sample_period must be > 0")

    def __len__(self):
        return self.i0.size

    @property
    def times(self):
        return self.t0 + self.sample_period * np.arange(self.i0.size)


_BLOCK_PULSES = 256


def _sample_grid(cfg, n_pulses, first_pulse=0):
    """Per-sample pulse index and pulse-relative time for pulses
    ``[first_pulse, n_pulses)``."""
    dt = cfg.sample_period
    ratio = cfg.sample_rate / cfg.rep_rate
    per = int(round(ratio))
    if abs(ratio - per) < 1e-9 * ratio:
        k = np.arange(first_pulse * per, n_pulses * per)
        idx = k // per
        tau = (k - idx * per) * dt
        return idx, tau
    k0 = int(round(first_pulse * ratio))
    k1 = int(round(n_pulses * ratio))
    t = dt * np.arange(k0, k1)
    idx = np.floor(t * cfg.rep_rate + 1e-9).astype(np.int64)
    np.clip(idx, 0, n_pulses - 1, out=idx)
    tau = np.maximum(t - idx * cfg.period, 0.0)
    return idx, tau


def _blocks(n_pulses):
    for start in range(0, n_pulses, _BLOCK_PULSES):
        yield start, min(start + _BLOCK_PULSES, n_pulses)


def optical_fields(train, lo, cfg, first_pulse=0, last_pulse=None):
    """Complex signal and LO fields on the sample grid."""
    last = train.n_pulses if last_pulse is None else last_pulse
    idx, tau = _sample_grid(cfg, last, first_pulse)
    a_s = train.envelope(tau)
    e_s = a_s * np.exp(1j * (train.true_phases[idx] + train.chirp_rate * tau))
    lo_phase = lo.phases[np.minimum(idx, lo.phases.size - 1)]
    e_lo = lo.amplitude * np.exp(1j * lo_phase)
    return e_s, e_lo, idx, tau


def balanced_outputs(e_s, e_lo, imbalance=0.0):
    """Four detector intensities of a 90-degree hybrid and the two differences."""
    g_plus = 1.0 + 0.5 * imbalance
    g_minus = 1.0 - 0.5 * imbalance
    shifted = np.exp(-0.5j * np.pi) * e_s
    i1 = 0.5 * np.abs(e_s + e_lo) ** 2
    i2 = 0.5 * np.abs(e_s - e_lo) ** 2
    i3 = 0.5 * np.abs(shifted + e_lo) ** 2
    i4 = 0.5 * np.abs(shifted - e_lo) ** 2
    return g_plus * i1 - g_minus * i2, g_plus * i3 - g_minus * i4


def synthesize_heterodyne(train, lo, cfg, rng=None):
    """Quadrature waveforms I_0 = A cos(dtheta), I_90 = A sin(dtheta), A = 2 A_S A_LO.

    Built from the four hybrid outputs as I_1 - I_2 and I_3 - I_4, plus
    white Gaussian noise of ``noise_rms`` on each quadrature.
    """
    n = train.n_pulses
    idx_all, _ = _sample_grid(cfg, n)
    i0 = np.empty(idx_all.size)
    i90 = np.empty(idx_all.size)
    pos = 0
    for a, b in _blocks(n):
        e_s, e_lo, _, _ = optical_fields(train, lo, cfg, a, b)
        q0, q90 = balanced_outputs(e_s, e_lo, cfg.detector_imbalance)
        i0[pos:pos + q0.size] = q0
        i90[pos:pos + q0.size] = q90
        pos += q0.size
    if cfg.noise_rms > 0:
        if rng is None:
            rng = _rng.substream(cfg.seed, _rng.NOISE)
        i0 += cfg.noise_rms * rng.standard_normal(i0.size)
        i90 += cfg.noise_rms * rng.standard_normal(i90.size)
    return WaveformPair(i0, i90, cfg.sample_period, 0.0)


def ground_truth_phase(train, lo, cfg):
    """Relative phase theta - theta_LO on the sample grid, wrapped."""
    idx, tau = _sample_grid(cfg, train.n_pulses)
    lo_phase = lo.phases[np.minimum(idx, lo.phases.size - 1)]
    return wrap_phase(train.true_phases[idx] + train.chirp_rate * tau - lo_phase)


def simulate(cfg, dist):
    """Pulse train, LO and waveform for one acquisition."""
    train = generate_pulse_train(cfg, dist)
    lo = LoModel.drifting(cfg)
    return train, lo, synthesize_heterodyne(train, lo, cfg)
