"""Relative q-parameter: per-window-sample curve, minimum, error bars, bounds.

q_rel is ``2*pi`` times the minimum of the relative-phase density: 1 for
perfectly uniform phases, approaching 0 as the phase locks.  Only the
relative, unconditional variant is estimated; the sequence-conditional q
would need joint statistics over pulses and is not attempted.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import beta

from . import _rng
from ._parallel import pmap
from .circfit import (
    DEFAULT_BINS,
    MIN_FIT_SAMPLES,
    PhaseHistogram,
    fit_wrapped_voigt,
    wrapped_voigt_pdf,
)
from .circstats import TWO_PI
from .errors import AnalysisError, BootstrapUnstableError, FitError, ParameterError

QREL_GRID = 4096
DEFAULT_RESAMPLES = 50
MAX_BOOT_FAILURE = 0.2
_TINY = np.finfo(float).tiny


class QRelMethod(str, Enum):
    VOIGT_FIT = "voigt_fit"
    HISTOGRAM_BOUND = "histogram_bound"
    INTEGRATED_PULSE = "integrated_pulse"


def qrel_from_pdf(params, grid=QREL_GRID):
    """``2*pi * min f_w`` on a grid anchored at the antipode of ``mu_v``, in (0, 1]."""
    phi = params.mu_v + np.pi + TWO_PI * np.arange(grid) / grid
    f = wrapped_voigt_pdf(phi, params)
    return float(np.clip(TWO_PI * f.min(), _TINY, 1.0))


@dataclass
class BootstrapResult:
    q_mean: float
    q_std: float
    p025: float
    p975: float
    samples: np.ndarray = field(repr=False)
    n_failed: int = 0

    def to_dict(self):
        return {"q_mean": self.q_mean, "q_std": self.q_std, "p025": self.p025,
                "p975": self.p975, "n_failed": self.n_failed,
                "samples": [float(x) for x in self.samples]}


def bootstrap_ci(phases, n_resamples=DEFAULT_RESAMPLES, seed=0, *, bins=DEFAULT_BINS,
                 weighted=False, base_fit=None, key=()):
    """Bootstrap q_rel: resample the phases with replacement, refit, recompute.

    Each refit is warm-started from the fit to the full data, which also
    enforces the fit preconditions on the original sample.  ``key`` extends
    the random substream so that separate calls stay independent.
    """
    phases = np.asarray(phases, dtype=float)
    phases = phases[np.isfinite(phases)]
    n = phases.size
    if n < MIN_FIT_SAMPLES:
        raise FitError(f"bootstrap needs >= {MIN_FIT_SAMPLES} phases, got {n}")
    if base_fit is None:
        base_fit = fit_wrapped_voigt(PhaseHistogram.from_phases(phases, bins), weighted=weighted)
    rng = _rng.substream(seed, _rng.BOOTSTRAP, *key)
    qs = []
    failed = 0
    for _ in range(n_resamples):
        sample = phases[rng.integers(0, n, n)]
        try:
            fit = fit_wrapped_voigt(PhaseHistogram.from_phases(sample, bins),
                                    base_fit.params, weighted=weighted, n_starts=1)
        except FitError:
            failed += 1
            continue
        qs.append(qrel_from_pdf(fit.params))
    if failed > MAX_BOOT_FAILURE * n_resamples:
        raise BootstrapUnstableError(f"{failed}/{n_resamples} bootstrap refits failed")
    qs = np.asarray(qs)
    std = float(np.std(qs, ddof=1)) if qs.size > 1 else 0.0
    p025, p975 = np.percentile(qs, [2.5, 97.5]) if qs.size else (np.nan, np.nan)
    return BootstrapResult(float(np.mean(qs)), std, float(p025), float(p975), qs, failed)


@dataclass
class HistogramBound:
    q_bound: float
    density_bounds: np.ndarray
    empty_bins: np.ndarray
    confidence: float

    @property
    def flagged(self):
        return bool(self.empty_bins.size)


def histogram_lower_bound(phases, bins=32, confidence=0.95):
    """Model-free lower confidence bound on q_rel.

    Each bin probability gets a one-sided Clopper-Pearson lower bound at
    level ``1 - eps/B`` (union bound over bins), which is turned into a
    density bound by dividing by the bin width.  Valid as a bound on q_rel
    when the density is roughly constant within each bin.
    """
    phases = np.asarray(phases, dtype=float)
    phases = phases[np.isfinite(phases)]
    n = phases.size
    if not 0 < confidence < 1:
        raise ParameterError("confidence must be in (0, 1)")
    if n < 20 * bins:
        raise ParameterError(f"need >= {20 * bins} phases for {bins} bins, got {n}")
    hist = PhaseHistogram.from_phases(phases, bins)
    c = hist.counts
    alpha = (1.0 - confidence) / bins
    p_lo = np.where(c > 0, beta.ppf(alpha, np.maximum(c, 1), n - c + 1), 0.0)
    dens = p_lo / hist.widths
    q = float(min(TWO_PI * dens.min(), 1.0))
    return HistogramBound(q, dens, np.flatnonzero(c == 0), confidence)


@dataclass
class QRelCurve:
    tau: np.ndarray
    q_rel: np.ndarray
    q_err: np.ndarray
    q_rel_min: float
    argmin_tau: float
    method: QRelMethod
    argmin_index: int = 0
    fits: list = field(default_factory=list, repr=False)
    s_squared: np.ndarray = None
    flagged: list = field(default_factory=list)
    bootstrap: dict = field(default_factory=dict, repr=False)
    seed: int = 0

    @property
    def q_err_min(self):
        """Bootstrap error at the minimising window sample."""
        return float(self.q_err[self.argmin_index])

    def to_dict(self):
        return {
            "method": self.method.value,
            "seed": self.seed,
            "tau": list(map(float, self.tau)),
            "q_rel": [_num(v) for v in self.q_rel],
            "q_err": [_num(v) for v in self.q_err],
            "q_rel_min": self.q_rel_min,
            "argmin_tau": self.argmin_tau,
            "argmin_index": self.argmin_index,
            "s_squared": None if self.s_squared is None else [_num(v) for v in self.s_squared],
            "fits": [None if f is None else f.to_dict() for f in self.fits],
            "flagged": self.flagged,
            "bootstrap": {str(k): v.to_dict() for k, v in sorted(self.bootstrap.items())},
        }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _finish_curve(tau, q, err, method, **kw):
    ok = np.isfinite(q)
    if not ok.any():
        raise AnalysisError("no window sample produced a q_rel value")
    i = int(np.nanargmin(np.where(ok, q, np.inf)))
    return QRelCurve(np.asarray(tau, dtype=float), q, err, float(q[i]), float(tau[i]),
                     method, argmin_index=i, **kw)


def qrel_timeseries(matrix, *, bins=DEFAULT_BINS, weighted=False,
                    n_resamples=DEFAULT_RESAMPLES, bootstrap="argmin", seed=0, threads=1):
    """q_rel(tau) from a fit at every window sample, plus its minimum.

    ``bootstrap`` selects where error bars are computed: ``"all"`` window
    samples, only the ``"argmin"`` sample, or ``"none"``.  Samples whose
    fit fails are reported in ``flagged`` and excluded from the minimum.
    """
    if bootstrap not in ("all", "argmin", "none"):
        raise ParameterError(f"bootstrap must be all, argmin or none, not {bootstrap!r}")
    if matrix.n_pulses < MIN_FIT_SAMPLES:
        raise FitError(f"need >= {MIN_FIT_SAMPLES} pulses, got {matrix.n_pulses}")
    width = matrix.phases.shape[1]

    def fit_one(w):
        col = matrix.column(w)
        try:
            return fit_wrapped_voigt(PhaseHistogram.from_phases(col, bins), weighted=weighted), None
        except FitError as exc:
            return None, str(exc)

    results = pmap(fit_one, range(width), threads)
    fits = [r[0] for r in results]
    q = np.array([np.nan if f is None else qrel_from_pdf(f.params) for f in fits])
    s2 = np.array([np.nan if f is None else f.s_squared for f in fits])
    flagged = [{"index": w, "tau": float(matrix.tau[w]), "reason": r[1]}
               for w, r in enumerate(results) if r[0] is None]
    err = np.full(width, np.nan)
    curve = _finish_curve(matrix.tau, q, err, QRelMethod.VOIGT_FIT, fits=fits,
                          s_squared=s2, flagged=flagged, seed=seed)
    if bootstrap == "none" or n_resamples < 2:
        return curve
    targets = [w for w in range(width) if fits[w] is not None]
    if bootstrap == "argmin":
        targets = [curve.argmin_index]

    def boot_one(w):
        return bootstrap_ci(matrix.column(w), n_resamples, seed, bins=bins,
                            weighted=weighted, base_fit=fits[w], key=(w,))

    for w, b in zip(targets, pmap(boot_one, targets, threads)):
        curve.bootstrap[w] = b
        err[w] = b.q_std
    return curve


def qrel_integrated(integrated, *, bins=DEFAULT_BINS, weighted=False,
                    n_resamples=DEFAULT_RESAMPLES, seed=0):
    """q_rel of the one-phase-per-pulse integrated variant."""
    phases = integrated.phases[np.isfinite(integrated.phases)]
    fit = fit_wrapped_voigt(PhaseHistogram.from_phases(phases, bins), weighted=weighted)
    q = np.array([qrel_from_pdf(fit.params)])
    err = np.full(1, np.nan)
    boot = {}
    if n_resamples >= 2:
        b = bootstrap_ci(phases, n_resamples, seed, bins=bins, weighted=weighted,
                         base_fit=fit, key=(1 << 20,))
        boot[0] = b
        err[0] = b.q_std
    tau = [float(integrated.window.tau.mean())]
    return _finish_curve(tau, q, err, QRelMethod.INTEGRATED_PULSE, fits=[fit],
                         s_squared=np.array([fit.s_squared]), bootstrap=boot, seed=seed)


def qrel_bound_curve(matrix, *, bins=32, confidence=0.95):
    """Model-free lower bound on q_rel at every window sample."""
    width = matrix.phases.shape[1]
    q = np.full(width, np.nan)
    flagged = []
    for w in range(width):
        try:
            hb = histogram_lower_bound(matrix.column(w), bins, confidence)
        except ParameterError as exc:
            flagged.append({"index": w, "tau": float(matrix.tau[w]), "reason": str(exc)})
            continue
        q[w] = hb.q_bound
        if hb.flagged:
            flagged.append({"index": w, "tau": float(matrix.tau[w]),
                            "reason": f"{hb.empty_bins.size} empty bin(s)"})
    return _finish_curve(matrix.tau, q, np.full(width, np.nan), QRelMethod.HISTOGRAM_BOUND,
                         flagged=flagged)
