"""q_rel^min versus injected power, and the isolation needed to stay below
the locking threshold."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng
from ._parallel import pmap
from .errors import AnalysisError, ParameterError, ThresholdNotFoundError
from .pipeline import AnalysisConfig, simulate_and_analyze
from .synth import LockingCalibration, SimConfig, locking_distribution
from .units import watts_to_dbm

DEFAULT_BASELINE_FRACTION = 0.99
DEFAULT_LIDT_WATTS = 100.0


@dataclass
class PowerSweepResult:
    powers_dbm: np.ndarray
    q_rel_min: np.ndarray
    q_err: np.ndarray
    q_rel_min_integrated: np.ndarray
    q_err_integrated: np.ndarray
    argmin_tau: np.ndarray
    flagged: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    threshold_dbm: float = None
    required_isolation_db: float = None
    q_target: float = None
    lidt_watts: float = None

    def rows(self):
        for i, p in enumerate(self.powers_dbm):
            yield {
                "power_dbm": float(p),
                "q_rel_min": float(self.q_rel_min[i]),
                "q_err": float(self.q_err[i]),
                "q_rel_min_integrated": float(self.q_rel_min_integrated[i]),
                "q_err_integrated": float(self.q_err_integrated[i]),
                "argmin_tau_s": float(self.argmin_tau[i]),
                "seed": self.seeds[i],
            }


def power_sweep(powers_dbm, cfg=None, calib=None, acfg=None, seed=0, eta=1.0, threads=1):
    """Simulate and analyse one acquisition per injected power.

    Each power point gets its own seed derived from ``seed`` and its index,
    so points are independent and the result does not depend on ``threads``.
    Points whose analysis fails are flagged and left as NaN.
    """
    powers = np.asarray(powers_dbm, dtype=float)
    if powers.size < 2:
        raise ParameterError("a sweep needs at least two powers")
    if np.any(np.diff(powers) <= 0):
        raise ParameterError("powers must be strictly increasing")
    cfg = cfg or SimConfig()
    calib = calib or LockingCalibration()
    acfg = acfg or AnalysisConfig()
    seeds = [_rng.child_seed(seed, _rng.SWEEP_POINT, i) for i in range(powers.size)]

    def run(i):
        dist = locking_distribution(powers[i], eta, calib)
        try:
            return simulate_and_analyze(replace(cfg, seed=seeds[i]), dist, acfg), None
        except AnalysisError as exc:
            return None, str(exc)

    out = pmap(run, range(powers.size), threads)
    n = powers.size
    q, err, qi, erri, tau = (np.full(n, np.nan) for _ in range(5))
    flagged = []
    for i, (res, why) in enumerate(out):
        if res is None:
            flagged.append({"index": i, "power_dbm": float(powers[i]), "reason": why})
            continue
        q[i] = res.curve.q_rel_min
        err[i] = res.curve.q_err_min
        tau[i] = res.curve.argmin_tau
        if res.integrated is not None:
            qi[i] = res.integrated.q_rel_min
            erri[i] = res.integrated.q_err_min
    return PowerSweepResult(powers, q, err, qi, erri, tau, flagged, seeds)


def isolation_db(threshold_dbm, lidt_watts=DEFAULT_LIDT_WATTS):
    """Attenuation between the damage-threshold power and the locking threshold."""
    return float(watts_to_dbm(lidt_watts) - threshold_dbm)


def find_threshold(powers_dbm, q, q_target):
    """Highest power at which q_rel^min still reaches ``q_target``.

    The bracketing point is the last one at or above the target with every
    higher-power point below it; the crossing is interpolated linearly.
    """
    powers = np.asarray(powers_dbm, dtype=float)
    q = np.asarray(q, dtype=float)
    ok = np.isfinite(q)
    powers, q = powers[ok], q[ok]
    above = np.flatnonzero(q >= q_target)
    if above.size == 0:
        raise ThresholdNotFoundError(f"no point reaches q_target={q_target:.4g}")
    i = int(above[-1])
    if i == q.size - 1:
        raise ThresholdNotFoundError(f"q_rel^min never drops below q_target={q_target:.4g}")
    p0, p1, q0, q1 = powers[i], powers[i + 1], q[i], q[i + 1]
    return float(p0 + (q0 - q_target) / (q0 - q1) * (p1 - p0))


def sweep_threshold(powers_dbm, q, q_target=None, baseline_fraction=DEFAULT_BASELINE_FRACTION):
    """``(threshold_dbm, q_target)``; the default target is ``baseline_fraction``
    of the lowest-power (no-injection baseline) q_rel^min."""
    q = np.asarray(q, dtype=float)
    if q_target is None:
        finite = q[np.isfinite(q)]
        if finite.size == 0:
            raise ThresholdNotFoundError("sweep holds no valid point")
        q_target = baseline_fraction * finite[0]
    return find_threshold(powers_dbm, q, q_target), float(q_target)


def isolation_threshold(result, q_target=None, lidt_watts=DEFAULT_LIDT_WATTS,
                        baseline_fraction=DEFAULT_BASELINE_FRACTION):
    """Locking threshold and required isolation for a sweep.

    The result object is updated in place and ``(threshold_dbm,
    isolation_db)`` returned.
    """
    threshold, q_target = sweep_threshold(result.powers_dbm, result.q_rel_min, q_target,
                                          baseline_fraction)
    iso = isolation_db(threshold, lidt_watts)
    result.threshold_dbm = threshold
    result.required_isolation_db = iso
    result.q_target = float(q_target)
    result.lidt_watts = float(lidt_watts)
    return threshold, iso
