"""Polarization scan of the injected light over the Poincare sphere.

The injected field couples into the cavity with efficiency
``(1 + s . s_opt) / 2`` for Stokes vectors ``s`` and ``s_opt``.  For every
sampled state the full synthetic acquisition and analysis is run, and a
single-photon-detector count of the light reflected off the unbiased
cavity is drawn; poorly coupled light is reflected, so both maps should
share their minimum.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull

from . import _rng
from ._parallel import pmap
from .errors import AnalysisError, NormalizationError, ParameterError
from .phasex import WindowSpec
from .pipeline import AnalysisConfig, fast_analysis, simulate_and_analyze
from .synth import LockingCalibration, SimConfig, locking_distribution

MIN_GRID_POINTS = 16


@dataclass(frozen=True)
class StokesState:
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        n = np.sqrt(self.s1**2 + self.s2**2 + self.s3**2)
        if abs(n - 1.0) > 1e-9:
            raise NormalizationError(f"Stokes vector has norm {n}, expected 1")

    @classmethod
    def normalized(cls, v):
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise NormalizationError("zero Stokes vector")
        v = v / n
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_angles(cls, azimuth, ellipticity):
        """Polarization-ellipse azimuth psi and ellipticity angle chi (radians)."""
        c = np.cos(2 * ellipticity)
        return cls.normalized([c * np.cos(2 * azimuth), c * np.sin(2 * azimuth),
                               np.sin(2 * ellipticity)])

    @property
    def vector(self):
        return np.array([self.s1, self.s2, self.s3])


def coupling_efficiency(state, optimal):
    """Fraction of injected power coupling into the cavity."""
    for s in (state, optimal):
        v = s.vector if isinstance(s, StokesState) else np.asarray(s, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise NormalizationError("coupling needs unit Stokes vectors")
    a = state.vector if isinstance(state, StokesState) else np.asarray(state, dtype=float)
    b = optimal.vector if isinstance(optimal, StokesState) else np.asarray(optimal, dtype=float)
    return float(np.clip(0.5 * (1.0 + a @ b), 0.0, 1.0))


@dataclass(frozen=True)
class SpdConfig:
    r_floor: float = 2e3
    r_peak: float = 2e5
    dwell: float = 0.1


def reflected_mean(eta, spd):
    return (spd.r_floor + spd.r_peak * (1.0 - eta)) * spd.dwell


def reflected_counts(state, optimal, spd, rng, size=None):
    """SPD counts of light reflected at the unbiased cavity (Poisson)."""
    return rng.poisson(reflected_mean(coupling_efficiency(state, optimal), spd), size)


def fibonacci_sphere(n):
    """``n`` near-uniform unit vectors (golden-angle spiral)."""
    if n < 1:
        raise ParameterError("need at least one point")
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def azimuth_ellipticity_grid(n_azimuth, n_ellipticity):
    """Regular grid in (azimuth, ellipticity) with the poles included once."""
    chis = np.linspace(-np.pi / 4, np.pi / 4, n_ellipticity)
    pts = []
    for chi in chis:
        if abs(abs(chi) - np.pi / 4) < 1e-12:
            pts.append(StokesState.from_angles(0.0, chi).vector)
            continue
        for psi in np.arange(n_azimuth) * np.pi / n_azimuth:
            pts.append(StokesState.from_angles(psi, chi).vector)
    return np.array(pts)


def sphere_grid(kind="fibonacci", n=256, n_azimuth=16, n_ellipticity=9):
    if kind == "fibonacci":
        return fibonacci_sphere(n)
    if kind == "azel":
        return azimuth_ellipticity_grid(n_azimuth, n_ellipticity)
    raise ParameterError(f"unknown sphere grid {kind!r}")


def grid_neighbors(points):
    """Adjacency of a spherical point set from its convex-hull triangulation."""
    hull = ConvexHull(points)
    nbrs = [set() for _ in range(len(points))]
    for tri in hull.simplices:
        for a in tri:
            for b in tri:
                if a != b:
                    nbrs[a].add(int(b))
    return nbrs


def nearest_index(points, v):
    return int(np.argmax(points @ np.asarray(v, dtype=float)))


def within_one_cell(points, i, j, nbrs=None):
    """Grid points ``i`` and ``j`` coincide or share a triangulation edge."""
    if i == j:
        return True
    nbrs = nbrs or grid_neighbors(points)
    return j in nbrs[i]


@dataclass
class PolScanResult:
    states: np.ndarray
    q_rel_min: np.ndarray
    spd_counts: np.ndarray
    eta: np.ndarray
    power_dbm: float
    optimal: np.ndarray
    flagged: list = field(default_factory=list)

    @property
    def argmin_q(self):
        q = np.where(np.isfinite(self.q_rel_min), self.q_rel_min, np.inf)
        return int(np.argmin(q))

    @property
    def argmin_counts(self):
        return int(np.argmin(self.spd_counts))

    def rows(self):
        for i, s in enumerate(self.states):
            yield {"index": i, "s1": float(s[0]), "s2": float(s[1]), "s3": float(s[2]),
                   "eta": float(self.eta[i]), "q_rel_min": float(self.q_rel_min[i]),
                   "spd_counts": int(self.spd_counts[i])}


def default_scan_sim():
    """Reduced per-point acquisition for desk-scale scans."""
    return SimConfig(sample_rate=1e9, n_pulses=8000, noise_rms=0.005)


def default_scan_analysis():
    return fast_analysis(AnalysisConfig(), window=WindowSpec.explicit(6e-9, 7e-9))


def scan_sphere(grid, power_dbm, optimal, cfg=None, calib=None, acfg=None, spd=None,
                seed=0, threads=1):
    """q_rel^min and SPD back-reflection counts at every sphere point."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != 3 or len(grid) < MIN_GRID_POINTS:
        raise ParameterError(f"need an (n, 3) grid with n >= {MIN_GRID_POINTS}")
    opt = optimal if isinstance(optimal, StokesState) else StokesState.normalized(optimal)
    cfg = cfg or default_scan_sim()
    calib = calib or LockingCalibration()
    acfg = acfg or default_scan_analysis()
    spd = spd or SpdConfig()
    states = [StokesState.normalized(v) for v in grid]
    eta = np.array([coupling_efficiency(s, opt) for s in states])

    def run(i):
        dist = locking_distribution(power_dbm, eta[i], calib)
        point_seed = _rng.child_seed(seed, _rng.SCAN_POINT, i)
        counts = int(_rng.substream(seed, _rng.SPD, i).poisson(reflected_mean(eta[i], spd)))
        try:
            res = simulate_and_analyze(replace(cfg, seed=point_seed), dist, acfg)
            return res.curve.q_rel_min, counts, None
        except AnalysisError as exc:
            return np.nan, counts, str(exc)

    out = pmap(run, range(len(states)), threads)
    q = np.array([o[0] for o in out], dtype=float)
    counts = np.array([o[1] for o in out], dtype=np.int64)
    flagged = [{"index": i, "reason": o[2]} for i, o in enumerate(out) if o[2] is not None]
    return PolScanResult(np.array([s.vector for s in states]), q, counts, eta,
                         float(power_dbm), opt.vector, flagged)
