"""Wrapped Voigt density, phase histograms and the least-squares fit.

The wrapped density is the 2*pi-periodic sum of Voigt profiles.  It is
evaluated as the exact infinite sum using whichever representation
converges fastest:

* wide profiles use the Fourier series of the wrapped density, whose
  coefficients are the Voigt characteristic function
  ``exp(-sigma**2 n**2 / 2 - gamma |n|)``;
* narrow profiles use the direct image sum over ``|k| <= k_max`` plus the
  closed-form wrapped-Cauchy remainder for the heavy Lorentzian tails
  beyond ``k_max``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import polygamma, wofz

from .circstats import TWO_PI, wrap_phase
from .errors import (
    DegenerateProfileError,
    FitError,
    NonConvergenceError,
    ParameterError,
)

SQRT2 = np.sqrt(2.0)
SQRT2PI = np.sqrt(2.0 * np.pi)
SQRTPI = np.sqrt(np.pi)

DEFAULT_BINS = 64
DEFAULT_K_MAX = 10
MIN_FIT_SAMPLES = 100

# Fourier representation is used when it converges within this many terms
_FOURIER_MAX_TERMS = 128
# -log of the largest neglected Fourier coefficient
_FOURIER_LOG_CUTOFF = 39.2
# below this the series is dominated by roundoff; the image sum takes over
_FOURIER_FLOOR = 1e-9
# below this gamma the Cauchy remainder is summed as a series
_SMALL_GAMMA = 1e-3

_STEP_TOL = 1e-8
_REL_OBJ_TOL = 1e-10
_MAX_ITER = 500

# fit works on (mu, log sigma, log gamma), clamped to these ranges
_LOG_SIGMA_BOUNDS = (np.log(1e-4), np.log(50.0))
_LOG_GAMMA_BOUNDS = (np.log(1e-9), np.log(50.0))


def _check_widths(sigma, gamma):
    if sigma < 0 or gamma < 0:
        raise ParameterError(f"sigma and gamma must be >= 0, got {sigma}, {gamma}")
    if sigma == 0 and gamma == 0:
        raise DegenerateProfileError("Voigt profile needs sigma > 0 or gamma > 0")


def voigt_pdf(phi, mu_v, sigma, gamma):
    """Voigt density (Gaussian of std ``sigma`` convolved with a Cauchy of
    half-width ``gamma``) located at ``mu_v``, evaluated on the real line."""
    sigma = float(sigma)
    gamma = float(gamma)
    _check_widths(sigma, gamma)
    x = np.asarray(phi, dtype=float) - mu_v
    if gamma == 0:
        return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * SQRT2PI)
    if sigma == 0:
        return gamma / (np.pi * (x * x + gamma * gamma))
    z = (x + 1j * gamma) / (sigma * SQRT2)
    return wofz(z).real / (sigma * SQRT2PI)


def _fourier_terms(sigma, gamma):
    """Number of Fourier terms needed, or None if too many."""
    if sigma > 0:
        s2 = sigma * sigma
        m = (-gamma + np.sqrt(gamma * gamma + 2.0 * s2 * _FOURIER_LOG_CUTOFF)) / s2
    else:
        m = _FOURIER_LOG_CUTOFF / gamma
    m = int(np.ceil(m))
    return m if m <= _FOURIER_MAX_TERMS else None


def _cauchy_denominator(x, gamma):
    # cosh(gamma) - cos(x) without cancellation
    return 2.0 * np.sinh(0.5 * gamma) ** 2 + 2.0 * np.sin(0.5 * x) ** 2


def _wrapped_cauchy(x, gamma):
    return np.sinh(gamma) / (TWO_PI * _cauchy_denominator(x, gamma))


def _cauchy_remainder(x, xs, gamma, k_max, grad=False):
    """Wrapped-Cauchy mass of the images beyond ``|k| > k_max``.

    For small ``gamma`` the closed form ``C - sum(L)`` cancels badly, so
    the remainder is summed as a trigamma series instead (error O(gamma**3)).
    """
    if gamma >= _SMALL_GAMMA:
        r = _wrapped_cauchy(x, gamma) - (gamma / (np.pi * (xs * xs + gamma * gamma))).sum(axis=-1)
        if not grad:
            return r
        return (r, *_cauchy_tail_grad(x, xs, gamma))
    u = x / TWO_PI
    a, b = k_max + 1 + u, k_max + 1 - u
    s2 = (polygamma(1, a) + polygamma(1, b)) / (4.0 * np.pi**2)
    r = gamma / np.pi * s2
    if not grad:
        return r
    d_x = gamma / np.pi * (polygamma(2, a) - polygamma(2, b)) / (8.0 * np.pi**3)
    return r, -d_x, s2 / np.pi


def _cauchy_tail_grad(x, xs, gamma):
    """(d/dmu, d/dgamma) of the wrapped-Cauchy remainder beyond the images."""
    den = _cauchy_denominator(x, gamma)
    dc_dx = -np.sinh(gamma) * np.sin(x) / (TWO_PI * den * den)
    num = 2.0 * np.sin(0.5 * x) ** 2 - 2.0 * np.cos(x) * np.sinh(0.5 * gamma) ** 2
    dc_dg = num / (TWO_PI * den * den)
    q = xs * xs + gamma * gamma
    dl_dx = (-2.0 * gamma * xs / (np.pi * q * q)).sum(axis=-1)
    dl_dg = ((xs * xs - gamma * gamma) / (np.pi * q * q)).sum(axis=-1)
    return -(dc_dx - dl_dx), dc_dg - dl_dg


def _wrapped_fourier(x, sigma, gamma, n_terms, grad=False):
    n = np.arange(1, n_terms + 1, dtype=float)
    a = np.exp(-0.5 * sigma * sigma * n * n - gamma * n)
    nx = np.multiply.outer(x, n)
    c = np.cos(nx)
    f = (1.0 + 2.0 * (c @ a)) / TWO_PI
    if not grad:
        return f
    s = np.sin(nx)
    d_mu = 2.0 * (s @ (n * a)) / TWO_PI
    d_sigma = 2.0 * (c @ (-sigma * n * n * a)) / TWO_PI
    d_gamma = 2.0 * (c @ (-n * a)) / TWO_PI
    return f, d_mu, d_sigma, d_gamma


def _wrapped_images(x, sigma, gamma, k_max, grad=False):
    x = wrap_phase(x)
    k = np.arange(-k_max, k_max + 1, dtype=float)
    xs = np.add.outer(x, TWO_PI * k)
    if sigma == 0:
        f = _wrapped_cauchy(x, gamma)
        if grad:
            raise ParameterError("gradient requires sigma > 0")
        return f
    if gamma == 0:
        v = np.exp(-0.5 * (xs / sigma) ** 2) / (sigma * SQRT2PI)
        f = v.sum(axis=-1)
        if not grad:
            return f
        d_mu = (v * xs).sum(axis=-1) / sigma**2
        d_sigma = (v * (xs * xs / sigma**3 - 1.0 / sigma)).sum(axis=-1)
        # d/dgamma at gamma=0 from the Faddeeva derivative
        z = xs / (sigma * SQRT2)
        w = wofz(z)
        wp = -2.0 * z * w + 2j / SQRTPI
        d_gamma = (-wp.imag / (2.0 * SQRTPI * sigma * sigma)).sum(axis=-1)
        return f, d_mu, d_sigma, d_gamma
    z = (xs + 1j * gamma) / (sigma * SQRT2)
    w = wofz(z)
    norm = 1.0 / (sigma * SQRT2PI)
    v = w.real * norm
    if not grad:
        return v.sum(axis=-1) + _cauchy_remainder(x, xs, gamma, k_max)
    tail, t_mu, t_gamma = _cauchy_remainder(x, xs, gamma, k_max, grad=True)
    f = v.sum(axis=-1) + tail
    wp = -2.0 * z * w + 2j / SQRTPI
    # the remainder's weak sigma dependence (curvature of the far tails) is
    # not modelled, so d/dsigma covers the image sum only
    d_mu = -(wp.real * norm / (sigma * SQRT2)).sum(axis=-1) + t_mu
    d_gamma = (-wp.imag / (2.0 * SQRTPI * sigma * sigma)).sum(axis=-1) + t_gamma
    d_sigma = (-v / sigma + (wp * (-z / sigma)).real * norm).sum(axis=-1)
    return f, d_mu, d_sigma, d_gamma


def wrapped_voigt_density(phi, mu_v, sigma, gamma, k_max=DEFAULT_K_MAX, method="auto"):
    """Wrapped Voigt density on the circle.

    ``method`` is ``"auto"``, ``"fourier"`` or ``"images"``.  Forcing
    ``"images"`` on a very wide profile loses the Gaussian mass beyond
    ``k_max`` periods.
    """
    sigma = float(sigma)
    gamma = float(gamma)
    _check_widths(sigma, gamma)
    x = np.asarray(phi, dtype=float) - mu_v
    if method == "auto":
        n_terms = _fourier_terms(sigma, gamma)
        if n_terms is None:
            return _wrapped_images(x, sigma, gamma, int(k_max))
        f = _wrapped_fourier(x, sigma, gamma, n_terms)
        deep = f < _FOURIER_FLOOR
        if np.any(deep):
            f = np.where(deep, _wrapped_images(x, sigma, gamma, int(k_max)), f)
        return f
    if method == "fourier":
        n_terms = _fourier_terms(sigma, gamma) or 4 * _FOURIER_MAX_TERMS
        return _wrapped_fourier(x, sigma, gamma, n_terms)
    if method == "images":
        return _wrapped_images(x, sigma, gamma, int(k_max))
    raise ParameterError(f"unknown method {method!r}")


def _wrapped_with_grad(x, sigma, gamma, k_max):
    n_terms = _fourier_terms(sigma, gamma)
    if n_terms is None:
        return _wrapped_images(x, sigma, gamma, k_max, grad=True)
    out = _wrapped_fourier(x, sigma, gamma, n_terms, grad=True)
    deep = out[0] < _FOURIER_FLOOR
    if np.any(deep):
        alt = _wrapped_images(x[deep], sigma, gamma, k_max, grad=True)
        out = tuple(np.where(deep, 0.0, o) for o in out)
        for o, a in zip(out, alt):
            o[deep] = a
    return out


@dataclass(frozen=True)
class WrappedVoigtParams:
    mu_v: float
    sigma: float
    gamma: float = 0.0
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.k_max < 0:
            raise ParameterError("k_max must be >= 0")
        object.__setattr__(self, "mu_v", float(wrap_phase(float(self.mu_v))))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "gamma", float(self.gamma))

    def pdf(self, phi):
        return wrapped_voigt_pdf(phi, self)

    def to_dict(self):
        return {"mu_v": self.mu_v, "sigma": self.sigma, "gamma": self.gamma, "k_max": self.k_max}


def wrapped_voigt_pdf(phi, params):
    return wrapped_voigt_density(phi, params.mu_v, params.sigma, params.gamma, params.k_max)


@dataclass(frozen=True)
class PhaseHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or counts.shape != (edges.size - 1,):
            raise ParameterError("need B+1 edges for B counts")
        if np.any(np.diff(edges) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
        if np.any(counts < 0):
            raise ParameterError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @classmethod
    def from_phases(cls, phases, bins=DEFAULT_BINS):
        phases = np.asarray(phases, dtype=float)
        phases = wrap_phase(phases[np.isfinite(phases)])
        edges = np.linspace(-np.pi, np.pi, bins + 1)
        idx = np.floor((phases + np.pi) * (bins / TWO_PI)).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        return cls(edges, np.bincount(idx, minlength=bins))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self):
        return np.diff(self.bin_edges)

    def to_dict(self):
        return {"bin_edges": self.bin_edges.tolist(), "counts": self.counts.tolist()}


def expected_counts(params, hist):
    """Model curve in count units: N * bin width * density at bin centres."""
    return hist.total * hist.widths * wrapped_voigt_pdf(hist.centers, params)


def residual_sum(params, hist):
    """Sum of squared residuals between model counts and histogram counts."""
    r = expected_counts(params, hist) - hist.counts
    return float(r @ r)


@dataclass
class FitResult:
    params: WrappedVoigtParams
    s_squared: float
    converged: bool
    n_iterations: int
    covariance: np.ndarray
    objective: float = 0.0
    grad_norm: float = 0.0
    objective_trace: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "s_squared": self.s_squared,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "covariance": np.asarray(self.covariance).tolist(),
            "grad_norm": self.grad_norm,
        }


def initial_guess(hist, k_max=DEFAULT_K_MAX):
    """Location from the circular mean, width from the circular std, gamma = sigma/4."""
    c = hist.counts.astype(float)
    m1 = (c * np.exp(1j * hist.centers)).sum() / max(c.sum(), 1.0)
    r = abs(m1)
    sigma = np.sqrt(-2.0 * np.log(r)) if r > 0 else 3.0
    sigma = float(np.clip(sigma, 0.05, 3.0))
    return WrappedVoigtParams(float(np.angle(m1)), sigma, sigma / 4.0, k_max)


def _clamp(p):
    return np.array([
        p[0],
        np.clip(p[1], *_LOG_SIGMA_BOUNDS),
        np.clip(p[2], *_LOG_GAMMA_BOUNDS),
    ])


class _Problem:
    def __init__(self, hist, weighted, k_max):
        self.centers = hist.centers
        self.scale = hist.total * hist.widths
        self.counts = hist.counts.astype(float)
        self.k_max = k_max
        if weighted:
            self.w = 1.0 / np.sqrt(np.maximum(self.counts, 1.0))
        else:
            self.w = np.ones_like(self.counts)

    def evaluate(self, p):
        sigma, gamma = np.exp(p[1]), np.exp(p[2])
        f, d_mu, d_sigma, d_gamma = _wrapped_with_grad(
            self.centers - p[0], sigma, gamma, self.k_max)
        model = self.scale * f
        r = self.w * (model - self.counts)
        ws = self.w * self.scale
        jac = np.column_stack([ws * d_mu, ws * d_sigma * sigma, ws * d_gamma * gamma])
        return r, jac, model


def _levenberg_marquardt(problem, p0, max_iter):
    p = _clamp(np.asarray(p0, dtype=float))
    r, jac, model = problem.evaluate(p)
    obj = float(r @ r)
    trace = [obj]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        while True:
            a = jtj + lam * np.diag(np.diag(jtj) + 1e-12)
            try:
                step = -np.linalg.solve(a, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = _clamp(p + step)
            r_new, jac_new, model_new = problem.evaluate(p_new)
            obj_new = float(r_new @ r_new)
            if obj_new < obj:
                break
            lam *= 10.0
            if lam > 1e20:
                # no descent direction left: stationary point
                return p, r, jac, model, obj, it, True, trace
        dp = float(np.max(np.abs(p_new - p)))
        rel = (obj - obj_new) / max(obj, 1e-300)
        p, r, jac, model, obj = p_new, r_new, jac_new, model_new, obj_new
        trace.append(obj)
        lam = max(lam / 10.0, 1e-12)
        if dp < _STEP_TOL or rel < _REL_OBJ_TOL or obj < 1e-24:
            return p, r, jac, model, obj, it, True, trace
    return p, r, jac, model, obj, max_iter, False, trace


def _make_result(problem, hist, p, r, jac, model, obj, n_iter, converged, trace, k_max):
    sigma, gamma = float(np.exp(p[1])), float(np.exp(p[2]))
    params = WrappedVoigtParams(float(wrap_phase(p[0])), sigma, gamma, k_max)
    resid = model - problem.counts
    s2 = float(resid @ resid)
    dof = max(hist.counts.size - 3, 1)
    # invert in the log parameters, where the problem is well scaled, then
    # map to (mu, sigma, gamma) by the delta method
    scale = np.array([1.0, sigma, gamma])
    _, sv, vt = np.linalg.svd(jac, full_matrices=False)
    # pseudo-inverse of J^T J; directions the data do not constrain get zero
    keep = sv > max(sv[0] * 1e-10, 1e-150)
    inv_sq = np.where(keep, 1.0 / np.where(keep, sv, 1.0) ** 2, 0.0)
    cov = (vt.T * inv_sq) @ vt * (obj / dof) * np.outer(scale, scale)
    return FitResult(params, s2, converged, n_iter, cov, obj,
                     float(np.linalg.norm(jac.T @ r)), trace)


def fit_wrapped_voigt(hist, init=None, *, weighted=False, n_starts=4,
                      max_iter=_MAX_ITER, k_max=DEFAULT_K_MAX):
    """Least-squares fit of the wrapped Voigt model to a phase histogram.

    The model ``N * bin_width * f_w(bin centre)`` is fitted to the raw
    counts (Poisson weights ``1/max(c, 1)`` when ``weighted``) with a
    Levenberg-Marquardt loop.  ``n_starts`` initial locations rotated by
    ``2*pi/n_starts`` guard against wrap-around local minima; the start
    with the lowest objective wins.
    """
    if hist.total < MIN_FIT_SAMPLES:
        raise FitError(f"refusing to fit {hist.total} samples (< {MIN_FIT_SAMPLES})")
    if np.count_nonzero(hist.counts) < 2:
        raise FitError("degenerate histogram: all samples fall in one bin")
    if init is None:
        init = initial_guess(hist, k_max)
    problem = _Problem(hist, weighted, k_max)
    best = None
    best_failed = None
    for j in range(max(1, n_starts)):
        mu0 = init.mu_v + j * TWO_PI / max(1, n_starts)
        p0 = [mu0, np.log(init.sigma), np.log(max(init.gamma, 1e-9))]
        out = _levenberg_marquardt(problem, p0, max_iter)
        res = _make_result(problem, hist, *out, k_max)
        if res.converged:
            if best is None or res.objective < best.objective:
                best = res
        elif best_failed is None or res.objective < best_failed.objective:
            best_failed = res
    if best is None:
        raise NonConvergenceError(
            f"wrapped Voigt fit did not converge in {max_iter} iterations", best=best_failed)
    return best
