"""Photon-number-basis density matrix of a phase-mixed coherent state.

For a coherent state of mean photon number ``mu`` whose phase follows the
density ``f``::

    rho[n, m] = exp(-mu) mu**((n+m)/2) / sqrt(n! m!) * integral f(t) exp(i (n-m) t) dt

so each off-diagonal band ``n - m = k`` is weighted by the k-th circular
moment of ``f``.  A uniform ``f`` kills every band except the diagonal,
leaving a Poisson mixture of Fock states.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln
from scipy.stats import poisson

from .circfit import WrappedVoigtParams, wrapped_voigt_pdf
from .errors import ParameterError
from .synth import PhaseDistribution, PhaseKind

DEFAULT_N_MAX = 20
_QUAD_TOL = 1e-10


@dataclass
class DensityMatrix:
    entries: np.ndarray
    mu_photon: float

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def n_max(self):
        return self.dim - 1

    @property
    def trace_deficit(self):
        """Poisson weight lost above the truncation."""
        return float(poisson.sf(self.n_max, self.mu_photon))

    def to_rows(self):
        for n in range(self.dim):
            for m in range(self.dim):
                z = self.entries[n, m]
                yield {"n": n, "m": m, "re": float(z.real), "im": float(z.imag)}


def _density_callable(pdf):
    """``(f, center, width)`` for the supported phase densities."""
    if isinstance(pdf, WrappedVoigtParams):
        return lambda t: float(wrapped_voigt_pdf(t, pdf)), pdf.mu_v, pdf.sigma + pdf.gamma
    if isinstance(pdf, PhaseDistribution):
        return lambda t: float(pdf.pdf(t)), pdf.center, pdf.sigma + pdf.gamma
    raise ParameterError("pdf must be a PhaseDistribution or WrappedVoigtParams")


def _breakpoints(width):
    """Offsets from the peak at which the integrand changes scale."""
    steps = width * 4.0 ** np.arange(-1, 8)
    steps = steps[steps < np.pi]
    return np.concatenate([-steps[::-1], [0.0], steps])


def circular_moments(pdf, k_max):
    """``E[exp(i k theta)]`` for ``k = 0..k_max`` by adaptive quadrature."""
    if isinstance(pdf, PhaseDistribution) and pdf.kind is PhaseKind.UNIFORM:
        out = np.zeros(k_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    if isinstance(pdf, PhaseDistribution) and pdf.kind is PhaseKind.DELTA:
        return np.exp(1j * np.arange(k_max + 1) * pdf.center)
    f, center, width = _density_callable(pdf)
    # integrate in the offset from the peak, over one period, with breakpoints
    # at geometric multiples of the width so narrow peaks are resolved
    pts = _breakpoints(width)
    out = np.empty(k_max + 1, dtype=complex)
    for k in range(k_max + 1):
        re = quad(lambda u: f(center + u) * np.cos(k * u), -np.pi, np.pi, points=pts,
                  epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=1000)[0]
        im = 0.0
        if k:
            im = quad(lambda u: f(center + u) * np.sin(k * u), -np.pi, np.pi, points=pts,
                      epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=1000)[0]
        out[k] = np.exp(1j * k * center) * complex(re, im)
    return out


def density_matrix(mu_photon, pdf, n_max=DEFAULT_N_MAX):
    if n_max < 0:
        raise ParameterError(f"n_max must be >= 0, got {n_max}")
    if mu_photon < 0:
        raise ParameterError(f"mean photon number must be >= 0, got {mu_photon}")
    n = np.arange(n_max + 1)
    if mu_photon == 0:
        amp = (n == 0).astype(float)
    else:
        # sqrt of Poisson weights via log-factorials
        amp = np.exp(0.5 * (-mu_photon + n * np.log(mu_photon) - gammaln(n + 1)))
    moments = circular_moments(pdf, n_max)
    k = n[:, None] - n[None, :]
    band = np.where(k >= 0, moments[np.abs(k)], np.conj(moments[np.abs(k)]))
    rho = amp[:, None] * amp[None, :] * band
    return DensityMatrix(rho, float(mu_photon))


def offdiag_norm(rho):
    """Frobenius norm of the off-diagonal part."""
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    off = m - np.diag(np.diag(m))
    return float(np.linalg.norm(off))
