from math import factorial

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import poisson

from injlock.circfit import WrappedVoigtParams, wrapped_voigt_pdf
from injlock.errors import ParameterError
from injlock.fockdiag import DensityMatrix, circular_moments, density_matrix, offdiag_norm
from injlock.synth import PhaseDistribution


def coherent_projector(alpha, n_max):
    """|alpha><alpha| from the textbook Fock expansion."""
    c = np.array([np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(factorial(n))
                  for n in range(n_max + 1)])
    return np.outer(c, np.conj(c))


def test_uniform_is_diagonal_poisson():
    rho = density_matrix(0.5, PhaseDistribution.uniform(), 20)
    off = rho.entries - np.diag(np.diag(rho.entries))
    assert np.abs(off).max() < 1e-10
    assert np.max(np.abs(np.diag(rho.entries).real - poisson.pmf(np.arange(21), 0.5))) < 1e-12
    assert offdiag_norm(rho) < 1e-10


def test_vacuum():
    for pdf in (PhaseDistribution.uniform(), PhaseDistribution.wrapped_gaussian(0.3, 0.4)):
        rho = density_matrix(0.0, pdf, 6)
        expect = np.zeros((7, 7))
        expect[0, 0] = 1.0
        assert np.allclose(rho.entries, expect, atol=1e-15)


def test_delta_is_coherent_state():
    rho = density_matrix(1.0, PhaseDistribution.delta(0.0), 10)
    assert rho.entries[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-15)
    n = np.arange(11)
    fact = np.array([factorial(int(k)) for k in n], dtype=float)
    assert np.allclose(rho.entries, np.exp(-1.0) / np.sqrt(np.outer(fact, fact)), atol=1e-15)


def test_delta_offdiag_norm_matches_direct_oracle():
    rho = density_matrix(1.0, PhaseDistribution.delta(0.0), 10)
    direct = coherent_projector(1.0, 10)
    assert abs(offdiag_norm(rho) - offdiag_norm(direct)) < 1e-12


def test_delta_cross_checked_by_quadrature():
    # a very narrow wrapped Gaussian goes through the quadrature path
    narrow = density_matrix(1.0, PhaseDistribution.wrapped_gaussian(0.7, 1e-4), 6)
    exact = coherent_projector(np.exp(0.7j), 6)
    assert np.max(np.abs(narrow.entries - exact)) < 1e-7


def _random_case(rng):
    mu = rng.uniform(0, 2)
    kind = rng.integers(4)
    if kind == 0:
        pdf = PhaseDistribution.wrapped_gaussian(rng.uniform(-3, 3), rng.uniform(0.05, 2))
    elif kind == 1:
        pdf = PhaseDistribution.wrapped_cauchy(rng.uniform(-3, 3), rng.uniform(0.05, 1))
    elif kind == 2:
        pdf = PhaseDistribution.wrapped_voigt(rng.uniform(-3, 3), rng.uniform(0.05, 1),
                                              rng.uniform(0.01, 0.5))
    else:
        pdf = WrappedVoigtParams(rng.uniform(-3, 3), rng.uniform(0.05, 1), rng.uniform(0, 0.5))
    return mu, pdf


def test_randomised_identities():
    rng = np.random.default_rng(12)
    for _ in range(20):
        mu, pdf = _random_case(rng)
        n_max = int(rng.integers(3, 16))
        rho = density_matrix(mu, pdf, n_max)
        m = rho.entries
        assert np.max(np.abs(m - m.conj().T)) < 1e-12
        assert np.linalg.eigvalsh(m).min() >= -1e-10
        assert abs(np.trace(m).real - poisson.cdf(n_max, mu)) < 1e-9
        assert abs(rho.trace_deficit - poisson.sf(n_max, mu)) < 1e-15


def test_bands_follow_circular_moments():
    pdf = WrappedVoigtParams(0.8, 0.5, 0.1)
    rho = density_matrix(1.3, pdf, 8)
    amp = np.sqrt(poisson.pmf(np.arange(9), 1.3))
    for k in range(9):
        re = integrate.quad(lambda t: float(wrapped_voigt_pdf(t, pdf)) * np.cos(k * t),
                            -np.pi, np.pi, limit=400, epsabs=1e-13)[0]
        im = integrate.quad(lambda t: float(wrapped_voigt_pdf(t, pdf)) * np.sin(k * t),
                            -np.pi, np.pi, limit=400, epsabs=1e-13)[0]
        for n in range(k, 9):
            assert abs(rho.entries[n, n - k] - amp[n] * amp[n - k] * complex(re, im)) < 1e-9
    moments = circular_moments(pdf, 8)
    assert abs(moments[0] - 1) < 1e-10


@pytest.mark.parametrize("d", [
    PhaseDistribution.wrapped_voigt(0.4, 0.6, 0.2),
    PhaseDistribution.wrapped_gaussian(0.7, 1e-4),
    PhaseDistribution.wrapped_gaussian(-3.0, 1e-2),
    PhaseDistribution.wrapped_cauchy(2.0, 1e-3),
    PhaseDistribution.wrapped_gaussian(1.0, 5.0),
])
def test_moments_against_closed_form(d):
    got = circular_moments(d, 6)
    assert np.max(np.abs(got - np.array([d.moment(k) for k in range(7)]))) < 1e-9


def test_sigma_ladder_strictly_decreasing():
    norms = [offdiag_norm(density_matrix(0.8, WrappedVoigtParams(0.0, s, 0.05), 12))
             for s in (0.2, 0.5, 0.8, 1.2, 1.8)]
    assert np.all(np.diff(norms) < 0)


def test_invalid_arguments():
    with pytest.raises(ParameterError):
        density_matrix(0.5, PhaseDistribution.uniform(), -1)
    with pytest.raises(ParameterError):
        density_matrix(-0.1, PhaseDistribution.uniform(), 3)
    with pytest.raises(ParameterError):
        density_matrix(0.5, "uniform", 3)


def test_rows_export():
    rho = density_matrix(0.5, PhaseDistribution.delta(0.3), 2)
    rows = list(rho.to_rows())
    assert len(rows) == 9 and isinstance(rho, DensityMatrix) and rho.dim == 3
    r = rows[1]
    assert (r["n"], r["m"]) == (0, 1)
    assert complex(r["re"], r["im"]) == rho.entries[0, 1]
