import numpy as np
import pytest
from scipy import integrate, special, stats

from injlock import _rng
from injlock.circstats import circular_variance, resultant_length
from injlock.errors import EmptyInputError, ParameterError
from injlock.synth import (
    LockingCalibration,
    LoModel,
    PhaseDistribution,
    PhaseKind,
    SimConfig,
    balanced_outputs,
    envelope_shape,
    generate_pulse_train,
    ground_truth_phase,
    locking_distribution,
    optical_fields,
    sample_phase,
    simulate,
    synthesize_heterodyne,
)

SMALL = SimConfig(n_pulses=50, sample_rate=5e9)


def _wrapped_voigt_by_images(x, center, sigma, gamma, k=60):
    """Independent density: scipy's Voigt profile summed over 2*pi images."""
    shifts = 2 * np.pi * np.arange(-k, k + 1)
    return sum(special.voigt_profile(x - center + s, sigma, gamma) for s in shifts)


def test_uniform_draws_pass_ks():
    rng = np.random.default_rng(1)
    x = sample_phase(PhaseDistribution.uniform(), rng, 10**6)
    ks = stats.kstest(x, stats.uniform(loc=-np.pi, scale=2 * np.pi).cdf).statistic
    assert ks < 0.002


def test_delta_draws_are_exact():
    rng = np.random.default_rng(2)
    d = PhaseDistribution.delta(0.7)
    assert sample_phase(d, rng) == 0.7
    assert np.all(sample_phase(d, rng, 1000) == 0.7)


def test_wrapped_voigt_resultant_matches_quadrature():
    d = PhaseDistribution.wrapped_voigt(0.0, 0.3, 0.1)
    x = sample_phase(d, np.random.default_rng(3), 10**6)
    re = integrate.quad(lambda t: _wrapped_voigt_by_images(t, 0, 0.3, 0.1) * np.cos(t),
                        -np.pi, np.pi, limit=200)[0]
    im = integrate.quad(lambda t: _wrapped_voigt_by_images(t, 0, 0.3, 0.1) * np.sin(t),
                        -np.pi, np.pi, limit=200)[0]
    assert abs(resultant_length(x) - abs(complex(re, im))) < 0.01


def test_draws_lie_in_range():
    d = PhaseDistribution.wrapped_cauchy(3.0, 2.0)
    x = sample_phase(d, np.random.default_rng(4), 10**5)
    assert x.min() >= -np.pi and x.max() < np.pi


@pytest.mark.parametrize("kw", [{"sigma": -0.1}, {"gamma": -1.0}])
def test_negative_widths_rejected(kw):
    with pytest.raises(ParameterError):
        PhaseDistribution(PhaseKind.WRAPPED_VOIGT, 0.0, kw.get("sigma", 0.3), kw.get("gamma", 0.1))


def test_delta_must_have_zero_widths():
    with pytest.raises(ParameterError):
        PhaseDistribution(PhaseKind.DELTA, 0.0, 0.1, 0.0)


@pytest.mark.parametrize("dist", [
    PhaseDistribution.uniform(),
    PhaseDistribution.wrapped_gaussian(1.0, 0.7),
    PhaseDistribution.wrapped_cauchy(-2.0, 0.4),
    PhaseDistribution.wrapped_voigt(0.3, 0.4, 0.2),
])
def test_density_normalised(dist):
    total = integrate.quad(lambda t: float(dist.pdf(t)), -np.pi, np.pi, limit=200,
                           points=[dist.center])[0]
    assert abs(total - 1.0) < 1e-6


def test_uniform_ignores_parameters():
    a = PhaseDistribution(PhaseKind.UNIFORM, 1.0, 2.0, 3.0)
    assert np.allclose(a.pdf(np.linspace(-3, 3, 7)), 1 / (2 * np.pi))
    assert a.q_rel() == 1.0


def test_analytic_moment_matches_samples():
    d = PhaseDistribution.wrapped_voigt(0.5, 0.6, 0.3)
    x = sample_phase(d, np.random.default_rng(5), 4 * 10**5)
    for n in (1, 2, 3):
        assert abs(np.mean(np.exp(1j * n * x)) - d.moment(n)) < 5 / np.sqrt(x.size)


def test_locking_no_injection_is_uniform():
    calib = LockingCalibration()
    assert locking_distribution(-np.inf, 1.0, calib).kind is PhaseKind.UNIFORM
    assert locking_distribution(-50, 0.0, calib).kind is PhaseKind.UNIFORM


def test_locking_at_reference_power():
    calib = LockingCalibration(kappa_ref=25.0, p_ref_dbm=-42.3)
    d = locking_distribution(-42.3, 1.0, calib)
    assert d.kind is PhaseKind.WRAPPED_GAUSSIAN
    assert np.isclose(1 / d.sigma**2, 25.0, rtol=1e-12)


def test_concentration_increasing_in_power():
    calib = LockingCalibration()
    k = [calib.concentration(p, 0.6) for p in np.linspace(-130, -20, 50)]
    assert np.all(np.diff(k) > 0)
    assert calib.concentration(-400) < 1e-15


def test_locking_rejects_bad_eta():
    with pytest.raises(ParameterError):
        locking_distribution(-50, 1.5, LockingCalibration())


def test_default_train_spans_200us():
    cfg = SimConfig()
    train = generate_pulse_train(cfg, PhaseDistribution.uniform())
    assert train.n_pulses == 8000
    assert np.isclose(cfg.acquisition_time, 200e-6)
    assert cfg.n_samples == 8000 * 1250


def test_empty_train_rejected():
    with pytest.raises(EmptyInputError):
        generate_pulse_train(SimConfig(n_pulses=0), PhaseDistribution.uniform())


def test_uniform_train_circular_variance():
    cfg = SimConfig(seed=9)
    train = generate_pulse_train(cfg, PhaseDistribution.uniform())
    assert abs(circular_variance(train.true_phases) - 1.0) < 3 / np.sqrt(cfg.n_pulses)


def test_chirp_free_phase_constant_in_pulse():
    train = generate_pulse_train(SMALL, PhaseDistribution.uniform())
    tau = np.linspace(0, SMALL.on_time, 20)
    assert np.all(train.phase(3, tau) == train.true_phases[3])


def test_config_validation():
    with pytest.raises(ParameterError):
        SimConfig(sample_rate=1e8)
    with pytest.raises(ParameterError):
        SimConfig(duty_cycle=0)
    with pytest.raises(ParameterError):
        SimConfig(rise_time=7e-9)


def _noiseless(phase, n=20, **kw):
    cfg = SimConfig(n_pulses=n, sample_rate=5e9, **kw)
    train = generate_pulse_train(cfg, PhaseDistribution.delta(phase))
    lo = LoModel.fixed(cfg.lo_amplitude, 0.0, n)
    return cfg, train, lo, synthesize_heterodyne(train, lo, cfg)


def test_zero_relative_phase_gives_pure_in_phase():
    cfg, train, lo, wf = _noiseless(0.0)
    _, _, _, tau = optical_fields(train, lo, cfg)
    amp = 2 * train.envelope(tau) * lo.amplitude
    assert np.all(wf.i90 == 0.0)
    assert np.allclose(wf.i0, amp, atol=1e-15)


def test_quarter_wave_gives_pure_quadrature():
    cfg, train, lo, wf = _noiseless(np.pi / 2)
    assert np.max(np.abs(wf.i0)) < 1e-15
    assert np.max(wf.i90) > 0.9


def test_pythagorean_identity():
    cfg = SimConfig(n_pulses=40, sample_rate=5e9, chirp_rate=3e8, seed=4)
    train, lo, wf = simulate(cfg, PhaseDistribution.uniform())
    _, _, _, tau = optical_fields(train, lo, cfg)
    amp = 2 * train.envelope(tau) * lo.amplitude
    assert np.max(np.abs(wf.i0**2 + wf.i90**2 - amp**2)) < 1e-12


def test_hybrid_construction_matches_closed_form():
    cfg = SimConfig(n_pulses=40, sample_rate=5e9, chirp_rate=-2e8, seed=6)
    train, lo, wf = simulate(cfg, PhaseDistribution.wrapped_gaussian(0.4, 1.0))
    _, _, _, tau = optical_fields(train, lo, cfg)
    amp = 2 * train.envelope(tau) * lo.amplitude
    dtheta = ground_truth_phase(train, lo, cfg)
    assert np.max(np.abs(wf.i0 - amp * np.cos(dtheta))) < 1e-12
    assert np.max(np.abs(wf.i90 - amp * np.sin(dtheta))) < 1e-12


def test_imbalance_adds_common_mode_term():
    e_s = np.array([0.3 + 0.1j])
    e_lo = np.array([1.0 + 0j])
    b0, b90 = balanced_outputs(e_s, e_lo, 0.0)
    i0, i90 = balanced_outputs(e_s, e_lo, 0.1)
    common = 0.05 * (abs(e_s) ** 2 + abs(e_lo) ** 2)
    assert np.allclose(i0 - b0, common)
    assert np.allclose(i90 - b90, common)


def test_same_seed_bit_identical():
    cfg = SimConfig(n_pulses=30, sample_rate=5e9, noise_rms=0.01, seed=11)
    _, _, a = simulate(cfg, PhaseDistribution.uniform())
    _, _, b = simulate(cfg, PhaseDistribution.uniform())
    assert a.i0.tobytes() == b.i0.tobytes() and a.i90.tobytes() == b.i90.tobytes()


def test_noise_rms_matches_config():
    cfg = SimConfig(n_pulses=200, sample_rate=5e9, noise_rms=0.02, signal_amplitude=0.0, seed=2)
    _, _, wf = simulate(cfg, PhaseDistribution.uniform())
    assert abs(np.std(wf.i0) / 0.02 - 1) < 0.02


def test_envelope_vanishes_outside_on_time():
    cfg = SimConfig()
    tau = np.linspace(cfg.on_time, cfg.period, 2000, endpoint=False)[1:]
    assert np.max(envelope_shape(tau, cfg)) < 0.01


def test_envelope_flat_top():
    cfg = SimConfig()
    tau = np.linspace(cfg.rise_time, cfg.on_time - cfg.rise_time, 100)
    assert np.all(envelope_shape(tau, cfg) == 1.0)


def test_lo_drift_bounded():
    for seed in range(10):
        cfg = SimConfig(seed=seed)
        assert LoModel.drifting(cfg).max_excursion <= cfg.lo_drift_bound


def test_rng_substreams_independent_of_order():
    a = _rng.substream(5, 1, 2).standard_normal(4)
    _rng.substream(5, 9).standard_normal(100)
    b = _rng.substream(5, 1, 2).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, _rng.substream(5, 2, 1).standard_normal(4))
