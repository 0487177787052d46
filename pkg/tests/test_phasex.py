import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from injlock.circstats import angular_difference, circular_variance
from injlock.errors import (
    EmptyInputError,
    ParameterError,
    UndefinedPhaseError,
    WindowSelectionError,
)
from injlock.phasex import (
    Segments,
    WindowSpec,
    extract_phase,
    extract_phases,
    find_trigger_offset,
    integrate_pulse,
    phase_matrix,
    segment_pulses,
    select_window,
)
from injlock.synth import (
    LoModel,
    PhaseDistribution,
    SimConfig,
    WaveformPair,
    envelope_shape,
    generate_pulse_train,
    ground_truth_phase,
    simulate,
    synthesize_heterodyne,
)


def _sim(**kw):
    kw.setdefault("n_pulses", 60)
    kw.setdefault("sample_rate", 5e9)
    cfg = SimConfig(**kw)
    return (cfg, *simulate(cfg, PhaseDistribution.uniform()))


def test_default_acquisition_segments():
    cfg = SimConfig()
    _, _, wf = simulate(cfg, PhaseDistribution.delta(0.2))
    seg = segment_pulses(wf, cfg.rep_rate)
    assert (seg.n_pulses, seg.n_samples) == (8000, 1250)


def test_single_period():
    wf = WaveformPair(np.ones(1250), np.zeros(1250), 1 / 50e9)
    assert segment_pulses(wf, 40e6).n_pulses == 1


def test_partial_tail_dropped():
    wf = WaveformPair(np.ones(1250 * 3 + 100), np.zeros(1250 * 3 + 100), 1 / 50e9)
    seg = segment_pulses(wf, 40e6)
    assert seg.n_pulses == 3
    # content preserving
    assert np.array_equal(seg.i0.ravel(), wf.i0[:3750])


def test_segment_errors():
    wf = WaveformPair(np.ones(100), np.zeros(100), 1 / 50e9)
    with pytest.raises(ParameterError):
        segment_pulses(wf, 0.0)
    with pytest.raises(EmptyInputError):
        segment_pulses(wf, 40e6)


def test_half_period_trigger_shift():
    cfg, train, lo, wf = _sim(sample_rate=50e9, n_pulses=12)
    a = segment_pulses(wf, cfg.rep_rate)
    b = segment_pulses(wf, cfg.rep_rate, trigger_offset=cfg.period / 2)
    assert b.starts[0] - a.starts[0] == 625
    assert b.n_pulses == a.n_pulses - 1
    truth = ground_truth_phase(train, lo, cfg)
    # first half of a shifted segment is the second half of pulse n (dark),
    # second half is the lit start of pulse n + 1
    seg_truth = truth[b.starts[:, None] + np.arange(b.n_samples)]
    lit = np.hypot(b.i0, b.i90) > 0.1
    got = extract_phases(b.i0, b.i90)
    assert lit[:, 700:].any()
    assert np.max(np.abs(angular_difference(got[lit], seg_truth[lit]))) < 1e-9


def test_threshold_window_covers_flat_top():
    cfg, train, lo, wf = _sim(sample_rate=50e9, n_pulses=20)
    seg = segment_pulses(wf, cfg.rep_rate)
    w = select_window(seg, WindowSpec())
    # analytic half-amplitude crossings of the raised-cosine edges
    t_half = cfg.rise_time / 2
    step = seg.sample_period * (1 + 1e-9)
    assert abs(w.w_lo * seg.sample_period - t_half) <= step
    assert abs(w.w_hi * seg.sample_period - (cfg.on_time - t_half)) <= step


def test_near_unity_threshold_is_near_peak():
    cfg, train, lo, wf = _sim()
    seg = segment_pulses(wf, cfg.rep_rate)
    w = select_window(seg, WindowSpec(threshold_frac=0.999))
    assert w.size >= 1
    env = envelope_shape(w.tau, cfg)
    assert np.all(env > 0.99)


def test_explicit_window_verbatim():
    cfg, train, lo, wf = _sim(sample_rate=50e9, n_pulses=4)
    seg = segment_pulses(wf, cfg.rep_rate)
    w = select_window(seg, WindowSpec.explicit(6.0e-9, 7.0e-9))
    assert np.isclose(w.tau[0], 6.0e-9) and np.isclose(w.tau[-1], 7.0e-9)
    assert w.tau[0] <= 6.56e-9 <= w.tau[-1]


def test_empty_explicit_window():
    cfg, train, lo, wf = _sim(n_pulses=4)
    seg = segment_pulses(wf, cfg.rep_rate)
    with pytest.raises(WindowSelectionError):
        select_window(seg, WindowSpec.explicit(1e-6, 2e-6))


def test_zero_envelope_has_no_window():
    seg = Segments(np.zeros((3, 20)), np.zeros((3, 20)), 1e-9, np.arange(3) * 20)
    with pytest.raises(WindowSelectionError):
        select_window(seg, WindowSpec())


def test_window_independent_of_pulse_order():
    cfg, train, lo, wf = _sim(noise_rms=0.05)
    seg = segment_pulses(wf, cfg.rep_rate)
    perm = np.random.default_rng(0).permutation(seg.n_pulses)
    shuffled = Segments(seg.i0[perm], seg.i90[perm], seg.sample_period, seg.starts[perm])
    assert select_window(seg, WindowSpec()) == select_window(shuffled, WindowSpec())


def test_extract_phase_axes():
    assert extract_phase(2.0, 0.0) == 0.0
    assert extract_phase(0.0, 3.0) == np.pi / 2
    assert extract_phase(-1.0, 0.0) == -np.pi
    with pytest.raises(UndefinedPhaseError):
        extract_phase(0.0, 0.0)


def test_vectorised_marks_origin_nan():
    out = extract_phases(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert np.isclose(out[0], np.pi / 4) and np.isnan(out[1])


@given(st.floats(-100, 100).filter(lambda v: abs(v) > 1e-6),
       st.floats(-100, 100).filter(lambda v: abs(v) > 1e-6),
       st.floats(1e-3, 1e3))
def test_amplitude_invariance(x, y, c):
    assert extract_phase(c * x, c * y) == pytest.approx(extract_phase(x, y), abs=1e-12)


def test_unit_circle_grid():
    phi = -np.pi + 2 * np.pi * np.arange(10**4) / 10**4
    got = extract_phases(np.cos(phi), np.sin(phi))
    assert np.max(np.abs(got - phi)) < 1e-12


def test_known_phase_recovered_everywhere():
    cfg = SimConfig(n_pulses=30, sample_rate=50e9, seed=3)
    train = generate_pulse_train(cfg, PhaseDistribution.delta(1.234))
    lo = LoModel.fixed(cfg.lo_amplitude, 0.0, cfg.n_pulses)
    wf = synthesize_heterodyne(train, lo, cfg)
    seg = segment_pulses(wf, cfg.rep_rate)
    m = phase_matrix(seg, select_window(seg, WindowSpec()))
    assert m.valid.all()
    assert np.max(np.abs(m.phases - 1.234)) < 1e-9


def test_matrix_shapes_and_single_column():
    cfg, train, lo, wf = _sim()
    seg = segment_pulses(wf, cfg.rep_rate)
    m = phase_matrix(seg, select_window(seg, WindowSpec()))
    assert m.n_pulses == cfg.n_pulses and m.phases.shape[1] == m.window.size
    one = phase_matrix(seg, select_window(seg, WindowSpec.explicit(6e-9, 6e-9)))
    assert one.phases.shape == (cfg.n_pulses, 1)
    assert one.column(0).shape == (cfg.n_pulses,)


def test_matrix_matches_ground_truth_with_noise():
    cfg, train, lo, wf = _sim(noise_rms=1e-3, chirp_rate=1e8)
    seg = segment_pulses(wf, cfg.rep_rate)
    m = phase_matrix(seg, select_window(seg, WindowSpec()))
    truth = ground_truth_phase(train, lo, cfg)[seg.starts[:, None] + m.window.indices]
    # amplitude ~ 2*A_S*A_LO/2 at threshold, so noise/amplitude <~ 2e-3
    assert np.max(np.abs(angular_difference(m.phases, truth))) < 0.02


def test_low_amplitude_samples_masked():
    cfg, train, lo, wf = _sim()
    seg = segment_pulses(wf, cfg.rep_rate)
    m = phase_matrix(seg, select_window(seg, WindowSpec.explicit(0, 20e-9)))
    dark = envelope_shape(m.tau, cfg) < 0.04
    assert dark.any()
    assert not m.valid[:, dark].any()
    assert np.isnan(m.phases[:, dark]).all()


def test_trigger_offset_found():
    cfg = SimConfig(n_pulses=20, sample_rate=5e9)
    _, _, wf = simulate(cfg, PhaseDistribution.uniform())
    shifted = WaveformPair(wf.i0[7:], wf.i90[7:], wf.sample_period)
    off = find_trigger_offset(shifted, cfg.rep_rate)
    seg = segment_pulses(shifted, cfg.rep_rate, off)
    w = select_window(seg, WindowSpec())
    assert 0 <= w.w_lo <= 4


def test_integrated_equals_per_sample_without_chirp():
    cfg, train, lo, wf = _sim(sample_rate=20e9)
    seg = segment_pulses(wf, cfg.rep_rate)
    w = select_window(seg, WindowSpec())
    ip = integrate_pulse(seg, w)
    m = phase_matrix(seg, w)
    assert np.max(np.abs(angular_difference(ip.phases, m.phases[:, 0]))) < 1e-9


def test_integrated_pure_noise_is_uniform():
    cfg = SimConfig(n_pulses=4000, sample_rate=1e9, noise_rms=0.1, signal_amplitude=0.0, seed=8)
    _, _, wf = simulate(cfg, PhaseDistribution.uniform())
    seg = segment_pulses(wf, cfg.rep_rate)
    ip = integrate_pulse(seg, select_window(seg, WindowSpec.explicit(2e-9, 10e-9)))
    assert abs(circular_variance(ip.phases) - 1.0) < 3 / np.sqrt(cfg.n_pulses)


def test_integrated_chirp_matches_quadrature():
    cfg = SimConfig(n_pulses=5, sample_rate=50e9, chirp_rate=2e8, seed=1)
    train = generate_pulse_train(cfg, PhaseDistribution.wrapped_gaussian(0.0, 1.0))
    lo = LoModel.fixed(cfg.lo_amplitude, 0.3, cfg.n_pulses)
    wf = synthesize_heterodyne(train, lo, cfg)
    seg = segment_pulses(wf, cfg.rep_rate)
    w = select_window(seg, WindowSpec.explicit(2e-9, 10e-9))
    ip = integrate_pulse(seg, w)
    dt = seg.sample_period
    a, b = w.tau[0] - dt / 2, w.tau[-1] + dt / 2
    for n in range(cfg.n_pulses):
        def field(t, part):
            z = envelope_shape(t, cfg) * np.exp(1j * (train.phase(n, t) - 0.3))
            return z.real if part == 0 else z.imag
        re = integrate.quad(field, a, b, args=(0,), epsabs=0, epsrel=1e-12)[0]
        im = integrate.quad(field, a, b, args=(1,), epsabs=0, epsrel=1e-12)[0]
        assert abs(angular_difference(ip.phases[n], np.angle(complex(re, im)))) < 1e-6


def test_integrated_zero_signal_undefined():
    seg = Segments(np.zeros((2, 10)), np.zeros((2, 10)), 1e-9, np.array([0, 10]))
    w = select_window(seg, WindowSpec.explicit(0, 5e-9))
    with pytest.raises(UndefinedPhaseError):
        integrate_pulse(seg, w)
