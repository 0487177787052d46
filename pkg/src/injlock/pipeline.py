"""Waveform-to-q_rel analysis chain shared by the CLI, sweeps and scans."""

from dataclasses import asdict, dataclass, field

from . import _rng
from .phasex import (
    MASK_FRACTION,
    WindowSpec,
    find_trigger_offset,
    integrate_pulse,
    phase_matrix,
    segment_pulses,
    select_window,
)
from .qrel import (
    DEFAULT_RESAMPLES,
    qrel_bound_curve,
    qrel_integrated,
    qrel_timeseries,
)
from .circfit import DEFAULT_BINS, PhaseHistogram
from .synth import LoModel, generate_pulse_train, synthesize_heterodyne


@dataclass(frozen=True)
class AnalysisConfig:
    rep_rate: float = 40e6
    trigger_offset: float = 0.0
    auto_trigger: bool = False
    window: WindowSpec = field(default_factory=WindowSpec)
    mask_fraction: float = MASK_FRACTION
    bins: int = DEFAULT_BINS
    weighted: bool = False
    n_resamples: int = DEFAULT_RESAMPLES
    bootstrap: str = "argmin"
    integrated: bool = True
    bound_bins: int = 0
    confidence: float = 0.95

    def to_dict(self):
        d = asdict(self)
        d["window"] = self.window.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "window" in d and not isinstance(d["window"], WindowSpec):
            d["window"] = WindowSpec.from_dict(d["window"])
        return cls(**d)


@dataclass
class AnalysisResult:
    trigger_offset: float
    window: object
    matrix: object
    curve: object
    integrated: object = None
    bound: object = None

    def histograms(self, bins):
        return [PhaseHistogram.from_phases(self.matrix.column(w), bins)
                for w in range(self.matrix.phases.shape[1])]


def analyze_waveform(wf, acfg, seed=0, threads=1):
    offset = find_trigger_offset(wf, acfg.rep_rate) if acfg.auto_trigger else acfg.trigger_offset
    seg = segment_pulses(wf, acfg.rep_rate, offset)
    window = select_window(seg, acfg.window)
    matrix = phase_matrix(seg, window, acfg.mask_fraction)
    curve = qrel_timeseries(matrix, bins=acfg.bins, weighted=acfg.weighted,
                            n_resamples=acfg.n_resamples, bootstrap=acfg.bootstrap,
                            seed=seed, threads=threads)
    integrated = None
    if acfg.integrated:
        integrated = qrel_integrated(integrate_pulse(seg, window), bins=acfg.bins,
                                     weighted=acfg.weighted, n_resamples=acfg.n_resamples,
                                     seed=seed)
    bound = None
    if acfg.bound_bins:
        bound = qrel_bound_curve(matrix, bins=acfg.bound_bins, confidence=acfg.confidence)
    return AnalysisResult(offset, window, matrix, curve, integrated, bound)


def simulate_and_analyze(sim_cfg, dist, acfg, seed=None, threads=1):
    """One synthetic acquisition followed by the full analysis.

    ``seed`` (default: the sim config's seed) keys the bootstrap streams.
    """
    train = generate_pulse_train(sim_cfg, dist)
    lo = LoModel.drifting(sim_cfg)
    wf = synthesize_heterodyne(train, lo, sim_cfg)
    seed = sim_cfg.seed if seed is None else seed
    return analyze_waveform(wf, acfg, _rng.child_seed(seed, 0), threads)


def fast_analysis(acfg=None, **overrides):
    """Analysis settings for inner loops of scans: no bootstrap, no extras."""
    base = acfg or AnalysisConfig()
    d = base.to_dict()
    d.update(n_resamples=0, bootstrap="none", integrated=False, bound_bins=0)
    d.update(overrides)
    return AnalysisConfig.from_dict(d)
