"""Command-line front end.

Every subcommand resolves its configuration from three layers (built-in
defaults, an optional ``--config`` JSON file, then explicit flags), writes
the resolved configuration to ``config.json`` in the output directory and
its results to ``results.json``.  Execution-only options (``--out``,
``--threads``) are not part of the configuration, so the same
configuration and seed always give the same bytes.
"""

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, _rng
from .circfit import PhaseHistogram
from .errors import (
    AnalysisError,
    InjlockError,
    ParameterError,
    ThresholdNotFoundError,
    WaveformParseError,
)
from .fockdiag import DEFAULT_N_MAX, density_matrix, offdiag_norm
from .io import (
    FORMAT_SUFFIX,
    config_hash,
    file_sha256,
    make_container,
    read_results,
    read_waveform,
    write_results,
    write_table,
    write_waveform,
)
from .phasex import WindowMode
from .pipeline import AnalysisConfig, analyze_waveform
from .polscan import (
    SpdConfig,
    StokesState,
    default_scan_analysis,
    default_scan_sim,
    grid_neighbors,
    nearest_index,
    scan_sphere,
    sphere_grid,
    within_one_cell,
)
from .sweep import (
    DEFAULT_BASELINE_FRACTION,
    DEFAULT_LIDT_WATTS,
    isolation_db,
    isolation_threshold,
    power_sweep,
    sweep_threshold,
)
from .synth import (
    LockingCalibration,
    LoModel,
    PhaseDistribution,
    SimConfig,
    generate_pulse_train,
    locking_distribution,
    synthesize_heterodyne,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_ANALYSIS = 4

DEFAULT_SWEEP_POWERS = [-110.0, -100.0, -95.0, -90.0, -85.0, -80.0, -75.0, -70.0, -60.0, -50.0]


class ConfigError(ParameterError):
    pass


# -- configuration -----------------------------------------------------------

def _sim_defaults(cfg=None):
    d = (cfg or SimConfig()).to_dict()
    d.pop("seed")
    return d


def _defaults(command):
    calib = {"kappa_ref": LockingCalibration.kappa_ref, "p_ref_dbm": LockingCalibration.p_ref_dbm,
             "exponent": LockingCalibration.exponent}
    phase = PhaseDistribution.uniform().to_dict()
    if command == "simulate":
        return {"sim": _sim_defaults(), "phase": phase, "calibration": calib,
                "injection": {"power_dbm": None, "eta": 1.0}, "format": "binary"}
    if command == "analyze":
        return {"analysis": AnalysisConfig().to_dict(), "save_matrix": False}
    if command == "sweep":
        return {"sim": _sim_defaults(), "analysis": AnalysisConfig().to_dict(),
                "calibration": calib,
                "sweep": {"powers_dbm": list(DEFAULT_SWEEP_POWERS), "eta": 1.0,
                          "lidt_watts": DEFAULT_LIDT_WATTS, "q_target": None,
                          "baseline_fraction": DEFAULT_BASELINE_FRACTION}}
    if command == "scan-pol":
        spd = SpdConfig()
        return {"sim": _sim_defaults(default_scan_sim()),
                "analysis": default_scan_analysis().to_dict(), "calibration": calib,
                "spd": {"r_floor": spd.r_floor, "r_peak": spd.r_peak, "dwell": spd.dwell},
                "scan": {"grid": "fibonacci", "n_points": 256, "n_azimuth": 16,
                         "n_ellipticity": 9, "power_dbm": -75.0, "optimal": None}}
    if command == "fock":
        return {"fock": {"mu_photon": 0.5, "n_max": DEFAULT_N_MAX, "pdf": phase}}
    if command == "report":
        return {"report": {"threshold_dbm": None, "lidt_watts": DEFAULT_LIDT_WATTS,
                           "q_target": None, "baseline_fraction": DEFAULT_BASELINE_FRACTION}}
    raise ConfigError(f"unknown command {command!r}")


def _merge(base, over, where="config"):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}.{k}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def _set_path(d, path, value):
    *head, leaf = path.split(".")
    for k in head:
        d = d[k]
    d[leaf] = value


def _load_config_file(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    # accept a config.json written by a previous run as well as a bare config
    if "config" in doc and "config_sha256" in doc:
        return doc["config"], doc.get("seed")
    return doc, None


def resolve_config(command, args):
    cfg = _defaults(command)
    seed = None
    if args.config:
        file_cfg, seed = _load_config_file(args.config)
        cfg = _merge(cfg, file_cfg)
    for key, value in vars(args).items():
        if key.startswith(_CFG) and value is not None:
            _set_path(cfg, key[len(_CFG):], value)
    if getattr(args, "window", None) is not None:
        start, stop = args.window
        cfg["analysis"]["window"] = {"mode": WindowMode.EXPLICIT.value, "threshold_frac": 0.5,
                                     "explicit_range": [start, stop]}
    if args.seed is not None:
        seed = args.seed
    seed = 0 if seed is None else int(seed)
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    return cfg, seed


def _build(factory, d, what):
    try:
        return factory(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid {what} config: {exc}") from exc


def _sim(cfg, seed):
    return _build(lambda d: SimConfig.from_dict({**d, "seed": seed}), cfg["sim"], "sim")


def _analysis(cfg):
    if "sim" in cfg:
        # segmentation follows the simulated repetition rate
        cfg["analysis"]["rep_rate"] = cfg["sim"]["rep_rate"]
    return _build(AnalysisConfig.from_dict, cfg["analysis"], "analysis")


def _calibration(cfg):
    return _build(lambda d: LockingCalibration(**d), cfg["calibration"], "calibration")


def _phase(d):
    return _build(PhaseDistribution.from_dict, d, "phase")


# -- output helpers ----------------------------------------------------------

def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(out, command, cfg, seed, results):
    write_results({"schema_version": 1, "tool_version": __version__, "command": command,
                   "seed": seed, "config": cfg, "config_sha256": config_hash(cfg)},
                  out / "config.json")
    doc = make_container(command, cfg, seed, results, __version__)
    write_results(doc, out / "results.json")
    return doc


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args):
    cfg, seed = resolve_config("simulate", args)
    sim = _sim(cfg, seed)
    inj = cfg["injection"]
    if inj["power_dbm"] is not None:
        dist = locking_distribution(inj["power_dbm"], inj["eta"], _calibration(cfg))
        cfg["phase"] = dist.to_dict()
    else:
        dist = _phase(cfg["phase"])
    fmt = cfg["format"]
    if fmt not in FORMAT_SUFFIX:
        raise ConfigError(f"format must be one of {sorted(FORMAT_SUFFIX)}")
    train = generate_pulse_train(sim, dist)
    lo = LoModel.drifting(sim)
    wf = synthesize_heterodyne(train, lo, sim)
    out = _outdir(args)
    name = "waveform" + FORMAT_SUFFIX[fmt]
    write_waveform(wf, out / name, fmt, config_hash(cfg))
    results = {
        "waveform": name,
        "waveform_sha256": file_sha256(out / name),
        "n_samples": len(wf),
        "sample_period_s": wf.sample_period,
        "phase": dist.to_dict(),
        "q_rel_truth": dist.q_rel(),
        "lo_max_excursion_rad": lo.max_excursion,
    }
    _write_run(out, "simulate", cfg, seed, results)
    print(f"wrote {len(wf)} samples to {out / name}")
    return EXIT_OK


def cmd_analyze(args):
    cfg, seed = resolve_config("analyze", args)
    acfg = _analysis(cfg)
    try:
        wf = read_waveform(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from exc
    res = analyze_waveform(wf, acfg, seed, args.threads)
    curve = res.curve
    argmin_hist = PhaseHistogram.from_phases(res.matrix.column(curve.argmin_index), acfg.bins)
    results = {
        "input_sha256": file_sha256(args.input),
        "n_samples": len(wf),
        "sample_period_s": wf.sample_period,
        "n_pulses": res.matrix.n_pulses,
        "trigger_offset_s": res.trigger_offset,
        "window": res.window.to_dict(),
        "curve": curve.to_dict(),
        "integrated": None if res.integrated is None else res.integrated.to_dict(),
        "bound": None if res.bound is None else res.bound.to_dict(),
        "histogram_at_argmin": argmin_hist.to_dict(),
    }
    if cfg["save_matrix"]:
        results["phase_matrix"] = res.matrix.to_dict()
    out = _outdir(args)
    write_table(({"tau_s": t, "q_rel": q, "q_err": e,
                  "s_squared": s} for t, q, e, s in
                 zip(curve.tau, curve.q_rel, curve.q_err, curve.s_squared)),
                out / "qrel_curve.csv", config_hash(cfg))
    _write_run(out, "analyze", cfg, seed, results)
    print(f"q_rel_min = {curve.q_rel_min:.6g} at tau = {curve.argmin_tau:.6g} s")
    return EXIT_OK


def cmd_sweep(args):
    cfg, seed = resolve_config("sweep", args)
    sw = cfg["sweep"]
    res = power_sweep(sw["powers_dbm"], _sim(cfg, seed), _calibration(cfg), _analysis(cfg),
                      seed=seed, eta=sw["eta"], threads=args.threads)
    threshold_error = None
    try:
        isolation_threshold(res, sw["q_target"], sw["lidt_watts"], sw["baseline_fraction"])
    except ThresholdNotFoundError as exc:
        threshold_error = str(exc)
    rows = list(res.rows())
    results = {
        "powers_dbm": res.powers_dbm,
        "q_rel_min": res.q_rel_min,
        "q_err": res.q_err,
        "q_rel_min_integrated": res.q_rel_min_integrated,
        "q_err_integrated": res.q_err_integrated,
        "argmin_tau_s": res.argmin_tau,
        "seeds": res.seeds,
        "flagged": res.flagged,
        "q_target": res.q_target,
        "lidt_watts": sw["lidt_watts"],
        "threshold_dbm": res.threshold_dbm,
        "required_isolation_db": res.required_isolation_db,
        "threshold_error": threshold_error,
    }
    out = _outdir(args)
    write_table(rows, out / "sweep.csv", config_hash(cfg))
    _write_run(out, "sweep", cfg, seed, results)
    if threshold_error:
        print(f"threshold not found: {threshold_error}")
    else:
        print(f"threshold {res.threshold_dbm:.4g} dBm, isolation {res.required_isolation_db:.4g} dB")
    return EXIT_OK


def cmd_scan_pol(args):
    cfg, seed = resolve_config("scan-pol", args)
    sc = cfg["scan"]
    grid = _build(lambda d: sphere_grid(d["grid"], d["n_points"], d["n_azimuth"],
                                        d["n_ellipticity"]), sc, "scan")
    if sc["optimal"] is None:
        v = _rng.substream(seed, _rng.SCAN_OPTIMUM).normal(size=3)
        sc["optimal"] = [float(x) for x in v / np.linalg.norm(v)]
    optimal = StokesState.normalized(sc["optimal"])
    spd = _build(lambda d: SpdConfig(**d), cfg["spd"], "spd")
    res = scan_sphere(grid, sc["power_dbm"], optimal, _sim(cfg, seed), _calibration(cfg),
                      _analysis(cfg), spd, seed=seed, threads=args.threads)
    nbrs = grid_neighbors(res.states)
    nearest = nearest_index(res.states, optimal.vector)
    results = {
        "states": res.states,
        "eta": res.eta,
        "q_rel_min": res.q_rel_min,
        "spd_counts": res.spd_counts,
        "optimal": res.optimal,
        "nearest_to_optimal": nearest,
        "argmin_q": res.argmin_q,
        "argmin_counts": res.argmin_counts,
        "argmins_within_one_cell": within_one_cell(res.states, res.argmin_q,
                                                   res.argmin_counts, nbrs),
        "flagged": res.flagged,
    }
    out = _outdir(args)
    write_table(res.rows(), out / "scan.csv", config_hash(cfg))
    _write_run(out, "scan-pol", cfg, seed, results)
    print(f"argmin q_rel: {res.argmin_q}, argmin counts: {res.argmin_counts}, "
          f"flagged: {len(res.flagged)}")
    return EXIT_OK


def _fit_from_results(path):
    doc = read_results(path)
    try:
        curve = doc["results"]["curve"]
        p = curve["fits"][curve["argmin_index"]]["params"]
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"{path} holds no fitted curve") from exc
    return {"kind": "wrapped_voigt", "center": p["mu_v"], "sigma": p["sigma"],
            "gamma": p["gamma"]}


def cmd_fock(args):
    cfg, seed = resolve_config("fock", args)
    fk = cfg["fock"]
    if args.fit_from:
        fk["pdf"] = _fit_from_results(args.fit_from)
    dist = _phase(fk["pdf"])
    rho = density_matrix(fk["mu_photon"], dist, fk["n_max"])
    off = rho.entries - np.diag(np.diag(rho.entries))
    results = {
        "dim": rho.dim,
        "mu_photon": rho.mu_photon,
        "pdf": dist.to_dict(),
        "offdiag_norm": offdiag_norm(rho),
        "max_offdiag": float(np.abs(off).max()) if rho.dim > 1 else 0.0,
        "trace_deficit": rho.trace_deficit,
        "re": rho.entries.real,
        "im": rho.entries.imag,
    }
    out = _outdir(args)
    write_table(rho.to_rows(), out / "rho.csv", config_hash(cfg))
    _write_run(out, "fock", cfg, seed, results)
    print(f"off-diagonal norm {results['offdiag_norm']:.3e}, "
          f"trace deficit {rho.trace_deficit:.3e}")
    return EXIT_OK


def cmd_report(args):
    cfg, seed = resolve_config("report", args)
    rp = cfg["report"]
    if args.sweep:
        doc = read_results(args.sweep)
        if doc.get("command") != "sweep":
            raise ConfigError(f"{args.sweep} is not a sweep results file")
        r = doc["results"]
        q = np.array([np.nan if v is None else v for v in r["q_rel_min"]])
        rp["threshold_dbm"], rp["q_target"] = sweep_threshold(
            r["powers_dbm"], q, rp["q_target"], rp["baseline_fraction"])
        rp["sweep_sha256"] = file_sha256(args.sweep)
    if rp["threshold_dbm"] is None:
        raise ConfigError("report needs --threshold-dbm or --sweep")
    iso = isolation_db(rp["threshold_dbm"], rp["lidt_watts"])
    results = {"threshold_dbm": rp["threshold_dbm"], "lidt_watts": rp["lidt_watts"],
               "required_isolation_db": iso}
    out = _outdir(args)
    text = (f"locking threshold: {rp['threshold_dbm']:.6g} dBm\n"
            f"damage-threshold power: {rp['lidt_watts']:.6g} W\n"
            f"required isolation: {iso:.6g} dB\n"
            f"# schema=1 config_sha256={config_hash(cfg)}\n")
    (out / "report.txt").write_text(text)
    _write_run(out, "report", cfg, seed, results)
    sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", default="injlock-out", help="output directory")
    p.add_argument("--config", default=None, help="JSON config file (flags override it)")
    p.add_argument("--threads", type=int, default=1, help="worker threads")


_CFG = "cfg."


def _flag(p, flag, path, type=float, **kw):
    if "choices" not in kw:
        kw.setdefault("metavar", flag.lstrip("-").upper().replace("-", "_"))
    p.add_argument(flag, dest=_CFG + path, type=type, default=None, **kw)


def _switch(p, flag, path, const, help):
    p.add_argument(flag, dest=_CFG + path, action="store_const", const=const, default=None,
                   help=help)


def _sim_flags(p):
    g = p.add_argument_group("acquisition")
    _flag(g, "--rep-rate", "sim.rep_rate", help="pulse repetition rate (Hz)")
    _flag(g, "--duty-cycle", "sim.duty_cycle")
    _flag(g, "--sample-rate", "sim.sample_rate", help="oscilloscope sample rate (Sa/s)")
    _flag(g, "--n-pulses", "sim.n_pulses", type=int)
    _flag(g, "--envelope", "sim.envelope", type=str, choices=["raised_cosine_rect", "gaussian"])
    _flag(g, "--rise-time", "sim.rise_time")
    _flag(g, "--chirp-rate", "sim.chirp_rate", help="intra-pulse phase chirp (rad/s)")
    _flag(g, "--noise-rms", "sim.noise_rms", help="additive detector noise (V rms)")
    _flag(g, "--lo-drift-bound", "sim.lo_drift_bound", help="max LO phase excursion (rad)")
    _flag(g, "--detector-imbalance", "sim.detector_imbalance")


def _analysis_flags(p, rep_rate=False):
    g = p.add_argument_group("analysis")
    if rep_rate:
        _flag(g, "--rep-rate", "analysis.rep_rate", help="pulse repetition rate (Hz)")
    _flag(g, "--trigger-offset", "analysis.trigger_offset", help="first pulse start (s)")
    _switch(g, "--auto-trigger", "analysis.auto_trigger", True,
            "locate the first pulse automatically")
    _flag(g, "--window-threshold", "analysis.window.threshold_frac")
    g.add_argument("--window", nargs=2, type=float, metavar=("START", "STOP"), default=None,
                   help="explicit window inside the period (s)")
    _flag(g, "--mask-fraction", "analysis.mask_fraction")
    _flag(g, "--bins", "analysis.bins", type=int)
    _switch(g, "--weighted", "analysis.weighted", True, "Poisson-weighted fit residuals")
    _flag(g, "--n-resamples", "analysis.n_resamples", type=int)
    _flag(g, "--bootstrap", "analysis.bootstrap", type=str, choices=["argmin", "all", "none"])
    _switch(g, "--no-integrated", "analysis.integrated", False,
            "skip the integrated-pulse variant")
    _flag(g, "--bound-bins", "analysis.bound_bins", type=int,
          help="bins for the model-free bound (0 disables)")
    _flag(g, "--confidence", "analysis.confidence")


def _calib_flags(p):
    g = p.add_argument_group("locking calibration")
    _flag(g, "--kappa-ref", "calibration.kappa_ref")
    _flag(g, "--p-ref-dbm", "calibration.p_ref_dbm")
    _flag(g, "--exponent", "calibration.exponent")


def _pdf_flags(p, prefix):
    g = p.add_argument_group("phase distribution")
    _flag(g, "--phase-kind", f"{prefix}.kind", type=str,
          choices=["uniform", "delta", "wrapped_gaussian", "wrapped_cauchy", "wrapped_voigt"])
    _flag(g, "--center", f"{prefix}.center")
    _flag(g, "--sigma", f"{prefix}.sigma")
    _flag(g, "--gamma", f"{prefix}.gamma")


def build_parser():
    parser = argparse.ArgumentParser(prog="injlock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a heterodyne waveform pair")
    _common(p)
    _sim_flags(p)
    _pdf_flags(p, "phase")
    _calib_flags(p)
    _flag(p, "--power-dbm", "injection.power_dbm",
          help="derive the phase distribution from this injected power")
    _flag(p, "--eta", "injection.eta", help="polarization coupling fraction")
    _flag(p, "--format", "format", type=str, choices=sorted(FORMAT_SUFFIX))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="q_rel analysis of a waveform file")
    p.add_argument("input", help="waveform file (text or QRW1 binary)")
    _common(p)
    _analysis_flags(p, rep_rate=True)
    _switch(p, "--save-matrix", "save_matrix", True, "include the per-pulse phase matrix")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="q_rel_min versus injected power")
    _common(p)
    _sim_flags(p)
    _analysis_flags(p)
    _calib_flags(p)
    p.add_argument("--powers", dest=_CFG + "sweep.powers_dbm", nargs="+", type=float, default=None,
                   metavar="DBM", help="injected powers (dBm), increasing")
    _flag(p, "--eta", "sweep.eta")
    _flag(p, "--lidt-w", "sweep.lidt_watts", help="damage-threshold power (W)")
    _flag(p, "--q-target", "sweep.q_target")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scan-pol", help="q_rel_min and SPD counts over the Poincare sphere")
    _common(p)
    _sim_flags(p)
    _analysis_flags(p)
    _calib_flags(p)
    _flag(p, "--grid", "scan.grid", type=str, choices=["fibonacci", "azel"])
    _flag(p, "--n-points", "scan.n_points", type=int)
    _flag(p, "--power-dbm", "scan.power_dbm")
    p.add_argument("--optimal", dest=_CFG + "scan.optimal", nargs=3, type=float, default=None,
                   metavar=("S1", "S2", "S3"), help="optimal Stokes vector (default random)")
    p.set_defaults(func=cmd_scan_pol)

    p = sub.add_parser("fock", help="Fock-basis density matrix of a phase-mixed coherent state")
    _common(p)
    _flag(p, "--mu", "fock.mu_photon", help="mean photon number")
    _flag(p, "--n-max", "fock.n_max", type=int)
    _pdf_flags(p, "fock.pdf")
    p.add_argument("--fit-from", default=None,
                   help="use the fit at the q_rel minimum of an analyze results file")
    p.set_defaults(func=cmd_fock)

    p = sub.add_parser("report", help="required isolation from a locking threshold")
    _common(p)
    _flag(p, "--threshold-dbm", "report.threshold_dbm")
    _flag(p, "--lidt-w", "report.lidt_watts", help="damage-threshold power (W)")
    _flag(p, "--q-target", "report.q_target")
    p.add_argument("--sweep", default=None, help="derive the threshold from a sweep results file")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WaveformParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnalysisError, InjlockError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
