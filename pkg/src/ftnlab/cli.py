"""Declarative experiment runner.

``ftn-lab <experiment> --config file.toml`` validates a flat TOML config,
runs one experiment kind, and writes self-describing CSV tables plus a
``meta.json`` sidecar into the output directory. Every row echoes the
parameters that produced it and stochastic tables carry the run seed, so
identical config + seed reproduces byte-identical numeric payloads.

Exit codes: 0 ok, 2 config error (message names the offending field),
3 trellis state budget exceeded, 1 other library failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from . import eq_time
from .capacity import constrained_capacity, info_rate_arnold_loeliger
from .coded import TurboConfig, simulate_coded_frame, truncated_whitened_taps, turbo_equalize
from .eq_freq import fde_mmse, setting_from_taps
from .errors import ConfigError, FtnError, StateExplosionError
from .mazo import mazo_scan
from .model import (FtnConfig, awgn, constellation_alphabet,
                    effective_half_length, fd_frontend, random_frame, modulate)
from .pulse import folded_spectrum, folded_values, isi_taps, make_pulse, whiten_forney
from .sensing import SensingScene, af_peak_report, expected_af, ml_doppler, synthesize_return

EXPERIMENTS = ("spectrum", "capacity", "rates", "mazo", "ber-td", "ber-fd",
               "coded", "sense-af", "sense-ml")

_CONFIG_DIR = Path(__file__).parent / "configs"


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("ftnlab")
    except Exception:
        return "unknown"


# ---------------------------------------------------------------- validation

def _fail(field: str, why: str):
    raise ConfigError(f"field '{field}': {why}")


def _get(cfg: dict, field: str, default=None, required: bool = False):
    if field in cfg:
        return cfg[field]
    if required:
        _fail(field, "is required")
    return default


def _int_at_least(cfg, field, lo, default=None, required=False):
    v = _get(cfg, field, default, required)
    if v is None:
        return None
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        _fail(field, f"must be an integer >= {lo}, got {v!r}")
    return v


def _float_in(cfg, field, lo, hi, default=None, required=False,
              lo_open=False, hi_open=False):
    v = _get(cfg, field, default, required)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(field, f"must be a finite number, got {v!r}")
    v = float(v)
    if (v <= lo if lo_open else v < lo) or (v >= hi if hi_open else v > hi):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        _fail(field, f"must be in {lb}{lo}, {hi}{rb}, got {v}")
    return v


def _float_list(cfg, field, lo=-math.inf, hi=math.inf, required=False,
                default=None, lo_open=False):
    v = _get(cfg, field, default, required)
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        _fail(field, "must be a nonempty list of numbers")
    out = []
    for i, x in enumerate(v):
        sub = {f"{field}[{i}]": x}
        out.append(_float_in(sub, f"{field}[{i}]", lo, hi, required=True,
                             lo_open=lo_open))
    return out


def _choice(cfg, field, options, default=None, required=False):
    v = _get(cfg, field, default, required)
    if v is None:
        return None
    if v not in options:
        _fail(field, f"must be one of {sorted(options)}, got {v!r}")
    return v


def _reject_unknown(cfg: dict, allowed, where: str = ""):
    prefix = where + "." if where else ""
    for key in cfg:
        if key not in allowed:
            _fail(prefix + key, "unknown key")


def _pulse_from(cfg: dict, default_span: int = 12) -> "make_pulse":
    tbl = _get(cfg, "pulse", required=True)
    if not isinstance(tbl, dict):
        _fail("pulse", "must be a table with kind/beta/samples_per_T/span")
    _reject_unknown(tbl, {"kind", "beta", "samples_per_T", "span"}, "pulse")
    kind = _choice(tbl, "kind", {"sinc", "rrc"}, required=True)
    beta = _float_in(tbl, "beta", 0.0, 1.0, default=0.0)
    spt = _int_at_least(tbl, "samples_per_T", 8, default=10)
    span = _int_at_least(tbl, "span", 1, default=default_span)
    try:
        return make_pulse(kind, beta, samples_per_T=spt, span=span)
    except ValueError as e:
        raise ConfigError(f"field 'pulse': {e}") from e


def _taus_from(cfg: dict) -> list:
    return _float_list(cfg, "taus", 0.0, 1.0, required=True, lo_open=True)


COMMON_KEYS = {"experiment", "seed", "out", "pulse"}


def _parallel(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _esn0_from_ebn0(ebn0_db: float, bits_per_symbol: float) -> float:
    return ebn0_db + 10.0 * math.log10(bits_per_symbol)


def _count_bit_errors(llr: np.ndarray, truth: np.ndarray) -> int:
    return int(np.sum(eq_time.hard_bits(llr) != truth))


# ---------------------------------------------------------------- experiments

def _run_spectrum(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "n_freq"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    n_freq = _int_at_least(cfg, "n_freq", 3, default=257)
    xi = np.linspace(-0.5, 0.5, n_freq)
    rows = []
    for tau in taus:
        vals = folded_values(p, tau, xi)
        for x, v in zip(xi, vals):
            rows.append((p.kind, p.beta, p.span, p.samples_per_T, tau, x, v))
    header = ["kind", "beta", "span", "samples_per_T", "tau", "xi", "value"]
    return {"spectrum.csv": (header, rows)}


def _run_capacity(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "esn0_db", "grid_size"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    esn0s = _float_list(cfg, "esn0_db", -40.0, 60.0, required=True)
    grid_size = _int_at_least(cfg, "grid_size", 256, default=1024)
    if grid_size & (grid_size - 1):
        _fail("grid_size", f"must be a power of two, got {grid_size}")
    rows = []
    for tau in taus:
        fs = folded_spectrum(p, tau, grid_size=grid_size)
        for esn0 in esn0s:
            n0 = 10.0 ** (-esn0 / 10.0)
            # unit symbol energy at spacing tau*T means input PSD 1/(tau*T)
            c = constrained_capacity(fs, 1.0 / (tau * p.T), n0)
            bits_per_symbol = c * tau * p.T
            se = c * p.T / (1.0 + p.beta)
            ebn0 = esn0 - 10.0 * math.log10(bits_per_symbol) \
                if bits_per_symbol > 0 else math.inf
            rows.append((tau, p.beta, esn0, ebn0, se, "bits/s/Hz", "gaussian"))
    header = ["tau", "beta", "EsN0_dB", "EbN0_dB", "rate", "rate_units", "method"]
    return {"capacity.csv": (header, rows)}


def _run_rates(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "esn0_db", "constellation",
                                        "n_symbols", "n_trials", "coverage",
                                        "max_taps"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    esn0s = _float_list(cfg, "esn0_db", -40.0, 60.0, required=True)
    constellation = _choice(cfg, "constellation", {"bpsk", "qpsk"}, default="bpsk")
    n_symbols = _int_at_least(cfg, "n_symbols", 64, default=4096)
    n_trials = _int_at_least(cfg, "n_trials", 1, default=8)
    coverage = _float_in(cfg, "coverage", 0.5, 1.0, default=0.999)
    max_taps = _int_at_least(cfg, "max_taps", 1)
    cells = [(tau, esn0) for tau in taus for esn0 in esn0s]

    def cell(args):
        idx, (tau, esn0) = args
        ch = whiten_forney(isi_taps(p, tau))
        return info_rate_arnold_loeliger(ch, constellation, esn0, n_symbols,
                                         n_trials, seed=seed + 7919 * idx,
                                         beta=p.beta, coverage=coverage,
                                         max_taps=max_taps)

    pts = _parallel(cell, list(enumerate(cells)), threads)
    rows = [(pt.tau, pt.beta, constellation, pt.EsN0_dB, pt.EbN0_dB, pt.rate,
             pt.rate_units, pt.mc_std_err, n_symbols, n_trials, seed, pt.method)
            for pt in pts]
    header = ["tau", "beta", "constellation", "EsN0_dB", "EbN0_dB", "rate",
              "rate_units", "mc_std_err", "n_symbols", "n_trials", "seed",
              "method"]
    return {"rates.csv": (header, rows)}


def _run_mazo(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"pulses", "samples_per_T", "span",
                                        "tau_start", "tau_stop", "tau_step",
                                        "max_len", "tol", "method"})
    pulses = _get(cfg, "pulses", required=True)
    if not isinstance(pulses, list) or not pulses:
        _fail("pulses", "must be a nonempty list of {kind, beta} tables")
    spt = _int_at_least(cfg, "samples_per_T", 8, default=10)
    span = _int_at_least(cfg, "span", 1, default=48)
    start = _float_in(cfg, "tau_start", 0.0, 1.0, required=True, lo_open=True)
    stop = _float_in(cfg, "tau_stop", 0.0, 1.0, required=True, lo_open=True)
    step = _float_in(cfg, "tau_step", 0.0, 1.0, required=True, lo_open=True)
    if stop >= start:
        _fail("tau_stop", "must be below tau_start (grid scans downward)")
    max_len = _int_at_least(cfg, "max_len", 1, default=14)
    tol = _float_in(cfg, "tol", 0.0, 1.0, default=0.01, lo_open=True)
    method = _choice(cfg, "method", {"auto", "exhaustive", "branch_bound"},
                     default="auto")
    grid = np.round(np.arange(start, stop - 1e-12, -step), 10)

    def scan(args):
        i, tbl = args
        if not isinstance(tbl, dict):
            _fail(f"pulses[{i}]", "must be a {kind, beta} table")
        _reject_unknown(tbl, {"kind", "beta"}, f"pulses[{i}]")
        kind = _choice(tbl, "kind", {"sinc", "rrc"}, required=True)
        beta = _float_in(tbl, "beta", 0.0, 1.0, default=0.0)
        p = make_pulse(kind, beta, samples_per_T=spt, span=span)
        return p, mazo_scan(p, grid, max_len=max_len, tol=tol, method=method)

    rows = []
    for p, scan_result in _parallel(scan, list(enumerate(pulses)), threads):
        for tau, d2, alen in zip(scan_result.taus, scan_result.d2mins,
                                 scan_result.argmin_lengths):
            rows.append((p.kind, p.beta, p.span, max_len, tol, tau, d2, alen,
                         scan_result.limit))
    header = ["kind", "beta", "span", "max_len", "tol", "tau", "d2min",
              "argmin_len", "limit"]
    return {"mazo.csv": (header, rows)}


def _bits_to_symbols(bits: np.ndarray, constellation: str) -> np.ndarray:
    from .model import map_bits
    return map_bits(bits, constellation, 1.0)


def _td_cell(p, tau, constellation, equalizer, max_taps, coverage, m_paths,
             ebn0, n_symbols, n_frames, seed, unit_base):
    """Uncoded BER on the truncated whitened symbol-rate channel."""
    from .eq_time import TrellisSpec, bcjr_full, mbcjr, viterbi_mlse
    from .model import Observation
    alphabet = constellation_alphabet(constellation, 1.0)
    bps = int(round(math.log2(alphabet.size)))
    taps = truncated_whitened_taps(whiten_forney(isi_taps(p, tau)).f_taps,
                                   max_taps=max_taps, coverage=coverage)
    spec = TrellisSpec(taps=taps, alphabet=alphabet, metric="euclidean")
    esn0 = _esn0_from_ebn0(ebn0, bps)
    n0 = 10.0 ** (-esn0 / 10.0)
    errors = 0
    for k in range(n_frames):
        rng = np.random.default_rng([0xB7D, seed, unit_base + k])
        bits = rng.integers(0, 2, n_symbols * bps, dtype=np.int64)
        x = _bits_to_symbols(bits, constellation)
        y = np.convolve(taps, x)
        w = rng.standard_normal(2 * y.size)
        y = y + np.sqrt(n0 / 2.0) * (w[0::2] + 1j * w[1::2])
        obs = Observation(model="forney", y=y, noise_psd=n0,
                          n_symbols=n_symbols, n_tail=taps.size - 1)
        if equalizer == "viterbi":
            syms = viterbi_mlse(spec, obs)
            idx = np.argmin(np.abs(syms[:, None] - alphabet[None, :]), axis=1)
            dec = np.empty(n_symbols * bps, dtype=np.int64)
            for b in range(bps):
                dec[b::bps] = (idx >> b) & 1
            errors += int(np.sum(dec != bits))
        elif equalizer == "mbcjr":
            soft = mbcjr(spec, obs, M=m_paths, extrinsic=False)
            errors += _count_bit_errors(soft.llr, bits)
        else:
            soft = bcjr_full(spec, obs, extrinsic=False)
            errors += _count_bit_errors(soft.llr, bits)
    return errors, n_symbols * bps * n_frames


def _run_ber_td(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "ebn0_db", "constellation",
                                        "equalizer", "m_paths", "max_taps",
                                        "coverage", "n_symbols", "n_frames"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    ebn0s = _float_list(cfg, "ebn0_db", -10.0, 40.0, required=True)
    constellation = _choice(cfg, "constellation", {"bpsk", "qpsk"}, default="bpsk")
    equalizer = _choice(cfg, "equalizer", {"bcjr_full", "mbcjr", "viterbi"},
                        default="bcjr_full")
    m_paths = _int_at_least(cfg, "m_paths", 1, default=16)
    max_taps = _int_at_least(cfg, "max_taps", 1, default=8)
    coverage = _float_in(cfg, "coverage", 0.5, 1.0, default=0.999)
    n_symbols = _int_at_least(cfg, "n_symbols", 16, default=4096)
    n_frames = _int_at_least(cfg, "n_frames", 1, default=10)
    cells = [(tau, ebn0) for tau in taus for ebn0 in ebn0s]

    def cell(args):
        i, (tau, ebn0) = args
        return _td_cell(p, tau, constellation, equalizer, max_taps, coverage,
                        m_paths, ebn0, n_symbols, n_frames, seed,
                        unit_base=i * n_frames)

    results = _parallel(cell, list(enumerate(cells)), threads)
    bps = 1 if constellation == "bpsk" else 2
    rows = []
    for (tau, ebn0), (errs, nbits) in zip(cells, results):
        rows.append((tau, p.beta, constellation, equalizer, max_taps,
                     _esn0_from_ebn0(ebn0, bps), ebn0, n_frames, nbits, errs,
                     errs / nbits, seed))
    header = ["tau", "beta", "constellation", "equalizer", "max_taps",
              "EsN0_dB", "EbN0_dB", "n_frames", "n_bits", "n_errors", "ber",
              "seed"]
    return {"ber_td.csv": (header, rows)}


def _run_ber_fd(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "ebn0_db", "constellation",
                                        "n_block", "cp_len", "n_frames",
                                        "include_td_reference", "max_taps"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    ebn0s = _float_list(cfg, "ebn0_db", -10.0, 40.0, required=True)
    constellation = _choice(cfg, "constellation", {"bpsk", "qpsk"}, default="bpsk")
    n_block = _int_at_least(cfg, "n_block", 8, default=256)
    cp_cfg = _int_at_least(cfg, "cp_len", 0)
    n_frames = _int_at_least(cfg, "n_frames", 1, default=20)
    with_td = _get(cfg, "include_td_reference", default=False)
    if not isinstance(with_td, bool):
        _fail("include_td_reference", "must be a boolean")
    max_taps = _int_at_least(cfg, "max_taps", 1, default=8)
    bps = 1 if constellation == "bpsk" else 2
    cells = [(tau, ebn0) for tau in taus for ebn0 in ebn0s]

    def cell(args):
        i, (tau, ebn0) = args
        ch = isi_taps(p, tau)
        cp = 2 * effective_half_length(ch) if cp_cfg is None else cp_cfg
        fcfg = FtnConfig(pulse=p, tau=tau, N=n_block,
                         constellation=constellation, cp_len=cp)
        esn0 = _esn0_from_ebn0(ebn0, bps)
        n0 = 10.0 ** (-esn0 / 10.0)
        setting = setting_from_taps(fcfg, n0=n0, ch=ch)
        errors = 0
        for k in range(n_frames):
            unit = i * n_frames + k
            frame = random_frame(fcfg, seed=[0xFDE, seed, unit, 0])
            sig = modulate(fcfg, frame)
            noisy = awgn(sig, n0, seed=[0xFDE, seed, unit, 1],
                         samples_per_T=p.samples_per_T, T=p.T)
            obs = fd_frontend(fcfg, noisy, n0=n0, ch=ch)
            res = fde_mmse(obs, setting, constellation)
            errors += _count_bit_errors(res.llr, frame.bits)
        return cp, errors, n_block * bps * n_frames

    results = _parallel(cell, list(enumerate(cells)), threads)
    rows = []
    for (tau, ebn0), (cp, errs, nbits) in zip(cells, results):
        rows.append((tau, p.beta, constellation, "fde_mmse", n_block, cp,
                     _esn0_from_ebn0(ebn0, bps), ebn0, n_frames, nbits, errs,
                     errs / nbits, seed))
    if with_td:
        def td(args):
            i, (tau, ebn0) = args
            return _td_cell(p, tau, constellation, "bcjr_full", max_taps,
                            0.999, 16, ebn0, n_block, n_frames, seed,
                            unit_base=(len(cells) + i) * n_frames)
        for (tau, ebn0), (errs, nbits) in zip(cells, _parallel(td, list(enumerate(cells)), threads)):
            rows.append((tau, p.beta, constellation, "bcjr_full", n_block, 0,
                         _esn0_from_ebn0(ebn0, bps), ebn0, n_frames, nbits,
                         errs, errs / nbits, seed))
    header = ["tau", "beta", "constellation", "equalizer", "n_block", "cp_len",
              "EsN0_dB", "EbN0_dB", "n_frames", "n_bits", "n_errors", "ber",
              "seed"]
    return {"ber_fd.csv": (header, rows)}


def _run_coded(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"tau", "ebn0_db", "constellation",
                                        "info_len", "iterations",
                                        "interleaver_seed", "equalizer",
                                        "m_paths", "max_taps", "coverage",
                                        "n_frames"})
    p = _pulse_from(cfg)
    tau = _float_in(cfg, "tau", 0.0, 1.0, required=True, lo_open=True)
    ebn0s = _float_list(cfg, "ebn0_db", -10.0, 40.0, required=True)
    constellation = _choice(cfg, "constellation", {"bpsk", "qpsk"}, default="bpsk")
    info_len = _int_at_least(cfg, "info_len", 1, required=True)
    iterations = _int_at_least(cfg, "iterations", 1, default=10)
    il_seed = _int_at_least(cfg, "interleaver_seed", 0, default=0)
    equalizer = _choice(cfg, "equalizer", {"bcjr_full", "mbcjr"},
                        default="bcjr_full")
    m_paths = _int_at_least(cfg, "m_paths", 1, default=16)
    max_taps = _int_at_least(cfg, "max_taps", 1, default=8)
    coverage = _float_in(cfg, "coverage", 0.5, 1.0, default=0.999)
    n_frames = _int_at_least(cfg, "n_frames", 1, default=8)

    tcfg = TurboConfig(info_len=info_len, interleaver_seed=il_seed,
                       iterations=iterations, equalizer=equalizer,
                       m_paths=m_paths)
    alphabet = constellation_alphabet(constellation, 1.0)
    bps = int(round(math.log2(alphabet.size)))
    code_rate = tcfg.info_len / tcfg.coded_len
    taps = truncated_whitened_taps(whiten_forney(isi_taps(p, tau)).f_taps,
                                   max_taps=max_taps, coverage=coverage)
    spec = eq_time.TrellisSpec(taps=taps, alphabet=alphabet, metric="euclidean")
    units = [(j, ebn0, k) for j, ebn0 in enumerate(ebn0s) for k in range(n_frames)]

    def frame(args):
        j, ebn0, k = args
        esn0 = _esn0_from_ebn0(ebn0, bps * code_rate)
        n0 = 10.0 ** (-esn0 / 10.0)
        obs, info = simulate_coded_frame(tcfg, taps, n0,
                                         seed=seed + 7919 * (j * n_frames + k),
                                         constellation=constellation)
        res = turbo_equalize(obs, tcfg, spec=spec, constellation=constellation,
                             truth_info=info)
        return res.error_trace

    traces = _parallel(frame, units, threads)
    rows = []
    for j, ebn0 in enumerate(ebn0s):
        total = np.zeros(iterations, dtype=np.int64)
        for (uj, _, _), tr in zip(units, traces):
            if uj == j:
                total += tr
        nbits = info_len * n_frames
        for it in range(iterations):
            rows.append((tau, p.beta, constellation, equalizer, info_len,
                         _esn0_from_ebn0(ebn0, bps * code_rate), ebn0, it + 1,
                         n_frames, nbits, int(total[it]), total[it] / nbits,
                         seed))
    header = ["tau", "beta", "constellation", "equalizer", "info_len",
              "EsN0_dB", "EbN0_dB", "iteration", "n_frames", "n_bits",
              "n_errors", "ber", "seed"]
    return {"coded.csv": (header, rows)}


def _run_sense_af(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "n_symbols", "trials",
                                        "delays", "doppler_start",
                                        "doppler_stop", "doppler_points",
                                        "exclusion_radius", "threshold_factor"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    n_symbols = _int_at_least(cfg, "n_symbols", 2, default=128)
    trials = _int_at_least(cfg, "trials", 100, default=500)
    delays = _float_list(cfg, "delays", -100.0, 100.0, default=[0.0])
    d_start = _float_in(cfg, "doppler_start", -100.0, 100.0, default=-2.0)
    d_stop = _float_in(cfg, "doppler_stop", -100.0, 100.0, default=2.0)
    if d_stop <= d_start:
        _fail("doppler_stop", "must exceed doppler_start")
    d_points = _int_at_least(cfg, "doppler_points", 3, default=321)
    excl = _float_in(cfg, "exclusion_radius", 0.0, 100.0, default=0.5, lo_open=True)
    factor = _float_in(cfg, "threshold_factor", 0.0, 100.0, default=3.0, lo_open=True)
    dops = np.linspace(d_start, d_stop, d_points)

    def one(tau):
        fcfg = FtnConfig(pulse=p, tau=tau, N=n_symbols)
        return expected_af(fcfg, delays, dops, trials=trials, seed=seed)

    grids = _parallel(one, taus, threads)
    grid_rows, peak_rows = [], []
    for tau, g in zip(taus, grids):
        for i, d in enumerate(g.delay_grid):
            for j, nu in enumerate(g.doppler_grid):
                grid_rows.append((tau, p.beta, n_symbols, trials, seed, d, nu,
                                  g.values[i, j], g.stderr[i, j]))
        if 0.0 in [float(x) for x in delays]:
            for pk in af_peak_report(g, exclusion_radius=excl,
                                     threshold_factor=factor):
                peak_rows.append((tau, p.beta, n_symbols, trials, seed, excl,
                                  factor, pk.doppler, pk.value, pk.ratio))
    out = {"af_grid.csv": (["tau", "beta", "n_symbols", "trials", "seed",
                            "delay", "doppler", "value", "stderr"], grid_rows),
           "af_peaks.csv": (["tau", "beta", "n_symbols", "trials", "seed",
                             "exclusion_radius", "threshold_factor", "doppler",
                             "value", "ratio"], peak_rows)}
    return out


def _run_sense_ml(cfg, seed, threads):
    _reject_unknown(cfg, COMMON_KEYS | {"taus", "duration", "targets",
                                        "noise_psd", "n_runs", "grid_start",
                                        "grid_stop", "grid_points"})
    p = _pulse_from(cfg)
    taus = _taus_from(cfg)
    duration = _float_in(cfg, "duration", 1.0, 10000.0, default=32.0)
    targets = _get(cfg, "targets", required=True)
    if (not isinstance(targets, list) or len(targets) != 2
            or any(not isinstance(t, list) or len(t) != 3 for t in targets)):
        _fail("targets", "must be exactly two [doppler, amp_re, amp_im] triples")
    tg = tuple((float(t[0]), complex(float(t[1]), float(t[2]))) for t in targets)
    noise_psd = _float_in(cfg, "noise_psd", 0.0, 1000.0, required=True)
    n_runs = _int_at_least(cfg, "n_runs", 1, default=100)
    g_start = _float_in(cfg, "grid_start", -100.0, 100.0, default=-1.0)
    g_stop = _float_in(cfg, "grid_stop", -100.0, 100.0, default=1.0)
    if g_stop <= g_start:
        _fail("grid_stop", "must exceed grid_start")
    g_points = _int_at_least(cfg, "grid_points", 3, default=201)
    grid = np.linspace(g_start, g_stop, g_points)
    half_cell = 0.5 * (grid[1] - grid[0])

    def one(tau):
        n = int(round(duration / tau))
        fcfg = FtnConfig(pulse=p, tau=tau, N=n)
        scene = SensingScene(targets=tg, noise_psd=noise_psd, cfg=fcfg)
        out = []
        for k in range(n_runs):
            frame = random_frame(fcfg, seed=[0x317, seed, k])
            r = synthesize_return(scene, frame, seed=[0x318, seed, k])
            est = ml_doppler(scene, frame, r, grid)
            errs = [min(abs(d - t[0]) for d in est.dopplers) for t in tg]
            out.append((k, est, errs))
        return out

    results = _parallel(one, taus, threads)
    run_rows, summary_rows = [], []
    for tau, runs in zip(taus, results):
        ok_both = ok_weak = 0
        for k, est, errs in runs:
            ok = [e <= half_cell for e in errs]
            ok_both += all(ok)
            ok_weak += ok[1]
            run_rows.append((tau, p.beta, noise_psd, seed, k,
                             est.dopplers[0], est.dopplers[1],
                             abs(est.amplitudes[0]), abs(est.amplitudes[1]),
                             errs[0], errs[1], int(ok[0]), int(ok[1])))
        summary_rows.append((tau, p.beta, noise_psd, n_runs, seed, half_cell,
                             ok_both / n_runs, ok_weak / n_runs))
    out = {"sense_ml_runs.csv": (["tau", "beta", "noise_psd", "seed", "run",
                                  "est_doppler_1", "est_doppler_2",
                                  "est_amp_1", "est_amp_2", "err_target_1",
                                  "err_target_2", "ok_target_1",
                                  "ok_target_2"], run_rows),
           "sense_ml_summary.csv": (["tau", "beta", "noise_psd", "n_runs",
                                     "seed", "success_radius", "both_rate",
                                     "weak_rate"], summary_rows)}
    return out


RUNNERS = {"spectrum": _run_spectrum, "capacity": _run_capacity,
           "rates": _run_rates, "mazo": _run_mazo, "ber-td": _run_ber_td,
           "ber-fd": _run_ber_fd, "coded": _run_coded,
           "sense-af": _run_sense_af, "sense-ml": _run_sense_ml}


# ---------------------------------------------------------------- plumbing

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e


def run(experiment: str, config_path: str, out_dir: str | None = None,
        seed: int | None = None, threads: int = 1) -> list:
    """Run one experiment; returns the list of files written."""
    cfg = load_config(config_path)
    declared = cfg.get("experiment")
    if declared != experiment:
        _fail("experiment", f"config declares {declared!r}, "
                            f"command line asked for {experiment!r}")
    if seed is None:
        seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) \
            or not (0 <= seed < 2 ** 64):
        _fail("seed", f"must be an integer in [0, 2^64), got {seed!r}")
    if threads < 1:
        _fail("threads", f"must be >= 1, got {threads}")
    out = Path(out_dir if out_dir is not None else cfg.get("out", "out"))
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    tables = RUNNERS[experiment](cfg, seed, threads)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in tables.items():
        path = out / name
        write_csv(path, header, rows)
        written.append(path)
    meta = {"config": cfg, "seed": seed, "version": _version(),
            "started_at": started, "elapsed_s": round(time.monotonic() - t0, 3)}
    meta_path = out / "meta.json"
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(meta_path)
    return written


def list_experiments(user_dir: str | None = None) -> list:
    """(name, experiment, path) for bundled configs plus a user directory."""
    entries = []
    dirs = [_CONFIG_DIR] + ([Path(user_dir)] if user_dir else [])
    for d in dirs:
        if not d.is_dir():
            continue
        for path in sorted(d.glob("*.toml")):
            try:
                kind = load_config(str(path)).get("experiment", "?")
            except ConfigError:
                kind = "?"
            entries.append((path.stem, kind, str(path)))
    return entries


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ftn-lab",
        description="Run packaged signaling experiments from TOML configs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, help="TOML config path")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent cells")
    lp = sub.add_parser("list", help="list bundled experiment configs")
    lp.add_argument("--user-dir", default=None,
                    help="extra directory of user configs to append")
    args = parser.parse_args(argv)

    try:
        if args.command == "list":
            for name, kind, path in list_experiments(args.user_dir):
                print(f"{name:<18} {kind:<9} {path}")
            return 0
        written = run(args.command, args.config, out_dir=args.out,
                      seed=args.seed, threads=args.threads)
        for path in written:
            print(path)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except StateExplosionError as e:
        print(f"resource budget exceeded: {e}", file=sys.stderr)
        return 3
    except FtnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
