"""Coded transmission over tight packing: outer convolutional code, random
interleaver, and turbo equalization against the ISI introduced by the pulse
overlap.

The outer code is a terminated rate-1/2 feedforward convolutional code with
configurable octal generators, default (7, 5). Coded bits are interleaved,
mapped to symbols, and pushed through the usual observation frontends; the
receiver alternates between a soft-input soft-output symbol equalizer and a
soft-output decoder, exchanging extrinsic information only:

    equalizer extrinsic -> deinterleave -> decoder channel input
    decoder posterior minus its input -> interleave -> equalizer priors

Per-bit LLRs follow the package convention log P(0)/P(1), clamped to +-50.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .eq_freq import FdeSetting, cp_overhead, fde_mmse
from .eq_time import (LLR_CLAMP, TrellisSpec, _lae, bcjr_full, hard_bits,
                      mbcjr, symbol_log_priors)
from .model import FtnConfig, Observation, constellation_alphabet, map_bits

__all__ = [
    "TurboConfig",
    "TurboResult",
    "ThroughputReport",
    "cc_encode",
    "cc_decode",
    "make_interleaver",
    "truncated_whitened_taps",
    "simulate_coded_frame",
    "turbo_equalize",
    "coded_throughput_report",
]

_EQUALIZERS = ("bcjr_full", "mbcjr", "fde_mmse")


@dataclass(frozen=True)
class TurboConfig:
    """Outer code, interleaver, and inner-equalizer selection."""

    info_len: int
    generators: tuple = (0o7, 0o5)
    interleaver_seed: int = 0
    iterations: int = 10
    equalizer: str = "bcjr_full"
    m_paths: int = 16

    def __post_init__(self):
        if self.info_len < 1:
            raise ValueError("info_len must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.equalizer not in _EQUALIZERS:
            raise ValueError(f"equalizer must be one of {_EQUALIZERS}")
        g = tuple(int(v) for v in self.generators)
        if len(g) != 2 or min(g) < 1 or max(g) < 2:
            raise ValueError("generators must be two positive octal polynomials")
        object.__setattr__(self, "generators", g)

    @property
    def memory(self) -> int:
        return max(v.bit_length() for v in self.generators) - 1

    @property
    def coded_len(self) -> int:
        """Codeword bits including the termination tail."""
        return 2 * (self.info_len + self.memory)


def _code_tables(generators):
    """Next-state and output-bit tables over the shift-register trellis.

    Register value r carries the current input at its top bit and the
    previous inputs below, newest first; each output bit is the parity of
    r masked by its generator.
    """
    g1, g2 = generators
    m = max(g1.bit_length(), g2.bit_length()) - 1
    n_states = 1 << m
    ns = np.zeros((n_states, 2), dtype=np.int64)
    out = np.zeros((n_states, 2, 2), dtype=np.int8)
    for s in range(n_states):
        for a in (0, 1):
            r = (a << m) | s
            out[s, a, 0] = bin(r & g1).count("1") & 1
            out[s, a, 1] = bin(r & g2).count("1") & 1
            ns[s, a] = (a << (m - 1)) | (s >> 1) if m > 0 else 0
    return ns, out, m


def cc_encode(bits: np.ndarray, generators=(0o7, 0o5)) -> np.ndarray:
    """Terminated rate-1/2 codeword, output pairs interleaved per step."""
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size < 1:
        raise ValueError("bits must be a nonempty 1-d array")
    g1, g2 = generators
    m = max(g1.bit_length(), g2.bit_length()) - 1
    u = np.concatenate([bits.astype(np.int64), np.zeros(m, dtype=np.int64)])
    out = np.empty((u.size, 2), dtype=np.int64)
    for j, g in enumerate((g1, g2)):
        taps = np.array([(g >> (m - i)) & 1 for i in range(m + 1)], dtype=np.int64)
        out[:, j] = np.convolve(u, taps)[:u.size] % 2
    return out.reshape(-1)


def make_interleaver(n: int, seed: int) -> np.ndarray:
    """Seeded uniform random permutation; symbol-domain bit j is coded bit perm[j]."""
    if n < 1:
        raise ValueError("interleaver length must be >= 1")
    return np.random.default_rng([0x17E4, seed]).permutation(n)


@njit(cache=True)
def _cc_bcjr_kernel(chan, ns_tab, out_tab, n_info):
    """Forward-backward pass over the terminated code trellis.

    chan[t, j] is the input LLR of output bit j at step t; the last
    (N - n_info) steps admit only the zero input. Returns info-bit posterior
    LLRs and per-step posterior LLRs of both output bits.
    """
    neg = -1e30
    n_steps = chan.shape[0]
    n_states = ns_tab.shape[0]
    alpha = np.full((n_steps + 1, n_states), neg)
    alpha[0, 0] = 0.0
    for t in range(n_steps):
        n_in = 2 if t < n_info else 1
        for s in range(n_states):
            a_s = alpha[t, s]
            if a_s < neg / 2:
                continue
            for a in range(n_in):
                g = 0.5 * ((1.0 - 2.0 * out_tab[s, a, 0]) * chan[t, 0]
                           + (1.0 - 2.0 * out_tab[s, a, 1]) * chan[t, 1])
                nxt = ns_tab[s, a]
                alpha[t + 1, nxt] = _lae(alpha[t + 1, nxt], a_s + g)
        peak = neg
        for s in range(n_states):
            if alpha[t + 1, s] > peak:
                peak = alpha[t + 1, s]
        for s in range(n_states):
            if alpha[t + 1, s] > neg / 2:
                alpha[t + 1, s] -= peak

    beta = np.full(n_states, neg)
    beta[0] = 0.0
    info_llr = np.zeros(n_info)
    post = np.zeros((n_steps, 2))
    newbeta = np.empty(n_states)
    for t in range(n_steps - 1, -1, -1):
        n_in = 2 if t < n_info else 1
        p0c1 = neg; p1c1 = neg; p0c2 = neg; p1c2 = neg
        p0a = neg; p1a = neg
        for s in range(n_states):
            newbeta[s] = neg
        for s in range(n_states):
            a_s = alpha[t, s]
            for a in range(n_in):
                g = 0.5 * ((1.0 - 2.0 * out_tab[s, a, 0]) * chan[t, 0]
                           + (1.0 - 2.0 * out_tab[s, a, 1]) * chan[t, 1])
                b = beta[ns_tab[s, a]]
                if b > neg / 2:
                    newbeta[s] = _lae(newbeta[s], g + b)
                if a_s < neg / 2 or b < neg / 2:
                    continue
                full = a_s + g + b
                if out_tab[s, a, 0] == 0:
                    p0c1 = _lae(p0c1, full)
                else:
                    p1c1 = _lae(p1c1, full)
                if out_tab[s, a, 1] == 0:
                    p0c2 = _lae(p0c2, full)
                else:
                    p1c2 = _lae(p1c2, full)
                if a == 0:
                    p0a = _lae(p0a, full)
                else:
                    p1a = _lae(p1a, full)
        post[t, 0] = p0c1 - p1c1
        post[t, 1] = p0c2 - p1c2
        if t < n_info:
            info_llr[t] = p0a - p1a
        peak = neg
        for s in range(n_states):
            if newbeta[s] > peak:
                peak = newbeta[s]
        for s in range(n_states):
            if newbeta[s] > neg / 2:
                beta[s] = newbeta[s] - peak
            else:
                beta[s] = neg
    return info_llr, post


def cc_decode(chan_llr: np.ndarray, generators=(0o7, 0o5), info_len: int | None = None):
    """Soft-output decode of a terminated codeword.

    ``chan_llr`` is flat in encoder output order (pairs per step). Returns
    ``(info_llr, coded_posterior_llr)``, both clamp-free; the caller forms
    extrinsics by subtracting its own input.
    """
    chan = np.asarray(chan_llr, dtype=float)
    if chan.ndim != 1 or chan.size % 2 != 0:
        raise ValueError("coded LLR stream must be flat with even length")
    ns_tab, out_tab, m = _code_tables(generators)
    n_steps = chan.size // 2
    if info_len is None:
        info_len = n_steps - m
    if not (1 <= info_len <= n_steps - m):
        raise ValueError("info_len inconsistent with codeword length")
    info_llr, post = _cc_bcjr_kernel(chan.reshape(-1, 2), ns_tab, out_tab, info_len)
    return info_llr, post.reshape(-1)


@dataclass(frozen=True)
class TurboResult:
    """Decoded frame plus the per-iteration error trace."""

    info_bits: np.ndarray = field(repr=False)
    info_llr: np.ndarray = field(repr=False)
    error_trace: np.ndarray
    iterations: int

    def ber_trace(self) -> np.ndarray:
        return self.error_trace / self.info_bits.size


def truncated_whitened_taps(f_taps: np.ndarray, max_taps: int | None = None,
                            coverage: float = 0.999) -> np.ndarray:
    """Leading causal taps holding ``coverage`` of the energy, renormalized.

    Truncation defines the inner channel used both to synthesize and to
    equalize, keeping the Monte-Carlo model self-consistent.
    """
    f = np.asarray(f_taps, dtype=complex)
    energy = np.cumsum(np.abs(f) ** 2)
    energy /= energy[-1]
    keep = int(np.searchsorted(energy, coverage) + 1)
    if max_taps is not None:
        keep = min(keep, int(max_taps))
    keep = max(keep, 1)
    out = f[:keep].copy()
    return out / np.linalg.norm(out)


def simulate_coded_frame(tcfg: TurboConfig, taps: np.ndarray, n0: float,
                         seed: int, constellation: str = "bpsk",
                         es: float = 1.0):
    """One coded frame through the symbol-rate whitened channel.

    Returns ``(obs, info_bits)``: a forney-model observation carrying the
    full convolution tail, and the transmitted information bits.
    """
    taps = np.asarray(taps, dtype=complex)
    alphabet = constellation_alphabet(constellation, es)
    bps = int(round(np.log2(alphabet.size)))
    if tcfg.coded_len % bps:
        raise ValueError("codeword does not fill a whole number of symbols")
    n_sym = tcfg.coded_len // bps
    rng = np.random.default_rng([0xC0DE, seed])
    info = rng.integers(0, 2, tcfg.info_len, dtype=np.int64)
    coded = cc_encode(info, tcfg.generators)
    perm = make_interleaver(tcfg.coded_len, tcfg.interleaver_seed)
    x = map_bits(coded[perm], constellation, es)
    y = np.convolve(taps, x)
    if n0 > 0:
        w = rng.standard_normal(2 * y.size)
        y = y + np.sqrt(n0 / 2.0) * (w[0::2] + 1j * w[1::2])
    obs = Observation(model="forney", y=y, noise_psd=float(n0),
                      n_symbols=n_sym, n_tail=taps.size - 1)
    return obs, info


def turbo_equalize(obs: Observation, tcfg: TurboConfig,
                   spec: TrellisSpec | None = None,
                   fde_setting: FdeSetting | None = None,
                   constellation: str = "bpsk",
                   truth_info: np.ndarray | None = None) -> TurboResult:
    """Iterative exchange between the symbol equalizer and the outer decoder.

    The equalizer runs first each iteration. Both directions carry extrinsic
    information only; the final hard decision comes from the decoder's
    information-bit posterior. ``error_trace[i]`` counts info-bit errors
    after iteration i when ``truth_info`` is given (-1 otherwise).
    """
    alphabet = constellation_alphabet(constellation, 1.0)
    bps = int(round(np.log2(alphabet.size)))
    n_coded = tcfg.coded_len
    if obs.n_symbols * bps != n_coded:
        raise ValueError(f"observation holds {obs.n_symbols * bps} coded bits, "
                         f"config expects {n_coded}")
    if tcfg.equalizer == "fde_mmse":
        if fde_setting is None:
            raise ValueError("fde_mmse equalizer needs an FdeSetting")
    elif spec is None:
        raise ValueError("trellis equalizers need a TrellisSpec")

    perm = make_interleaver(n_coded, tcfg.interleaver_seed)
    prior_sym = np.zeros(n_coded)
    errors = np.full(tcfg.iterations, -1, dtype=np.int64)
    info_llr = np.zeros(tcfg.info_len)
    for it in range(tcfg.iterations):
        if tcfg.equalizer == "fde_mmse":
            # one-shot linear equalizer: no prior port, so its message is
            # the same every pass and the loop converges after iteration 1
            ext_sym = fde_mmse(obs, fde_setting, constellation).llr
        else:
            logp = symbol_log_priors(prior_sym, alphabet.size)
            if tcfg.equalizer == "bcjr_full":
                ext_sym = bcjr_full(spec, obs, priors=logp, extrinsic=True).llr
            else:
                ext_sym = mbcjr(spec, obs, priors=logp, M=tcfg.m_paths,
                                extrinsic=True).llr
        ext_code = np.empty(n_coded)
        ext_code[perm] = ext_sym
        info_llr, post_code = cc_decode(ext_code, tcfg.generators, tcfg.info_len)
        prior_sym = np.clip(post_code - ext_code, -LLR_CLAMP, LLR_CLAMP)[perm]
        if truth_info is not None:
            errors[it] = int(np.sum(hard_bits(info_llr) != truth_info))
    return TurboResult(info_bits=hard_bits(info_llr), info_llr=info_llr,
                       error_trace=errors, iterations=tcfg.iterations)


@dataclass(frozen=True)
class ThroughputReport:
    """Spectral-efficiency bookkeeping for one coded operating point."""

    code_rate: float
    bits_per_symbol: int
    tau: float
    beta: float
    cp_factor: float
    bits_per_s_per_hz: float


def coded_throughput_report(tcfg: TurboConfig, cfg: FtnConfig) -> ThroughputReport:
    """Nominal code rate x bits/symbol / (tau (1 + beta)), times CP retention.

    The prefix overhead n/(n + cp) applies only when the frequency-domain
    equalizer (and hence the prefix) is in use.
    """
    code_rate = 0.5
    cp_factor = cp_overhead(cfg.N, cfg.cp_len) if tcfg.equalizer == "fde_mmse" else 1.0
    beta = cfg.pulse.beta
    eff = code_rate * cfg.bits_per_symbol / (cfg.tau * (1.0 + beta)) * cp_factor
    return ThroughputReport(code_rate=code_rate, bits_per_symbol=cfg.bits_per_symbol,
                            tau=cfg.tau, beta=beta, cp_factor=cp_factor,
                            bits_per_s_per_hz=eff)
