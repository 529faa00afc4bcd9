r"""Gaussian-input capacity, water-filling, and finite-alphabet rates.

For a folded channel power spectrum V(xi) on xi in [-1/2, 1/2] and an input
PSD Sx(xi), the Gaussian-input rate in bits/s (T = 1) is

    C = (1 / (tau T)) * integral log2(1 + Sx(xi) V(xi) / N0) dxi

evaluated by midpoint quadrature on the folded grid. Water-filling maximizes
this under a mean-power constraint. Finite constellations are handled by the
Arnold-Loeliger forward-recursion estimator of I(X; Y) over the whitened ISI
trellis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import AllNullError
from .eq_time import (
    STATE_BUDGET,
    TrellisSpec,
    _branch_tables,
    _lae,
    _ramp_corrections,
)
from .model import constellation_alphabet
from .pulse import FoldedSpectrum, IsiChannel

__all__ = [
    "RatePoint",
    "constrained_capacity",
    "waterfill_input_psd",
    "info_rate_arnold_loeliger",
    "rate_at_ebn0",
]


@dataclass(frozen=True)
class RatePoint:
    """One point of a rate curve.

    ``rate`` is bits/s for the Gaussian methods (T = 1 normalization) and
    bits/symbol for the finite-alphabet Monte-Carlo estimate; ``rate_units``
    records which. Eb follows the bookkeeping Eb = Es / R.
    """

    tau: float
    beta: float
    EsN0_dB: float
    EbN0_dB: float
    rate: float
    method: str
    rate_units: str
    mc_std_err: float = 0.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if self.method not in ("gaussian", "waterfill", "arnold-loeliger"):
            raise ValueError(f"unknown method {self.method!r}")


def _ebn0_db(esn0_db: float, rate_bits_per_symbol: float) -> float:
    if rate_bits_per_symbol <= 0:
        return math.inf
    return esn0_db - 10.0 * math.log10(rate_bits_per_symbol)


def constrained_capacity(fs: FoldedSpectrum, sx, n0: float) -> float:
    """Gaussian-input rate in bits/s for input PSD ``sx`` on the fs grid."""
    if n0 <= 0:
        raise ValueError("N0 must be > 0")
    sx = np.broadcast_to(np.asarray(sx, dtype=float), fs.values.shape)
    if np.any(sx < 0):
        raise ValueError("input PSD must be >= 0")
    integrand = np.log2(1.0 + sx * fs.values / n0)
    return float(np.mean(integrand) / (fs.tau * fs.T))


def waterfill_input_psd(fs: FoldedSpectrum, total_power: float, n0: float,
                        rel_tol: float = 1e-8):
    """Water-filling PSD and its rate.

    Returns ``(sx, rate)`` where sx solves max C s.t. mean(sx) = total_power,
    i.e. sx = max(0, mu - N0/V) with the water level mu found by bisection
    until the power constraint binds within ``rel_tol`` relative.
    """
    if total_power <= 0:
        raise ValueError("total_power must be > 0")
    if n0 <= 0:
        raise ValueError("N0 must be > 0")
    v = fs.values
    if not np.any(v > 0):
        raise AllNullError("folded spectrum is identically zero")
    floor = np.full_like(v, np.inf)
    pos = v > 0
    floor[pos] = n0 / v[pos]

    def power(mu):
        return float(np.sum(np.maximum(0.0, mu - floor[pos])) / v.size)

    lo = float(np.min(floor[pos]))
    hi = lo + total_power * v.size / max(np.count_nonzero(pos), 1) + 1.0
    while power(hi) < total_power:
        hi *= 2.0
    mu = hi
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        if power(mu) < total_power:
            lo = mu
        else:
            hi = mu
        if abs(power(mu) - total_power) <= rel_tol * total_power:
            break
    sx = np.maximum(0.0, mu - floor)
    sx[~pos] = 0.0
    return sx, constrained_capacity(fs, sx, n0)


# ---------------------------------------------------------------------------
# Arnold-Loeliger forward recursion
# ---------------------------------------------------------------------------

@njit(cache=True)
def _al_forward(y, mean, corr, inv_n0):
    """log sum over all symbol paths of exp(sum_t -|y_t - m_t|^2 / N0)."""
    N = y.size
    S, A = mean.shape
    S_keep = S // A
    alpha = np.full(S, -np.inf)
    alpha[0] = 0.0
    nxt = np.empty(S)
    total = 0.0
    for t in range(N):
        nxt[:] = -np.inf
        y_t = y[t]
        corr_t = corr[t]
        for s in range(S):
            av = alpha[s]
            if av == -np.inf:
                continue
            base = (s % S_keep) * A
            for a in range(A):
                m = mean[s, a] - corr_t
                dr = y_t.real - m.real
                di = y_t.imag - m.imag
                v = av - (dr * dr + di * di) * inv_n0
                ns = base + a
                nxt[ns] = _lae(nxt[ns], v)
        peak = nxt[0]
        for s in range(1, S):
            if nxt[s] > peak:
                peak = nxt[s]
        total += peak
        for s in range(S):
            nxt[s] -= peak
        alpha, nxt = nxt, alpha
    acc = -np.inf
    for s in range(S):
        acc = _lae(acc, alpha[s])
    return total + acc


def info_rate_arnold_loeliger(ch: IsiChannel, constellation: str,
                              EsN0_dB: float, n_symbols: int, n_trials: int,
                              seed: int, beta: float = float("nan"),
                              coverage: float = 0.999,
                              max_taps: int | None = None,
                              budget: int = STATE_BUDGET) -> RatePoint:
    """Monte-Carlo I(X; Y) in bits/symbol over the whitened ISI model.

    Each trial draws an i.i.d. uniform symbol frame, simulates
    y = f * x + CN(0, N0), and evaluates (1/n)(log2 p(y|x) - log2 p(y))
    with p(y) from the forward recursion under uniform priors. Taps are
    truncated at the ``coverage`` fraction of energy (``max_taps`` caps the
    count; the trellis budget guards the state count).
    """
    if ch.f_taps is None:
        raise ValueError("channel has no whitened taps; run whiten_forney first")
    f = np.asarray(ch.f_taps, dtype=complex)
    e = np.cumsum(np.abs(f) ** 2)
    n_keep = int(np.searchsorted(e, coverage * e[-1]) + 1)
    if max_taps is not None:
        n_keep = min(n_keep, max_taps)
    f = f[:n_keep]
    alphabet = constellation_alphabet(constellation, Es=1.0)
    spec = TrellisSpec(taps=f, alphabet=alphabet, metric="euclidean",
                       budget=budget)
    _, mean = _branch_tables(spec)
    corr = _ramp_corrections(spec, n_symbols)
    n0 = 10.0 ** (-EsN0_dB / 10.0)
    inv_n0 = 1.0 / n0
    log_a = math.log(alphabet.size)

    rates = np.empty(n_trials)
    for k in range(n_trials):
        rng = np.random.default_rng([seed, k])
        x = alphabet[rng.integers(0, alphabet.size, n_symbols)]
        m = np.convolve(f, x)[:n_symbols]
        w = (rng.standard_normal(n_symbols)
             + 1j * rng.standard_normal(n_symbols))
        y = m + np.sqrt(n0 / 2.0) * w
        ll_cond = float(-np.sum(np.abs(y - m) ** 2) * inv_n0)
        if spec.memory == 0:
            d = y[:, None] - mean[0][None, :]
            g = -(np.abs(d) ** 2) * inv_n0
            from scipy.special import logsumexp
            ll_free = float(np.sum(logsumexp(g, axis=1)))
        else:
            ll_free = float(_al_forward(y, mean, corr, inv_n0))
        ll_free -= n_symbols * log_a
        rates[k] = (ll_cond - ll_free) / (n_symbols * math.log(2.0))
    rate = float(np.mean(rates))
    err = float(np.std(rates, ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else 0.0
    rate = max(rate, 0.0)
    return RatePoint(tau=ch.tau, beta=beta, EsN0_dB=EsN0_dB,
                     EbN0_dB=_ebn0_db(EsN0_dB, rate), rate=rate,
                     method="arnold-loeliger", rate_units="bits/symbol",
                     mc_std_err=err)


def rate_at_ebn0(estimate, ebn0_db: float, r0: float = 1.0,
                 n_iter: int = 6) -> RatePoint:
    """Fixed-point solve for the rate at a given Eb/N0.

    ``estimate(esn0_db)`` must return a RatePoint; the loop iterates
    Es/N0 = Eb/N0 * R until R stabilizes (monotone map, fast convergence).
    """
    r = r0
    pt = None
    for _ in range(n_iter):
        esn0 = ebn0_db + 10.0 * math.log10(max(r, 1e-6))
        pt = estimate(esn0)
        if abs(pt.rate - r) < 1e-4:
            r = pt.rate
            break
        r = pt.rate
    return RatePoint(tau=pt.tau, beta=pt.beta, EsN0_dB=pt.EsN0_dB,
                     EbN0_dB=ebn0_db, rate=r, method=pt.method,
                     rate_units=pt.rate_units, mc_std_err=pt.mc_std_err)
