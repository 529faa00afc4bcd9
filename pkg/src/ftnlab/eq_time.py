r"""Time-domain trellis equalizers: Viterbi MLSE, full BCJR, and M-BCJR.

The trellis state at time t encodes the last L symbol indices with the most
recent one in the least significant base-|A| digit. Frames start from the
all-zero state; pre-frame symbol slots are silent, which the branch metrics
absorb as per-step ramp corrections rather than extra states. Forney-style
(white noise) observations may carry tail samples past the last symbol; those
add state-dependent terms without consuming trellis steps.

Two branch metrics are supported:

* ``euclidean`` for white-noise models (Forney, orthogonal basis):
  :math:`-(1/N_0) |y_t - \sum_i f_i x_{t-i}|^2`
* ``ungerboeck`` for matched-filter observations with colored noise:
  :math:`(1/N_0) (2 \Re\{x_t^* y_t\} - g_0 |x_t|^2
  - 2 \Re\{x_t^* \sum_{i \ge 1} g_i x_{t-i}\})`

Both are exact sequence log-likelihoods (up to symbol-independent constants)
when the trellis taps cover the channel support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import StateExplosionError
from .model import Observation, constellation_alphabet

__all__ = [
    "TrellisSpec",
    "SoftInfo",
    "trellis_from_observation",
    "uniform_log_priors",
    "symbol_log_priors",
    "bit_llr_from_symbol_log_priors",
    "viterbi_mlse",
    "bcjr_full",
    "mbcjr",
    "hard_bits",
]

LLR_CLAMP = 50.0
STATE_BUDGET = 1 << 20


@dataclass(frozen=True)
class TrellisSpec:
    """ISI trellis description.

    ``taps[0]`` multiplies the current symbol; memory is ``len(taps) - 1``.
    ``center > 0`` marks taps built from a two-sided response (orthogonal
    basis) whose first ``center`` lags are anticausal: the equalizer then
    consumes ``2*center`` extra tail observations.
    """

    taps: np.ndarray = field(repr=False)
    alphabet: np.ndarray = field(repr=False)
    metric: str
    center: int = 0
    budget: int = STATE_BUDGET

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex)
        alphabet = np.asarray(self.alphabet, dtype=complex)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "alphabet", alphabet)
        if taps.size == 0 or taps[0] == 0:
            raise ValueError("taps[0] must be nonzero")
        if self.metric not in ("euclidean", "ungerboeck"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.state_count > self.budget:
            raise StateExplosionError(
                f"{self.alphabet.size}^{self.memory} = {self.state_count} "
                f"states exceeds budget {self.budget}"
            )
        taps.flags.writeable = False
        alphabet.flags.writeable = False

    @property
    def memory(self) -> int:
        return self.taps.size - 1

    @property
    def state_count(self) -> int:
        return self.alphabet.size ** self.memory

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.alphabet.size)))


@dataclass(frozen=True)
class SoftInfo:
    """Per-bit LLRs, log P(b=0)/P(b=1), clamped to +-LLR_CLAMP."""

    llr: np.ndarray = field(repr=False)
    extrinsic: bool = True

    def __post_init__(self):
        if not np.all(np.isfinite(self.llr)):
            raise ValueError("LLRs must be finite")
        self.llr.flags.writeable = False


def _coverage_cut(mag: np.ndarray, coverage: float) -> int:
    """Smallest prefix length whose mass reaches coverage * total."""
    c = np.cumsum(mag)
    total = c[-1]
    if total == 0:
        return 1
    return int(np.searchsorted(c, coverage * total) + 1)


def trellis_from_observation(obs: Observation, constellation: str, Es: float = 1.0,
                             coverage: float = 0.999, max_taps: int | None = None,
                             budget: int = STATE_BUDGET) -> TrellisSpec:
    """Build the matching trellis for an observation model.

    Forney taps are truncated to the given fraction of tap energy,
    truncated-Ungerboeck taps to 99% of the causal magnitude sum, and
    orthogonal-basis taps to the energy coverage of the two-sided response.
    ``max_taps`` caps the tap count after coverage truncation.
    """
    alphabet = constellation_alphabet(constellation, Es)
    if obs.model == "forney":
        f = np.asarray(obs.channel.f_taps, dtype=complex)
        n = _coverage_cut(np.abs(f) ** 2, coverage)
        taps = f[: n if max_taps is None else min(n, max_taps)]
        return TrellisSpec(taps=taps, alphabet=alphabet, metric="euclidean",
                           budget=budget)
    if obs.model == "ungerboeck":
        g = np.asarray(obs.channel.g_causal, dtype=complex)
        n = _coverage_cut(np.abs(g), max(coverage, 0.99))
        taps = g[: n if max_taps is None else min(n, max_taps)]
        return TrellisSpec(taps=taps, alphabet=alphabet, metric="ungerboeck",
                           budget=budget)
    if obs.model == "orthobasis":
        q = np.asarray(obs.taps, dtype=complex)
        off = obs.offset
        # symmetric window [-k, k] around the main lag by energy coverage
        e = np.abs(q) ** 2
        rings = np.array([e[off]] + [e[off + k] + e[off - k]
                                     for k in range(1, off + 1)])
        k = _coverage_cut(rings, coverage) - 1
        if max_taps is not None:
            k = min(k, (max_taps - 1) // 2)
        taps = q[off - k: off + k + 1]
        return TrellisSpec(taps=taps, alphabet=alphabet, metric="euclidean",
                           center=k, budget=budget)
    raise ValueError(f"no trellis model for observation {obs.model!r}")


def uniform_log_priors(n_symbols: int, alphabet_size: int) -> np.ndarray:
    return np.zeros((n_symbols, alphabet_size))


def _bit_table(alphabet_size: int) -> np.ndarray:
    """bit_table[j, b] = value of bit b in symbol index j (LSB-first)."""
    nb = int(round(math.log2(alphabet_size)))
    j = np.arange(alphabet_size)
    return np.stack([(j >> b) & 1 for b in range(nb)], axis=1)


def symbol_log_priors(bit_llr: np.ndarray, alphabet_size: int) -> np.ndarray:
    """Per-symbol log priors from independent per-bit LLRs.

    ``bit_llr`` is flat, LSB-first within each symbol, LLR = log P(0)/P(1).
    """
    nb = int(round(math.log2(alphabet_size)))
    llr = np.asarray(bit_llr, dtype=float).reshape(-1, nb)
    # log P(b) = -log1p(exp(-(1-2b) * llr)), stable both directions
    table = _bit_table(alphabet_size)  # [A, nb]
    sign = 1.0 - 2.0 * table
    z = llr[:, None, :] * sign[None, :, :]
    return -np.logaddexp(0.0, -z).sum(axis=2)


def bit_llr_from_symbol_log_priors(logp: np.ndarray) -> np.ndarray:
    """Marginal per-bit LLRs of a per-symbol log-prior table (flat output)."""
    n, A = logp.shape
    table = _bit_table(A)
    nb = table.shape[1]
    out = np.empty((n, nb))
    from scipy.special import logsumexp
    for b in range(nb):
        out[:, b] = (logsumexp(logp[:, table[:, b] == 0], axis=1)
                     - logsumexp(logp[:, table[:, b] == 1], axis=1))
    return out.reshape(-1)


def _branch_tables(spec: TrellisSpec):
    """Per-state ISI sums and per-(state, symbol) means.

    Returns (isi[S], mean[S, A]) where isi[s] = sum_{i>=1} taps[i] x_{t-i}(s)
    and mean[s, a] = taps[0] a + isi[s].
    """
    A = spec.alphabet.size
    L = spec.memory
    S = spec.state_count
    isi = np.zeros(S, dtype=complex)
    if L:
        digits = np.arange(S)
        for i in range(1, L + 1):
            idx = (digits // A ** (i - 1)) % A
            isi += spec.taps[i] * spec.alphabet[idx]
    mean = spec.taps[0] * spec.alphabet[None, :] + isi[:, None]
    return isi, mean


def _ramp_corrections(spec: TrellisSpec, n_symbols: int) -> np.ndarray:
    """corr[t] = sum_{i>t} taps[i] * alphabet[0]: silent pre-frame slots."""
    L = spec.memory
    corr = np.zeros(n_symbols, dtype=complex)
    a0 = spec.alphabet[0]
    for t in range(min(L, n_symbols)):
        corr[t] = np.sum(spec.taps[t + 1:]) * a0
    return corr


def _tail_tables(spec: TrellisSpec, n_tail: int, n_symbols: int) -> np.ndarray:
    """tail[j, s] = expected tail observation j from frame-end state s.

    State digits at depth >= n_symbols never held a transmitted symbol
    (frames shorter than the memory start from the silent state), so
    those slots contribute nothing to the tail.
    """
    A = spec.alphabet.size
    L = spec.memory
    S = spec.state_count
    out = np.zeros((n_tail, S), dtype=complex)
    digits = np.arange(S)
    for j in range(n_tail):
        for d in range(min(L - j, n_symbols)):
            i = d + j + 1
            if i > L:
                break
            idx = (digits // A ** d) % A
            out[j] += spec.taps[i] * spec.alphabet[idx]
    return out


def _aligned_observation(spec: TrellisSpec, obs: Observation):
    """(y, n_tail) as the trellis consumes them."""
    n = obs.n_symbols
    if spec.metric == "ungerboeck":
        if obs.model != "ungerboeck":
            raise ValueError("ungerboeck metric needs an ungerboeck observation")
        return np.asarray(obs.y[:n], dtype=complex), 0
    if obs.model == "forney":
        keep = n + min(obs.n_tail, spec.memory)
        return np.asarray(obs.y[:keep], dtype=complex), keep - n
    if obs.model == "orthobasis":
        k = spec.center
        lo = obs.offset - k
        y = np.asarray(obs.y[lo: lo + n + 2 * k], dtype=complex)
        return y, 2 * k
    raise ValueError(f"euclidean metric cannot read {obs.model!r} observations")


def _check_priors(priors, n, A):
    if priors is None:
        return uniform_log_priors(n, A)
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (n, A):
        raise ValueError(f"priors must have shape ({n}, {A})")
    return priors


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------
# Branch metric, both metrics, ramp-corrected:
#   euclidean:   -(1/N0) |y_t - (mean[s,a] - corr_t)|^2
#   ungerboeck:  (1/N0) (2 Re{a* (y_t - (isi[s] - corr_t))} - g0 |a|^2)

NEG_INF = -np.inf


@njit(cache=True, inline="always")
def _lae(a, b):
    # log(exp(a) + exp(b)) without overflow
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


@njit(cache=True, inline="always")
def _branch(euclid, y_t, s, a, mean, isi, alph, aa2, g0, corr_t, inv_n0):
    if euclid:
        m = mean[s, a] - corr_t
        dr = y_t.real - m.real
        di = y_t.imag - m.imag
        return -(dr * dr + di * di) * inv_n0
    e = y_t - (isi[s] - corr_t)
    ac = alph[a]
    return (2.0 * (ac.real * e.real + ac.imag * e.imag) - g0 * aa2[a]) * inv_n0


@njit(cache=True)
def _tail_scores(y, tail, inv_n0, n):
    S = tail.shape[1]
    out = np.zeros(S)
    for j in range(tail.shape[0]):
        y_t = y[n + j]
        for s in range(S):
            dr = y_t.real - tail[j, s].real
            di = y_t.imag - tail[j, s].imag
            out[s] += -(dr * dr + di * di) * inv_n0
    return out


@njit(cache=True)
def _kernel_viterbi(y, mean, isi, alph, aa2, g0, corr, tail, inv_n0, logp,
                    euclid):
    N = logp.shape[0]
    A = alph.size
    S = isi.size
    S_keep = S // A
    alpha = np.full(S, NEG_INF)
    alpha[0] = 0.0
    nxt = np.empty(S)
    bp = np.zeros((N, S), dtype=np.int32)
    for t in range(N):
        nxt[:] = NEG_INF
        y_t = y[t]
        corr_t = corr[t]
        for s in range(S):
            av = alpha[s]
            if av == NEG_INF:
                continue
            base = (s % S_keep) * A
            for a in range(A):
                g = _branch(euclid, y_t, s, a, mean, isi, alph, aa2, g0,
                            corr_t, inv_n0)
                v = av + g + logp[t, a]
                ns = base + a
                if v > nxt[ns]:
                    nxt[ns] = v
                    bp[t, ns] = s
        alpha, nxt = nxt, alpha
    if tail.shape[0]:
        alpha = alpha + _tail_scores(y, tail, inv_n0, N)
    best = 0
    for s in range(1, S):
        if alpha[s] > alpha[best]:
            best = s
    path = np.empty(N, dtype=np.int64)
    s = best
    for t in range(N - 1, -1, -1):
        path[t] = s % A
        s = bp[t, s]
    return path


@njit(cache=True)
def _kernel_bcjr(y, mean, isi, alph, aa2, g0, corr, tail, inv_n0, logp,
                 euclid):
    N = logp.shape[0]
    A = alph.size
    S = isi.size
    S_keep = S // A
    alpha = np.full((N + 1, S), NEG_INF)
    alpha[0, 0] = 0.0
    for t in range(N):
        y_t = y[t]
        corr_t = corr[t]
        for s in range(S):
            av = alpha[t, s]
            if av == NEG_INF:
                continue
            base = (s % S_keep) * A
            for a in range(A):
                g = _branch(euclid, y_t, s, a, mean, isi, alph, aa2, g0,
                            corr_t, inv_n0)
                v = av + g + logp[t, a]
                ns = base + a
                alpha[t + 1, ns] = _lae(alpha[t + 1, ns], v)
    if tail.shape[0]:
        beta = _tail_scores(y, tail, inv_n0, N)
    else:
        beta = np.zeros(S)
    post = np.full((N, A), NEG_INF)
    newbeta = np.empty(S)
    for t in range(N - 1, -1, -1):
        for ns in range(S):
            v = alpha[t + 1, ns] + beta[ns]
            if v > NEG_INF:
                a = ns % A
                post[t, a] = _lae(post[t, a], v)
        y_t = y[t]
        corr_t = corr[t]
        newbeta[:] = NEG_INF
        for s in range(S):
            base = (s % S_keep) * A
            acc = NEG_INF
            for a in range(A):
                g = _branch(euclid, y_t, s, a, mean, isi, alph, aa2, g0,
                            corr_t, inv_n0)
                acc = _lae(acc, g + logp[t, a] + beta[base + a])
            newbeta[s] = acc
        beta, newbeta = newbeta, beta
    return post


@njit(cache=True)
def _lookahead_bonus(s0, t0, depth, y, mean, isi, alph, aa2, g0, corr, inv_n0,
                     logp, euclid):
    # best accumulated metric over all depth-step extensions from state s0
    N = logp.shape[0]
    A = alph.size
    S = isi.size
    S_keep = S // A
    d_eff = depth
    if t0 + d_eff > N:
        d_eff = N - t0
    if d_eff <= 0:
        return 0.0
    n_seq = A ** d_eff
    best = NEG_INF
    for seq in range(n_seq):
        s = s0
        acc = 0.0
        rem = seq
        for j in range(d_eff):
            a = rem % A
            rem //= A
            t = t0 + j
            acc += _branch(euclid, y[t], s, a, mean, isi, alph, aa2, g0,
                           corr[t], inv_n0) + logp[t, a]
            s = (s % S_keep) * A + a
        if acc > best:
            best = acc
    return best


@njit(cache=True)
def _kernel_mbcjr(y, mean, isi, alph, aa2, g0, corr, tail, inv_n0, logp,
                  euclid, M, depth):
    N = logp.shape[0]
    A = alph.size
    S = isi.size
    S_keep = S // A
    act = np.zeros((N + 1, M), dtype=np.int64)
    act_n = np.zeros(N + 1, dtype=np.int64)
    aval = np.full((N + 1, M), NEG_INF)
    act_n[0] = 1
    aval[0, 0] = 0.0

    val = np.full(S, NEG_INF)
    touched = np.empty(M * A, dtype=np.int64)
    for t in range(N):
        y_t = y[t]
        corr_t = corr[t]
        ntouch = 0
        for i in range(act_n[t]):
            s = act[t, i]
            av = aval[t, i]
            base = (s % S_keep) * A
            for a in range(A):
                g = _branch(euclid, y_t, s, a, mean, isi, alph, aa2, g0,
                            corr_t, inv_n0)
                v = av + g + logp[t, a]
                ns = base + a
                if val[ns] == NEG_INF:
                    touched[ntouch] = ns
                    ntouch += 1
                    val[ns] = v
                else:
                    val[ns] = _lae(val[ns], v)
        score = np.empty(ntouch)
        for i in range(ntouch):
            ns = touched[i]
            score[i] = val[ns]
            if depth > 0:
                score[i] += _lookahead_bonus(ns, t + 1, depth, y, mean, isi,
                                             alph, aa2, g0, corr, inv_n0,
                                             logp, euclid)
        order = np.argsort(-score)
        keep = M if ntouch > M else ntouch
        act_n[t + 1] = keep
        for i in range(keep):
            ns = touched[order[i]]
            act[t + 1, i] = ns
            aval[t + 1, i] = val[ns]
        for i in range(ntouch):
            val[touched[i]] = NEG_INF

    # backward over the surviving lattice
    posmap = np.full(S, -1, dtype=np.int64)
    beta = np.full(M, NEG_INF)
    if tail.shape[0]:
        ts = _tail_scores(y, tail, inv_n0, N)
        for i in range(act_n[N]):
            beta[i] = ts[act[N, i]]
    else:
        for i in range(act_n[N]):
            beta[i] = 0.0
    post = np.full((N, A), NEG_INF)
    newbeta = np.empty(M)
    for t in range(N - 1, -1, -1):
        for i in range(act_n[t + 1]):
            ns = act[t + 1, i]
            posmap[ns] = i
            v = aval[t + 1, i] + beta[i]
            if v > NEG_INF:
                a = ns % A
                post[t, a] = _lae(post[t, a], v)
        y_t = y[t]
        corr_t = corr[t]
        for i in range(act_n[t]):
            s = act[t, i]
            base = (s % S_keep) * A
            acc = NEG_INF
            for a in range(A):
                ns = base + a
                j = posmap[ns]
                if j >= 0 and beta[j] > NEG_INF:
                    g = _branch(euclid, y_t, s, a, mean, isi, alph, aa2, g0,
                                corr_t, inv_n0)
                    acc = _lae(acc, g + logp[t, a] + beta[j])
            newbeta[i] = acc
        for i in range(act_n[t + 1]):
            posmap[act[t + 1, i]] = -1
        beta, newbeta = newbeta, beta
    return post


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _prepare(spec: TrellisSpec, obs: Observation, priors):
    if obs.noise_psd <= 0:
        raise ValueError("equalization needs noise_psd > 0 (use a small "
                         "placeholder for noiseless checks)")
    y, n_tail = _aligned_observation(spec, obs)
    n = obs.n_symbols
    A = spec.alphabet.size
    logp = _check_priors(priors, n, A)
    isi, mean = _branch_tables(spec)
    corr = _ramp_corrections(spec, n)
    tail = _tail_tables(spec, n_tail, n)
    aa2 = np.abs(spec.alphabet) ** 2
    g0 = float(np.real(spec.taps[0]))
    inv_n0 = 1.0 / obs.noise_psd
    euclid = spec.metric == "euclidean"
    return (y, mean, isi, spec.alphabet.astype(complex), aa2, g0, corr, tail,
            inv_n0, logp, euclid)


def _scalar_posteriors(args):
    """L = 0 degenerate case: per-symbol scalar metrics, no state."""
    (y, mean, isi, alph, aa2, g0, corr, tail, inv_n0, logp, euclid) = args
    n = logp.shape[0]
    y_t = y[:n, None]
    if euclid:
        gam = -np.abs(y_t - mean[0][None, :]) ** 2 * inv_n0
    else:
        gam = (2.0 * np.real(np.conj(alph)[None, :] * y_t)
               - g0 * aa2[None, :]) * inv_n0
    return gam + logp


def viterbi_mlse(spec: TrellisSpec, obs: Observation, priors=None) -> np.ndarray:
    """MAP sequence decisions; exact MLSE for white-noise metrics."""
    args = _prepare(spec, obs, priors)
    if spec.memory == 0:
        post = _scalar_posteriors(args)
        idx = np.argmax(post, axis=1)
    else:
        idx = _kernel_viterbi(*args)
    return spec.alphabet[idx]


def _soft_from_posteriors(spec, post, logp, extrinsic):
    """Bit LLRs (flat, LSB-first) from per-symbol log posteriors."""
    from scipy.special import logsumexp
    table = _bit_table(spec.alphabet.size)
    nb = table.shape[1]
    n = post.shape[0]
    llr = np.empty((n, nb))
    for b in range(nb):
        num = logsumexp(post[:, table[:, b] == 0], axis=1)
        den = logsumexp(post[:, table[:, b] == 1], axis=1)
        llr[:, b] = num - den
    llr = np.clip(np.nan_to_num(llr, nan=0.0, posinf=LLR_CLAMP,
                                neginf=-LLR_CLAMP), -LLR_CLAMP, LLR_CLAMP)
    if extrinsic:
        prior_llr = bit_llr_from_symbol_log_priors(logp).reshape(n, nb)
        llr = llr - prior_llr
    return SoftInfo(llr=np.clip(llr, -LLR_CLAMP, LLR_CLAMP).reshape(-1),
                    extrinsic=extrinsic)


def bcjr_full(spec: TrellisSpec, obs: Observation, priors=None,
              extrinsic: bool = True) -> SoftInfo:
    """Exact posterior bit LLRs (minus priors when extrinsic)."""
    args = _prepare(spec, obs, priors)
    logp = args[9]
    if spec.memory == 0:
        post = _scalar_posteriors(args)
    else:
        post = _kernel_bcjr(*args)
    return _soft_from_posteriors(spec, post, logp, extrinsic)


def mbcjr(spec: TrellisSpec, obs: Observation, priors=None, M: int = 16,
          lookahead_D: int = 2, extrinsic: bool = True) -> SoftInfo:
    """Reduced-search BCJR keeping the M best states per depth.

    Forney/orthobasis selection ranks states by accumulated path metric;
    the Ungerboeck metric adds a best-extension look-ahead bonus over
    ``lookahead_D`` future steps (only meaningful there, where per-branch
    metrics can be negative early and paid back later).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if lookahead_D < 0:
        raise ValueError("lookahead_D must be >= 0")
    if M > spec.state_count:
        raise StateExplosionError(
            f"M = {M} exceeds state count {spec.state_count}")
    args = _prepare(spec, obs, priors)
    logp = args[9]
    if spec.memory == 0:
        post = _scalar_posteriors(args)
    else:
        depth = lookahead_D if spec.metric == "ungerboeck" else 0
        post = _kernel_mbcjr(*args, M, depth)
    return _soft_from_posteriors(spec, post, logp, extrinsic)


def hard_bits(llr_or_soft) -> np.ndarray:
    """LLR convention: positive means bit 0."""
    llr = llr_or_soft.llr if isinstance(llr_or_soft, SoftInfo) else llr_or_soft
    return (np.asarray(llr) < 0).astype(np.int64)
