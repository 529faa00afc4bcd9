r"""Frame generation, AWGN, and receiver observation models.

A frame of N symbols is transmitted as :math:`s(t) = \sum_n x_n h(t - n\tau T)`
with an optional symbol-domain cyclic prefix. Receivers observe this through
one of four equivalent lenses:

* ``ungerboeck``: matched filter + symbol-rate sampling (colored noise, taps g)
* ``forney``: whitened matched filter (white noise, minimum-phase taps f)
* ``orthobasis``: projection on a wider-band orthonormal pulse family
  (white noise, generic cross-correlation taps)
* ``freqdomain``: matched-filter samples of a CP frame, CP removed, for
  circulant frequency-domain processing
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import CpTooShortError
from .pulse import IsiChannel, PulseShape, eval_pulse, isi_taps, make_pulse, whiten_forney

__all__ = [
    "FtnConfig",
    "SymbolFrame",
    "Observation",
    "constellation_alphabet",
    "map_bits",
    "random_frame",
    "modulate",
    "awgn",
    "mf_frontend",
    "fd_frontend",
    "effective_half_length",
    "whiten_forney",
    "forney_frontend",
    "ortho_basis_frontend",
]


@dataclass(frozen=True)
class FtnConfig:
    """Transmit-side description of one FTN link."""

    pulse: PulseShape
    tau: float
    N: int
    constellation: str = "bpsk"
    Es: float = 1.0
    cp_len: int = 0

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (0 <= self.cp_len < self.N):
            raise ValueError("cp_len must satisfy 0 <= cp_len < N")
        if self.constellation.lower() not in ("bpsk", "qpsk"):
            raise ValueError(f"unknown constellation {self.constellation!r}")
        step = self.tau * self.pulse.samples_per_T
        if abs(step - round(step)) > 1e-9:
            raise ValueError(
                f"tau * samples_per_T = {step:.6g} is not an integer; "
                "adjust samples_per_T so the symbol spacing lands on the "
                "oversampling grid (e.g. samples_per_T=20 for tau=0.85)"
            )
        object.__setattr__(self, "constellation", self.constellation.lower())

    @property
    def step(self) -> int:
        """Oversampling ticks between adjacent symbol centers."""
        return int(round(self.tau * self.pulse.samples_per_T))

    @property
    def bits_per_symbol(self) -> int:
        return 1 if self.constellation == "bpsk" else 2


@dataclass(frozen=True)
class SymbolFrame:
    constellation: str
    symbols: np.ndarray = field(repr=False)
    cp_len: int = 0
    bits: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.symbols.flags.writeable = False
        if self.bits is not None:
            self.bits.flags.writeable = False


@dataclass(frozen=True)
class Observation:
    """Receiver-side samples under a declared observation model.

    ``y`` has length N for ungerboeck/forney/freqdomain. ``n_tail`` extra
    trailing samples may be attached for forney observations (outputs that
    depend only on in-frame symbols through the channel tail); equalizers
    treat them as input-free trellis steps. For orthobasis, ``y`` covers
    basis indices ``-offset .. N-1+offset`` and ``taps`` holds the two-sided
    effective cross-correlation q with ``taps[offset + m] = q[m]``.
    """

    model: str
    y: np.ndarray = field(repr=False)
    noise_psd: float = 0.0
    channel: IsiChannel | None = None
    n_symbols: int = 0
    n_tail: int = 0
    taps: np.ndarray | None = field(default=None, repr=False)
    offset: int = 0

    def __post_init__(self):
        self.y.flags.writeable = False
        if self.taps is not None:
            self.taps.flags.writeable = False


_BPSK = np.array([1.0 + 0.0j, -1.0 + 0.0j])
# Gray-mapped QPSK, index = b0 + 2*b1, bit 0 -> +1 on its rail
_QPSK = np.array([(1 + 1j), (-1 + 1j), (1 - 1j), (-1 - 1j)]) / np.sqrt(2.0)


def constellation_alphabet(name: str, Es: float = 1.0) -> np.ndarray:
    name = name.lower()
    if name == "bpsk":
        return _BPSK * np.sqrt(Es)
    if name == "qpsk":
        return _QPSK * np.sqrt(Es)
    raise ValueError(f"unknown constellation {name!r}")


def map_bits(bits: np.ndarray, name: str, Es: float = 1.0) -> np.ndarray:
    """Bits (row-major per symbol) to constellation points."""
    bits = np.asarray(bits, dtype=np.int64)
    alph = constellation_alphabet(name, Es)
    if name.lower() == "bpsk":
        return alph[bits]
    if bits.size % 2:
        raise ValueError("qpsk needs an even number of bits")
    pairs = bits.reshape(-1, 2)
    return alph[pairs[:, 0] + 2 * pairs[:, 1]]


def random_frame(cfg: FtnConfig, seed: int) -> SymbolFrame:
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=cfg.N * cfg.bits_per_symbol)
    symbols = map_bits(bits, cfg.constellation, cfg.Es)
    return SymbolFrame(constellation=cfg.constellation, symbols=symbols,
                       cp_len=cfg.cp_len, bits=bits)


def _with_cp(frame: SymbolFrame) -> np.ndarray:
    x = frame.symbols
    if frame.cp_len:
        return np.concatenate([x[-frame.cp_len:], x])
    return x


def modulate(cfg: FtnConfig, frame: SymbolFrame) -> np.ndarray:
    """Oversampled baseband frame signal.

    The cyclic prefix (when configured) is prepended in the symbol domain
    before shaping. Sample 0 sits at t = -(cp_len * tau*T) - span*T, i.e. the
    window is padded with the pulse half-width of silence on both sides.
    """
    if frame.symbols.size != cfg.N:
        raise ValueError("frame length does not match cfg.N")
    x = _with_cp(frame)
    step = cfg.step
    h = cfg.pulse.samples
    n_sig = (x.size - 1) * step + h.size
    up = np.zeros(n_sig - h.size + 1, dtype=complex)
    up[::step] = x
    return fftconvolve(up, h.astype(complex))


def awgn(signal: np.ndarray, n0: float, seed: int, samples_per_T: int,
         T: float = 1.0) -> np.ndarray:
    """Add circularly symmetric complex Gaussian noise of one-sided PSD N0.

    Per-sample variance is N0 * samples_per_T / T so the continuous-time
    density is N0 regardless of the oversampling factor.
    """
    if n0 < 0:
        raise ValueError("N0 must be >= 0")
    if n0 == 0.0:
        return np.asarray(signal, dtype=complex).copy()
    rng = np.random.default_rng(seed)
    var = n0 * samples_per_T / T
    noise = rng.standard_normal((signal.size, 2)) @ np.array([1.0, 1.0j])
    return signal + np.sqrt(var / 2.0) * noise


def mf_frontend(cfg: FtnConfig, signal: np.ndarray, n0: float = 0.0,
                ch: IsiChannel | None = None) -> Observation:
    """Matched filter + symbol-rate sampling (Ungerboeck observation).

    Correlates the received signal with h(. - n tau T) for every transmitted
    symbol slot and discards the cyclic-prefix outputs. Noise in the output
    is colored with covariance N0 * Toeplitz(g).
    """
    if ch is None:
        ch = isi_taps(cfg.pulse, cfg.tau)
    h = cfg.pulse.samples
    dt = cfg.pulse.dt
    c = fftconvolve(np.asarray(signal, dtype=complex), h[::-1].astype(complex))
    n_half = cfg.pulse.span * cfg.pulse.samples_per_T
    idx = (np.arange(cfg.N) + cfg.cp_len) * cfg.step + 2 * n_half
    y = c[idx] * dt
    return Observation(model="ungerboeck", y=y, noise_psd=float(n0), channel=ch,
                       n_symbols=cfg.N)


def effective_half_length(ch: IsiChannel, tol: float = 1e-3) -> int:
    """Largest lag k with |g[k]| > tol (0 if the channel is a pure gain)."""
    mags = np.abs(ch.g_taps[ch.k_max:])
    above = np.nonzero(mags > tol)[0]
    return int(above[-1]) if above.size else 0


def fd_frontend(cfg: FtnConfig, signal: np.ndarray, n0: float = 0.0,
                ch: IsiChannel | None = None, allow_short: bool = False) -> Observation:
    """Matched-filter observation of a CP frame, exactly circulant on the payload.

    The Gram taps are two-sided, so the sampling window is shifted into the
    cyclic prefix by the effective half-length K and the output rolled back;
    the result equals Circulant(g) x when cp_len >= 2K. Shorter prefixes
    raise CpTooShortError unless allow_short, which warns and proceeds with
    the best available shift.
    """
    if ch is None:
        ch = isi_taps(cfg.pulse, cfg.tau)
    k_eff = effective_half_length(ch)
    if cfg.cp_len < 2 * k_eff:
        msg = (f"cp_len={cfg.cp_len} < 2*K_eff={2 * k_eff}: payload is not "
               "circulant to tap-truncation accuracy")
        if not allow_short:
            raise CpTooShortError(msg)
        warnings.warn(msg, stacklevel=2)
    shift = min(k_eff, cfg.cp_len)
    h = cfg.pulse.samples
    dt = cfg.pulse.dt
    c = fftconvolve(np.asarray(signal, dtype=complex), h[::-1].astype(complex))
    n_half = cfg.pulse.span * cfg.pulse.samples_per_T
    slots = np.arange(-shift, cfg.N - shift)
    idx = (slots + cfg.cp_len) * cfg.step + 2 * n_half
    y = np.roll(c[idx] * dt, -shift)
    return Observation(model="freqdomain", y=y, noise_psd=float(n0), channel=ch,
                       n_symbols=cfg.N)


def forney_frontend(obs: Observation, eps: float = 0.0, n_tail: int = 0) -> Observation:
    """Whiten an Ungerboeck observation into the Forney model.

    Applies the anticausal stable inverse 1/conj(F(omega)) of the
    minimum-phase factor via a zero-padded FFT (circular edge effects decay
    with the padding; frames produced by :func:`mf_frontend` are finite, so
    the first/last few samples carry small whitening transients).
    """
    if obs.model != "ungerboeck":
        raise ValueError("forney_frontend expects an ungerboeck observation")
    ch = obs.channel
    if ch.f_taps is None:
        ch = whiten_forney(ch, eps=eps)
    f = np.asarray(ch.f_taps, dtype=complex)
    n = obs.y.size
    n_pad = 1 << int(np.ceil(np.log2(n + 8 * f.size)))
    F = np.fft.fft(f, n_pad)
    Y = np.fft.fft(obs.y, n_pad)
    y_w = np.fft.ifft(Y / np.conj(F))
    keep = n + n_tail
    y = np.concatenate([y_w[:n], y_w[n: keep]]) if n_tail else y_w[:n]
    return Observation(model="forney", y=y, noise_psd=obs.noise_psd, channel=ch,
                       n_symbols=obs.n_symbols, n_tail=n_tail)


def _basis_pulse(cfg: FtnConfig, beta_b: float, span_b: int = 24) -> PulseShape:
    return make_pulse("rrc", beta_b, T=cfg.tau * cfg.pulse.T,
                      samples_per_T=cfg.step, span=span_b)


def ortho_basis_frontend(cfg: FtnConfig, signal: np.ndarray, n0: float = 0.0,
                         beta_b: float = 0.25, span_b: int = 24) -> Observation:
    """Project the received signal on a tau*T-orthogonal RRC basis.

    The basis pulse has symbol time tau*T and roll-off beta_b, so its shifts
    by multiples of tau*T are orthonormal and the projected noise is white
    with variance N0 per sample. The effective channel taps are the
    cross-correlations q[m] = <h, phi(. - m tau T)>, generally two-sided;
    outputs cover basis slots -offset .. N-1+offset.
    """
    phi = _basis_pulse(cfg, beta_b, span_b)
    # orthonormality check of the (truncated, renormalized) basis family
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        probe = isi_taps(phi, 1.0, k_max=4)
    off_peak = np.max(np.abs(np.delete(probe.g_taps, probe.k_max)))
    if off_peak > 1e-4:
        raise ValueError(
            f"basis pulse not tau*T-orthogonal: off-peak correlation {off_peak:.2e}"
        )

    dt = cfg.pulse.dt
    # q[m] = <h(.), phi(. - m tau T)>; support |m| <= span/tau + span_b
    m_max = int(np.ceil(cfg.pulse.span / cfg.tau)) + span_b
    m = np.arange(-m_max, m_max + 1)
    t = cfg.pulse.t_grid
    q = np.array([np.sum(cfg.pulse.samples * eval_pulse(phi, t - mm * cfg.tau * cfg.pulse.T)) * dt
                  for mm in m])

    sig = np.asarray(signal, dtype=complex)
    c = fftconvolve(sig, phi.samples[::-1].astype(complex))
    n_half_h = cfg.pulse.span * cfg.pulse.samples_per_T
    n_half_b = span_b * cfg.step
    # basis slot k centered at k tau T: signal tick (k+cp)*step + n_half_h
    k = np.arange(-m_max, cfg.N + m_max)
    idx = (k + cfg.cp_len) * cfg.step + n_half_h + n_half_b
    valid = (idx >= 0) & (idx < c.size)
    y = np.zeros(k.size, dtype=complex)
    y[valid] = c[idx[valid]] * dt
    return Observation(model="orthobasis", y=y, noise_psd=float(n0),
                       channel=isi_taps(cfg.pulse, cfg.tau), n_symbols=cfg.N,
                       taps=q.astype(complex), offset=m_max)
