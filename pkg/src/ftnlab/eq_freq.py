"""Cyclic-prefix frequency-domain equalization and eigenbin power loading.

When the cyclic prefix covers the two-sided channel memory, the matched
filter payload equals Circulant(g) x (see model.fd_frontend), and the DFT
diagonalizes that matrix: one FFT, a per-bin complex weight, one inverse
FFT. The per-bin MMSE weight treats the post-matched-filter noise as white,
which is the standard practice for this receiver; the dense time-domain
estimator built from the same assumption is identical up to rounding.

Eigenvalues are stored in folded-spectrum units (mean tau*T over the bins)
so they can be compared directly against pulse.folded_values; the weights
convert to Gram units (g0 = 1) internally.

Bit reliabilities use a Gaussian approximation with one averaged
post-equalization SNR per frame: the unbiased estimate z_n = xhat_n / b
with b the mean per-bin signal gain has residual variance Es (1 - b) / b.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CpTooShortError
from .eq_time import LLR_CLAMP
from .capacity import waterfill_input_psd
from .model import FtnConfig, Observation
from .pulse import FoldedSpectrum, IsiChannel, folded_values, isi_taps

__all__ = [
    "FdeSetting",
    "FdeResult",
    "setting_from_taps",
    "setting_from_pulse",
    "fde_mmse",
    "evd_precode",
    "cp_overhead",
]


@dataclass(frozen=True)
class FdeSetting:
    """Diagonalized description of one cyclic-prefix frame.

    ``eigenvalues`` holds the n DFT-bin channel gains in folded-spectrum
    units (bin k sits at xi = k/n wrapped into [-1/2, 1/2)), real and
    nonnegative. ``regularization`` is N0/Es.
    """

    n: int
    cp_len: int
    eigenvalues: np.ndarray = field(repr=False)
    regularization: float
    tau: float
    T: float = 1.0
    es: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("frame length must be >= 2")
        if self.cp_len < 0:
            raise ValueError("cp_len must be >= 0")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.es <= 0:
            raise ValueError("Es must be > 0")
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.shape != (self.n,):
            raise ValueError(f"expected {self.n} eigenvalues, got shape {lam.shape}")
        if np.any(lam < 0):
            raise ValueError("eigenvalues must be real >= 0")
        lam.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def gram_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of Circulant(g) itself (g0 = 1 normalization)."""
        return self.eigenvalues / (self.tau * self.T)

    def ring_half_length(self, tol: float = 1e-3) -> int:
        """Largest |m| <= n/2 with |ring tap m| > tol (cyclic memory)."""
        col = np.fft.ifft(self.gram_eigenvalues).real
        mags = np.abs(col) / max(abs(col[0]), 1e-300)
        half = 0
        for m in range(1, self.n // 2 + 1):
            if mags[m] > tol or mags[self.n - m] > tol:
                half = m
        return half


def _tap_ring(ch: IsiChannel, n: int) -> np.ndarray:
    """First column of Circulant(g): taps folded onto an n-point ring."""
    col = np.zeros(n, dtype=complex)
    lags = np.arange(-ch.k_max, ch.k_max + 1) % n
    np.add.at(col, lags, ch.g_taps)
    return col


def setting_from_taps(cfg: FtnConfig, n0: float = 0.0,
                      ch: IsiChannel | None = None) -> FdeSetting:
    """Build the bin gains a receiver would: DFT of the folded tap ring.

    Truncated tap rings can dip marginally below zero near spectral nulls;
    such bins are clamped to zero.
    """
    if ch is None:
        ch = isi_taps(cfg.pulse, cfg.tau)
    lam_gram = np.fft.fft(_tap_ring(ch, cfg.N))
    worst = float(np.max(np.abs(lam_gram.imag)))
    if worst > 1e-6:
        raise ValueError(f"tap ring is not Hermitian (imag part {worst:.2e})")
    lam = np.maximum(lam_gram.real, 0.0) * cfg.tau * cfg.pulse.T
    return FdeSetting(n=cfg.N, cp_len=cfg.cp_len, eigenvalues=lam,
                      regularization=n0 / cfg.Es, tau=cfg.tau,
                      T=cfg.pulse.T, es=cfg.Es)


def setting_from_pulse(cfg: FtnConfig, n0: float = 0.0) -> FdeSetting:
    """Bin gains from the closed-form folded spectrum (no tap truncation)."""
    xi = np.fft.fftfreq(cfg.N)
    lam = folded_values(cfg.pulse, cfg.tau, xi)
    return FdeSetting(n=cfg.N, cp_len=cfg.cp_len,
                      eigenvalues=np.maximum(lam, 0.0),
                      regularization=n0 / cfg.Es, tau=cfg.tau,
                      T=cfg.pulse.T, es=cfg.Es)


@dataclass(frozen=True)
class FdeResult:
    """Unbiased symbol estimates plus Gaussian-approximation soft bits."""

    symbols: np.ndarray = field(repr=False)
    llr: np.ndarray = field(repr=False)
    bias: float
    post_snr: float


def _ga_llr(z: np.ndarray, constellation: str, es: float, var: float) -> np.ndarray:
    """Per-bit LLRs (positive favors bit 0) for a Gaussian residual."""
    var = max(var, 1e-300)
    if constellation == "bpsk":
        llr = 4.0 * np.sqrt(es) * z.real / var
    elif constellation == "qpsk":
        amp = np.sqrt(es / 2.0)
        llr = np.empty(2 * z.size)
        llr[0::2] = 4.0 * amp * z.real / var
        llr[1::2] = 4.0 * amp * z.imag / var
    else:
        raise ValueError(f"unknown constellation {constellation!r}")
    return np.clip(np.nan_to_num(llr), -LLR_CLAMP, LLR_CLAMP)


def fde_mmse(obs: Observation, setting: FdeSetting, constellation: str = "bpsk",
             allow_short: bool = False) -> FdeResult:
    """Per-bin MMSE equalization of one cyclic-prefix frame.

    Weights W_k = conj(L_k) / (|L_k|^2 + N0/Es) in Gram units; bins whose
    gain and regularizer both vanish get weight zero (they carry nothing).
    Raises CpTooShortError when the prefix is shorter than the cyclic
    memory of the tap ring, unless allow_short, which warns and proceeds.
    """
    if obs.model != "freqdomain":
        raise ValueError(f"fde_mmse expects a freqdomain observation, got {obs.model!r}")
    if obs.n_symbols != setting.n:
        raise ValueError(f"observation carries {obs.n_symbols} symbols, setting expects {setting.n}")
    k_ring = setting.ring_half_length()
    if setting.cp_len < k_ring:
        msg = f"cp_len={setting.cp_len} < ring memory {k_ring}: circulant model is off"
        if not allow_short:
            raise CpTooShortError(msg)
        warnings.warn(msg, stacklevel=2)

    lam = setting.gram_eigenvalues
    den = lam * lam + setting.regularization
    w = np.divide(lam, den, out=np.zeros_like(lam), where=den > 0)
    xhat = np.fft.ifft(w * np.fft.fft(obs.y))

    gains = np.divide(lam * lam, den, out=np.zeros_like(lam), where=den > 0)
    bias = float(np.mean(gains))
    if bias <= 0.0:
        zeros = np.zeros(setting.n, dtype=complex)
        nbits = {"bpsk": 1, "qpsk": 2}.get(constellation)
        if nbits is None:
            raise ValueError(f"unknown constellation {constellation!r}")
        return FdeResult(symbols=zeros, llr=np.zeros(setting.n * nbits),
                         bias=0.0, post_snr=0.0)
    z = xhat / bias
    var = setting.es * (1.0 - bias) / bias
    llr = _ga_llr(z, constellation, setting.es, var)
    post_snr = bias / max(1.0 - bias, 1e-300)
    return FdeResult(symbols=z, llr=llr, bias=bias, post_snr=post_snr)


def evd_precode(fs: FoldedSpectrum, total_power: float, n0: float):
    """Water-filled per-bin powers over the eigenbin grid, plus their rate.

    Returns ``(powers, rate)``; the rate sums log2(1 + p_k v_k / N0) over
    the bins and normalizes by n * tau * T. Null bins get exactly zero
    power. Raises AllNullError through the water-filler when every bin is
    null.
    """
    powers, _ = waterfill_input_psd(fs, total_power, n0)
    lam = fs.values
    rate = float(np.sum(np.log2(1.0 + powers * lam / n0)) / (lam.size * fs.tau * fs.T))
    return powers, rate


def cp_overhead(n: int, cp_len: int) -> float:
    """Throughput retention factor n / (n + cp_len) of the prefix."""
    if n < 1 or cp_len < 0:
        raise ValueError("need n >= 1 and cp_len >= 0")
    return n / (n + cp_len)
