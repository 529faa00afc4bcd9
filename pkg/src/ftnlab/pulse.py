r"""Pulse shaping, ISI taps, and folded spectra.

Everything downstream is built on a unit-energy transmit pulse :math:`h(t)`
sampled on an oversampled grid, its symbol-spaced autocorrelation taps
:math:`g[k] = \int h(t)\,h^*(t - k\tau T)\,dt`, and the aliased (folded)
magnitude spectrum obtained by stacking spectral replicas at the symbol rate
:math:`1/(\tau T)`.

Conventions: ``T = 1`` throughout the experiments, pulses are real and even,
and folded-spectrum values carry units of seconds (the closed-form squared
magnitude spectrum of a unit-energy pulse integrates to one).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PulseShape",
    "FoldedSpectrum",
    "IsiChannel",
    "make_pulse",
    "eval_pulse",
    "pulse_spectrum",
    "isi_taps",
    "folded_values",
    "folded_spectrum",
    "folded_from_taps",
    "whiten_forney",
]

# Closed-form RRC evaluation breaks down within this distance of a removable
# singularity; the limit value is substituted instead.
_SINGULARITY_GUARD = 1e-8


@dataclass(frozen=True)
class PulseShape:
    """A truncated, sampled, unit-energy transmit pulse.

    Attributes
    ----------
    kind : str
        ``"sinc"`` or ``"rrc"``.
    beta : float
        Excess-bandwidth factor in [0, 1]. Zero for sinc.
    T : float
        Nyquist symbol interval of the pulse family.
    span : int
        Truncation half-width in units of T; support is [-span*T, span*T].
    samples_per_T : int
        Oversampling factor (integer, >= 8).
    t_grid : ndarray
        Sample times, spacing T / samples_per_T.
    samples : ndarray
        Pulse samples, renormalized so the discrete energy is exactly 1.
    scale : float
        Renormalization factor applied to the closed form after truncation.
    """

    kind: str
    beta: float
    T: float
    span: int
    samples_per_T: int
    t_grid: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    scale: float

    def __post_init__(self):
        self.t_grid.flags.writeable = False
        self.samples.flags.writeable = False

    @property
    def dt(self) -> float:
        return self.T / self.samples_per_T

    @property
    def bandwidth(self) -> float:
        """Two-sided occupied bandwidth W of the underlying (untruncated) pulse."""
        if self.kind == "sinc":
            return 1.0 / self.T
        return (1.0 + self.beta) / self.T


@dataclass(frozen=True)
class FoldedSpectrum:
    """Aliased squared-magnitude spectrum on the normalized band [-1/2, 1/2].

    ``values[i]`` is the replica sum at the cell-centered frequency
    ``xi_grid[i] = -1/2 + (i + 1/2)/G``; units are seconds. The spectrum is
    periodic with period 1/(tau*T) in absolute frequency, so one period is
    fully described by this grid.
    """

    tau: float
    T: float
    xi_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.xi_grid.flags.writeable = False
        self.values.flags.writeable = False

    @property
    def grid_size(self) -> int:
        return self.xi_grid.size


@dataclass(frozen=True)
class IsiChannel:
    """Symbol-spaced ISI description of an accelerated single-pulse link.

    ``g[k]`` are the Hermitian matched-filter taps (``g_taps[k_max + k]``
    holds lag k), normalized so g[0] = 1. ``f`` holds the causal
    minimum-phase factor once :func:`whiten_forney` has filled it, with
    ``conv(f, reversed(conj(f))) == g``.
    """

    tau: float
    T: float
    g_taps: np.ndarray = field(repr=False)
    k_max: int
    f_taps: np.ndarray | None = field(default=None, repr=False)
    null_regularizer: float = 0.0

    def __post_init__(self):
        self.g_taps.flags.writeable = False
        if self.f_taps is not None:
            self.f_taps.flags.writeable = False

    def g(self, k: int) -> complex:
        """Tap at signed lag k (zero outside the stored range)."""
        if abs(k) > self.k_max:
            return 0.0
        return self.g_taps[self.k_max + k]

    @property
    def g_causal(self) -> np.ndarray:
        """Taps g[0], g[1], ..., g[k_max]."""
        return self.g_taps[self.k_max:]


def _rrc_closed_form(t: np.ndarray, beta: float, T: float) -> np.ndarray:
    """Root-raised-cosine time response with unit analytic energy.

    Removable singularities at t = 0 and t = +-T/(4 beta) are patched with
    their limit values whenever |t - t_sing| < 1e-8 * T.
    """
    t = np.asarray(t, dtype=float)
    if beta == 0.0:
        out = np.empty_like(t)
        x = t / T
        near0 = np.abs(t) < _SINGULARITY_GUARD * T
        out[near0] = 1.0 / np.sqrt(T)
        nz = ~near0
        out[nz] = np.sin(np.pi * x[nz]) / (np.pi * x[nz]) / np.sqrt(T)
        return out

    x = t / T
    out = np.empty_like(x)
    t_sing = 1.0 / (4.0 * beta)
    near0 = np.abs(x) < _SINGULARITY_GUARD
    near_s = np.abs(np.abs(x) - t_sing) < _SINGULARITY_GUARD
    regular = ~(near0 | near_s)

    out[near0] = 1.0 + beta * (4.0 / np.pi - 1.0)
    out[near_s] = (beta / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
        + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
    )
    xr = x[regular]
    num = np.sin(np.pi * xr * (1.0 - beta)) + 4.0 * beta * xr * np.cos(np.pi * xr * (1.0 + beta))
    den = np.pi * xr * (1.0 - (4.0 * beta * xr) ** 2)
    out[regular] = num / den
    return out / np.sqrt(T)


def make_pulse(kind: str, beta: float, T: float = 1.0, span: int = 16,
               samples_per_T: int = 16) -> PulseShape:
    """Build a truncated, sampled, unit-energy pulse.

    Parameters
    ----------
    kind : {"sinc", "rrc"}
    beta : float
        Roll-off in [0, 1]; must be 0 for sinc.
    T : float
        Nyquist interval of the pulse family.
    span : int
        Hard truncation half-width in units of T (>= 4).
    samples_per_T : int
        Even oversampling factor >= 8.
    """
    kind = kind.lower()
    if kind not in ("sinc", "rrc"):
        raise ValueError(f"unknown pulse kind {kind!r}")
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if kind == "sinc" and beta != 0.0:
        raise ValueError("sinc pulse requires beta = 0")
    if not (isinstance(span, (int, np.integer)) and span >= 4):
        raise ValueError(f"span must be an integer >= 4, got {span}")
    if not (isinstance(samples_per_T, (int, np.integer)) and samples_per_T >= 8):
        raise ValueError(f"samples_per_T must be an integer >= 8, got {samples_per_T}")
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")

    n_half = span * samples_per_T
    idx = np.arange(-n_half, n_half + 1)
    dt = T / samples_per_T
    t_grid = idx * dt
    raw = _rrc_closed_form(t_grid, beta, T)
    energy = np.sum(raw**2) * dt
    scale = 1.0 / np.sqrt(energy)
    return PulseShape(kind=kind, beta=beta, T=float(T), span=int(span),
                      samples_per_T=int(samples_per_T), t_grid=t_grid,
                      samples=raw * scale, scale=scale)


def eval_pulse(p: PulseShape, t: np.ndarray) -> np.ndarray:
    """Normalized truncated pulse evaluated at arbitrary times.

    Returns the same closed form (scaled by the truncation renormalization)
    that produced ``p.samples``, and exactly 0 outside [-span*T, span*T].
    """
    t = np.asarray(t, dtype=float)
    out = _rrc_closed_form(t, p.beta, p.T) * p.scale
    out[np.abs(t) > p.span * p.T] = 0.0
    return out


def pulse_spectrum(p: PulseShape, freqs: np.ndarray) -> np.ndarray:
    """Closed-form squared magnitude spectrum |H(f)|^2 of the untruncated pulse.

    Exactly zero for |f| > W/2. Units: seconds (unit pulse energy).
    """
    f = np.abs(np.asarray(freqs, dtype=float))
    T, beta = p.T, p.beta
    out = np.zeros_like(f)
    if p.kind == "sinc" or beta == 0.0:
        out[f <= 0.5 / T] = T
        return out
    f1 = (1.0 - beta) / (2.0 * T)
    f2 = (1.0 + beta) / (2.0 * T)
    out[f <= f1] = T
    roll = (f > f1) & (f <= f2)
    out[roll] = (T / 2.0) * (1.0 + np.cos(np.pi * T / beta * (f[roll] - f1)))
    return out


def _taps_from_samples(t_grid: np.ndarray, samples: np.ndarray, shifted_eval,
                       tau: float, T: float, k_max: int) -> np.ndarray:
    """Discrete inner products <h(.), h(. - k tau T)> for k = 0..k_max.

    ``shifted_eval(t)`` must return the pulse at arbitrary times so shifts
    need not land on the sampling grid.
    """
    dt = t_grid[1] - t_grid[0]
    taps = np.empty(k_max + 1)
    for k in range(k_max + 1):
        taps[k] = np.sum(samples * shifted_eval(t_grid - k * tau * T)) * dt
    return taps


def isi_taps(p: PulseShape, tau: float, k_max: int | None = None) -> IsiChannel:
    """Matched-filter ISI taps of a pulse accelerated by tau.

    g[k] is the discrete inner product of the truncated pulse with its copy
    delayed by k*tau*T, computed on the oversampled grid (shifted copies are
    evaluated in closed form, so tau need not align with the grid). Taps are
    normalized so g[0] = 1 and stored Hermitian: g[-k] = conj(g[k]).

    A warning (not an error) is emitted when |g[k_max]| > 1e-3, signalling
    that the tap window cuts off energy that is still significant.
    """
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if k_max is None:
        k_max = int(np.ceil(2.0 * p.span / tau))
    if k_max < 1:
        raise ValueError("k_max must be >= 1")

    causal = _taps_from_samples(p.t_grid, p.samples, lambda t: eval_pulse(p, t),
                                tau, p.T, k_max)
    causal = causal / causal[0]
    if abs(causal[k_max]) > 1e-3:
        warnings.warn(
            f"|g[{k_max}]| = {abs(causal[k_max]):.2e} > 1e-3; "
            "tap window truncates significant ISI",
            stacklevel=2,
        )
    g = np.concatenate([causal[:0:-1], causal]).astype(complex)
    return IsiChannel(tau=float(tau), T=p.T, g_taps=g, k_max=int(k_max))


def folded_values(p: PulseShape, tau: float, xi: np.ndarray) -> np.ndarray:
    """Replica-sum spectrum sum_n |H((xi + n)/(tau T))|^2 at normalized xi.

    Valid for xi anywhere (the sum is 1-periodic in xi); uses the closed-form
    pulse spectrum, so the result describes the untruncated pulse.
    """
    xi = np.asarray(xi, dtype=float)
    # Replicas with support overlapping [-1/2, 1/2]: |xi + n| <= W tau T / 2.
    n_hi = int(np.floor(p.bandwidth * tau * p.T / 2.0 + np.max(np.abs(xi)))) + 1
    out = np.zeros_like(xi)
    for n in range(-n_hi, n_hi + 1):
        out += pulse_spectrum(p, (xi + n) / (tau * p.T))
    return out


def folded_spectrum(p: PulseShape, tau: float, grid_size: int = 1024) -> FoldedSpectrum:
    """Folded spectrum on the cell-centered grid xi_i = -1/2 + (i + 1/2)/G.

    G must be a power of two >= 256. Cell centers avoid placing evaluation
    points exactly on band-edge nulls.
    """
    G = int(grid_size)
    if G < 256 or (G & (G - 1)) != 0:
        raise ValueError(f"grid_size must be a power of two >= 256, got {grid_size}")
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    xi = -0.5 + (np.arange(G) + 0.5) / G
    vals = folded_values(p, tau, xi)
    return FoldedSpectrum(tau=float(tau), T=p.T, xi_grid=xi, values=vals)


def folded_from_taps(ch: IsiChannel, xi: np.ndarray) -> np.ndarray:
    """Folded spectrum reconstructed from the ISI taps: tau*T * sum_k g[k] e^{-j2 pi xi k}.

    Poisson summation makes this identical to the replica sum for the same
    (truncated) pulse; comparing it against :func:`folded_values` bounds the
    truncation error of the tap window.
    """
    xi = np.asarray(xi, dtype=float)
    k = np.arange(-ch.k_max, ch.k_max + 1)
    phase = np.exp(-2j * np.pi * np.outer(xi, k))
    return ch.tau * ch.T * np.real(phase @ ch.g_taps)


def whiten_forney(ch: IsiChannel, eps: float = 0.0, grid_size: int = 1024) -> IsiChannel:
    """Minimum-phase spectral factorization of the ISI taps.

    Computes causal f with conv(f, reversed(conj(f))) = g via the cepstral
    (log-spectrum) method on a 4*G point grid. The factored spectrum is
    S(omega) = sum_k g[k] e^{-j omega k} + eps; when the spectrum has nulls
    (min < 1e-9 relative to g[0] = 1) and eps = 0 the factorization is
    refused with :class:`NullSpectrumError`.

    Returns a new channel with ``f_taps`` filled (f[0] > 0 real) and
    ``null_regularizer`` recording eps.
    """
    from .errors import NullSpectrumError

    M = 4 * int(grid_size)
    k = np.arange(-ch.k_max, ch.k_max + 1)
    omega = 2.0 * np.pi * np.arange(M) / M
    spec = np.real(np.exp(-1j * np.outer(omega, k)) @ ch.g_taps)
    if spec.min() < 1e-9 and eps == 0.0:
        raise NullSpectrumError(
            f"folded spectrum min {spec.min():.3e} < 1e-9 relative to g[0]; "
            "supply eps > 0 to factor a regularized spectrum"
        )
    spec = np.maximum(spec + eps, 1e-12)

    # Real cepstrum -> causal fold -> exponential gives the min-phase factor.
    cep = np.fft.ifft(np.log(spec))
    fold = np.zeros(M, dtype=complex)
    fold[0] = cep[0] / 2.0
    fold[1:M // 2] = cep[1:M // 2]
    fold[M // 2] = cep[M // 2] / 2.0
    f_spec = np.exp(np.fft.fft(fold))
    f_full = np.fft.ifft(f_spec)

    # Taps decay below machine relevance quickly; keep the numerically
    # significant head (downstream consumers re-truncate by energy budget).
    f_real = np.real(f_full)
    mag = np.abs(f_real)
    keep = int(np.max(np.nonzero(mag > 1e-12 * mag[0])[0])) + 1 if mag[0] > 0 else 1
    keep = min(keep, M // 2)
    f = f_real[:keep].copy()
    if np.max(np.abs(np.imag(f_full[:keep]))) > 1e-6 * mag[0]:
        # Complex g would land here; the laboratory only builds real pulses.
        f = f_full[:keep].copy()
    return IsiChannel(tau=ch.tau, T=ch.T, g_taps=ch.g_taps.copy(), k_max=ch.k_max,
                      f_taps=f, null_regularizer=float(eps))
