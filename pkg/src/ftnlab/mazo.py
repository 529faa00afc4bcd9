"""Minimum-distance search over binary error sequences at sub-Nyquist packing.

Two symbol sequences that differ by e have squared Euclidean distance
e^H Toeplitz(g) e at the matched-filter output. Here d2(e) is that quadratic
form divided by 2 g0, so the single-symbol (antipodal) error scores exactly
2 regardless of the pulse, and the packing factor where some multi-symbol
event first drops below 2 reads as a pulse-independent constant.

The searcher fixes e[0] = +2 (global sign symmetry halves the tree) and
walks the remaining entries depth first. Pruning uses the classic
partial-energy bound: with G + ridge = B^T B for a lower-triangular B
(reversed Cholesky factor, exact because a Toeplitz matrix is persymmetric),
the first t components of B e depend only on e[0..t-1], so their energy
already below the incumbent is required to descend. A plain exhaustive
enumeration is kept for shallow depths and cross-checking.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import toeplitz

from .pulse import IsiChannel, PulseShape, isi_taps

__all__ = ["DistanceReport", "MazoScan", "min_distance", "mazo_scan"]

_RIDGE = 1e-10  # keeps the Cholesky factor alive on singular folded spectra


@dataclass(frozen=True)
class DistanceReport:
    """Outcome of one minimum-distance search."""

    tau: float
    pulse: str
    d2min: float
    argmin: np.ndarray = field(repr=False)
    max_len: int
    method: str

    def __post_init__(self):
        if not (0.0 < self.d2min <= 2.0 + 1e-9):
            raise ValueError(f"d2min must lie in (0, 2] for antipodal signaling, got {self.d2min}")
        e = np.asarray(self.argmin, dtype=float)
        if e.size < 1 or e[0] == 0.0:
            raise ValueError("argmin must start with a nonzero error entry")
        e.flags.writeable = False
        object.__setattr__(self, "argmin", e)

    @property
    def argmin_length(self) -> int:
        """Length of the error event up to its last nonzero entry."""
        nz = np.nonzero(self.argmin)[0]
        return int(nz[-1]) + 1


@dataclass(frozen=True)
class MazoScan:
    """d2min swept over a descending packing-factor grid."""

    pulse: str
    taus: np.ndarray
    d2mins: np.ndarray
    argmin_lengths: np.ndarray
    limit: float
    max_len: int
    tol: float


@njit(cache=True)
def _quad_form(g_mat, e):
    n = e.size
    s = 0.0
    for i in range(n):
        if e[i] != 0.0:
            row = 0.0
            for j in range(n):
                if e[j] != 0.0:
                    row += g_mat[i, j] * e[j]
            s += e[i] * row
    return s


@njit(cache=True)
def _exhaustive_min(g_mat):
    """Min quadratic form over e[0] = 2, e[t] in {0, +-2}; base-3 counting."""
    n = g_mat.shape[0]
    vals = np.array([0.0, 2.0, -2.0])
    e = np.zeros(n)
    e[0] = 2.0
    best = _quad_form(g_mat, e)
    best_e = e.copy()
    if n == 1:
        return best, best_e
    digits = np.zeros(n - 1, np.int64)
    total = 3 ** (n - 1)
    for _ in range(total - 1):
        pos = 0
        while True:
            digits[pos] += 1
            if digits[pos] == 3:
                digits[pos] = 0
                pos += 1
            else:
                break
        for j in range(n - 1):
            e[1 + j] = vals[digits[j]]
        q = _quad_form(g_mat, e)
        if q < best:
            best = q
            best_e = e.copy()
    return best, best_e


@njit(cache=True)
def _branch_bound_min(b_mat, best0):
    """Min of |B e|^2 strictly below best0 over e[0] = 2, e[t] in {0, +-2}.

    Returns (best, argmin, found); found is False when nothing beats best0,
    in which case the caller keeps the antipodal event.
    """
    n = b_mat.shape[0]
    vals = np.array([0.0, 2.0, -2.0])
    acc = np.zeros(n)
    pref = np.zeros(n + 1)
    cur = np.zeros(n)
    nxt = np.zeros(n, np.int64)
    applied = np.zeros(n, np.bool_)
    best = best0
    best_e = np.zeros(n)
    best_e[0] = 2.0
    found = False

    for i in range(n):
        acc[i] = 2.0 * b_mat[i, 0]
    cur[0] = 2.0
    pref[1] = acc[0] * acc[0]
    if n == 1 or pref[1] >= best:
        # b_0 is fixed by e[0]; if it alone reaches the bound, nothing can win
        return best, best_e, found

    t = 1
    nxt[1] = 0
    while t >= 1:
        if nxt[t] == 3:
            if applied[t]:
                v = cur[t]
                for i in range(t, n):
                    acc[i] -= v * b_mat[i, t]
                applied[t] = False
                cur[t] = 0.0
            nxt[t] = 0
            t -= 1
            continue
        v = vals[nxt[t]]
        nxt[t] += 1
        if applied[t]:
            dv = v - cur[t]
            if dv != 0.0:
                for i in range(t, n):
                    acc[i] += dv * b_mat[i, t]
        else:
            if v != 0.0:
                for i in range(t, n):
                    acc[i] += v * b_mat[i, t]
            applied[t] = True
        cur[t] = v
        pt = pref[t] + acc[t] * acc[t]
        if pt >= best:
            continue
        if t == n - 1:
            best = pt
            for i in range(n):
                best_e[i] = cur[i]
            found = True
            continue
        pref[t + 1] = pt
        t += 1
        nxt[t] = 0
    return best, best_e, found


def _error_weight_matrix(ch: IsiChannel, n: int) -> np.ndarray:
    g = np.asarray(ch.g_taps)
    if np.max(np.abs(g.imag)) > 1e-9:
        raise ValueError("binary error search needs real ISI taps")
    lags = np.zeros(n)
    width = min(n - 1, ch.k_max)
    lags[:width + 1] = g.real[ch.k_max:ch.k_max + width + 1]
    return toeplitz(lags)


def min_distance(ch: IsiChannel, constellation: str = "bpsk", max_len: int = 14,
                 method: str = "auto", label: str = "") -> DistanceReport:
    """Smallest normalized d2 over error events up to ``max_len`` symbols.

    ``method`` is "exhaustive", "bnb", or "auto" (exhaustive up to length
    12, branch-and-bound beyond). Both methods search the same set and agree
    to rounding; exhaustive refuses max_len > 16.
    """
    if constellation != "bpsk":
        raise NotImplementedError("error-sequence search covers antipodal signaling only")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if method not in ("auto", "bnb", "exhaustive"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "exhaustive" if max_len <= 12 else "bnb"
    if method == "exhaustive" and max_len > 16:
        raise ValueError("exhaustive search is capped at max_len = 16")

    g_mat = _error_weight_matrix(ch, max_len)
    g0 = g_mat[0, 0]
    if method == "exhaustive":
        quad, argmin = _exhaustive_min(g_mat)
    else:
        chol = np.linalg.cholesky(g_mat + _RIDGE * g0 * np.eye(max_len))
        b_mat = np.ascontiguousarray(chol[::-1, ::-1].T)
        best0 = float(4.0 * np.dot(b_mat[:, 0], b_mat[:, 0]))
        quad, argmin, found = _branch_bound_min(b_mat, best0)
        if not found:
            argmin = np.zeros(max_len)
            argmin[0] = 2.0
        # report the un-ridged quadratic form of the winning event
        quad = _quad_form(g_mat, argmin)
    d2 = float(quad / (2.0 * g0))
    return DistanceReport(tau=ch.tau, pulse=label or f"taps(k_max={ch.k_max})",
                          d2min=min(d2, 2.0), argmin=argmin, max_len=max_len,
                          method=method)


def mazo_scan(pulse: PulseShape, tau_grid, constellation: str = "bpsk",
              max_len: int = 14, tol: float = 0.01,
              method: str = "auto") -> MazoScan:
    """d2min over a descending tau grid plus the last grid point holding 2.

    The limit is the grid point directly above the largest tau whose d2min
    falls below 2 - tol; NaN when no grid point falls below.
    """
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size < 1 or np.any(np.diff(taus) >= 0):
        raise ValueError("tau_grid must be strictly descending")
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must lie in (0, 1)")
    label = f"{pulse.kind} beta={pulse.beta:g}"
    d2 = np.empty(taus.size)
    lens = np.empty(taus.size, dtype=int)
    for i, tau in enumerate(taus):
        with warnings.catch_warnings():
            # the lag window equals the search depth by construction; taps
            # beyond it cannot enter a length-limited quadratic form
            warnings.simplefilter("ignore")
            ch = isi_taps(pulse, float(tau), k_max=max_len)
        rep = min_distance(ch, constellation, max_len, method, label=label)
        d2[i] = rep.d2min
        lens[i] = rep.argmin_length
    below = np.nonzero(d2 < 2.0 - tol)[0]
    if below.size == 0:
        limit = math.nan
    else:
        first = int(below[0])
        limit = float(taus[max(first - 1, 0)])
    return MazoScan(pulse=label, taus=taus, d2mins=d2, argmin_lengths=lens,
                    limit=limit, max_len=max_len, tol=tol)
