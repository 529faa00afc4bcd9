"""Monte-Carlo ambiguity analysis of random frames and known-frame Doppler
estimation.

The ambiguity surface of a random data signal only makes sense in
expectation, so E|A(delay, doppler)|^2 is estimated by averaging the
discrete correlation integral over independently drawn frames, normalized
so the origin reads 1. Doppler is measured in cycles per unit time (T = 1):
the packing replicas then sit at integer multiples of 1/(tau T), and the
observation window N tau T sets the mainlobe width. Both conventions are
recorded on the grid object.

Doppler estimation is communication-centric: the transmitted frame is known
to the estimator, each hypothesis is the transmitted waveform re-modulated
to a candidate frequency, and a least-squares amplitude fit scores every
candidate pair; the best pair gets one parabolic refinement step per target,
kept only when it improves the fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditionedError
from .model import FtnConfig, SymbolFrame, awgn, modulate, random_frame

__all__ = [
    "AmbiguityGrid",
    "AfPeak",
    "SensingScene",
    "MlEstimate",
    "expected_af",
    "af_peak_report",
    "synthesize_return",
    "ml_doppler",
]


@dataclass(frozen=True)
class AmbiguityGrid:
    """E|A|^2 samples over a delay x doppler grid, origin-normalized."""

    delay_grid: np.ndarray
    doppler_grid: np.ndarray
    values: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    trials: int
    seed: int
    doppler_units: str
    window: float

    def __post_init__(self):
        shape = (self.delay_grid.size, self.doppler_grid.size)
        if self.values.shape != shape or self.stderr.shape != shape:
            raise ValueError("grid value shapes do not match the axes")
        if np.any(self.values < 0) or np.any(self.stderr < 0):
            raise ValueError("squared-magnitude averages must be >= 0")

    def delay_slice(self, doppler: float = 0.0) -> np.ndarray:
        j = int(np.argmin(np.abs(self.doppler_grid - doppler)))
        return self.values[:, j]

    def doppler_slice(self, delay: float = 0.0) -> np.ndarray:
        i = int(np.argmin(np.abs(self.delay_grid - delay)))
        return self.values[i, :]


def expected_af(cfg: FtnConfig, delay_grid, doppler_grid, trials: int = 500,
                seed: int = 0) -> AmbiguityGrid:
    """Average squared ambiguity of random frames drawn from ``cfg``.

    Delays are in units of T and must land on the oversampling grid;
    dopplers are in cycles per unit time. Normalization divides by the
    trial-averaged squared signal energy, the origin value, so the (0, 0)
    entry of any grid containing it reads 1 up to Monte-Carlo noise.
    ``stderr`` is the per-point standard error over trials.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a usable average")
    delays = np.asarray(delay_grid, dtype=float)
    dops = np.asarray(doppler_grid, dtype=float)
    if delays.size < 1 or dops.size < 1:
        raise ValueError("delay and doppler grids must be nonempty")
    spt = cfg.pulse.samples_per_T
    d_samp = delays * spt
    d_int = np.rint(d_samp).astype(np.int64)
    if np.max(np.abs(d_samp - d_int)) > 1e-9:
        raise ValueError("delay grid must land on the oversampling grid "
                         f"(multiples of 1/{spt} T)")
    dt = cfg.pulse.dt

    probe = modulate(cfg, random_frame(cfg, seed=0))
    n = probe.size
    t_axis = np.arange(n) * dt
    phase = np.exp(-2j * np.pi * np.outer(t_axis, dops))

    s1 = np.zeros((delays.size, dops.size))
    s2 = np.zeros_like(s1)
    norm_acc = 0.0
    z = np.empty((delays.size, n), dtype=complex)
    for k in range(trials):
        frame = random_frame(cfg, seed=_trial_seed(seed, k))
        s = modulate(cfg, frame)
        z[:] = 0.0
        for i, d in enumerate(d_int):
            lo, hi = max(0, d), n + min(0, d)
            z[i, lo:hi] = s[lo:hi] * np.conj(s[lo - d:hi - d])
        q = np.abs(z @ phase) ** 2 * dt * dt
        s1 += q
        s2 += q * q
        energy = float(np.sum(np.abs(s) ** 2)) * dt
        norm_acc += energy * energy
    norm = norm_acc / trials
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean * mean, 0.0)
    serr = np.sqrt(var / max(trials - 1, 1))
    return AmbiguityGrid(delay_grid=delays, doppler_grid=dops,
                         values=mean / norm, stderr=serr / norm,
                         trials=trials, seed=seed,
                         doppler_units="cycles per unit time (T = 1)",
                         window=float(cfg.N * cfg.tau * cfg.pulse.T))


def _trial_seed(seed: int, k: int):
    return [0x5E45, seed, k]


@dataclass(frozen=True)
class AfPeak:
    doppler: float
    value: float
    ratio: float


def af_peak_report(grid: AmbiguityGrid, exclusion_radius: float,
                   threshold_factor: float = 3.0, delay: float = 0.0,
                   window_radius: float = 0.3, guard_radius: float = 0.05):
    """Doppler-axis sidelobe peaks on one delay slice.

    Points within ``exclusion_radius`` of doppler 0 belong to the mainlobe
    and are ignored. A strict local maximum among the remaining points is
    reported when it exceeds ``threshold_factor`` times the median of its
    local floor, the sidelobe points at distance (guard_radius,
    window_radius] around it. The local floor tracks the sloped skirts of
    the mainlobe, so broad-floor wiggles do not register as peaks.
    Results come back sorted by value, largest first.
    """
    if exclusion_radius <= 0 or threshold_factor <= 0:
        raise ValueError("exclusion radius and threshold factor must be > 0")
    if not (0 < guard_radius < window_radius):
        raise ValueError("need 0 < guard_radius < window_radius")
    v = grid.doppler_slice(delay)
    nu = grid.doppler_grid
    side = np.abs(nu) > exclusion_radius
    if np.count_nonzero(side) < 5:
        raise ValueError("exclusion zone leaves no sidelobe region")
    peaks = []
    for i in range(1, nu.size - 1):
        if not side[i]:
            continue
        if not (v[i] > v[i - 1] and v[i] > v[i + 1]):
            continue
        dist = np.abs(nu - nu[i])
        local = side & (dist > guard_radius) & (dist <= window_radius)
        if np.count_nonzero(local) < 5:
            local = side & (dist > guard_radius)
        floor = float(np.median(v[local]))
        if v[i] > threshold_factor * floor:
            peaks.append(AfPeak(doppler=float(nu[i]), value=float(v[i]),
                                ratio=float(v[i] / floor) if floor > 0 else np.inf))
    peaks.sort(key=lambda p: -p.value)
    return peaks


@dataclass(frozen=True)
class SensingScene:
    """Targets as (doppler, complex reflectivity) against one frame config."""

    targets: tuple
    noise_psd: float
    cfg: FtnConfig

    def __post_init__(self):
        tg = tuple((float(nu), complex(a)) for nu, a in self.targets)
        if len(tg) < 1:
            raise ValueError("scene needs at least one target")
        if any(a == 0 for _, a in tg):
            raise ValueError("reflectivities must be nonzero")
        if self.noise_psd < 0:
            raise ValueError("noise level must be >= 0")
        object.__setattr__(self, "targets", tg)


@dataclass(frozen=True)
class MlEstimate:
    """Doppler/amplitude fit, strongest target first."""

    dopplers: np.ndarray
    amplitudes: np.ndarray
    objective: float
    skipped_pairs: int


def synthesize_return(scene: SensingScene, frame: SymbolFrame, seed: int) -> np.ndarray:
    """Received samples: each target re-modulates the transmitted waveform."""
    s = modulate(scene.cfg, frame)
    t_axis = np.arange(s.size) * scene.cfg.pulse.dt
    r = np.zeros(s.size, dtype=complex)
    for nu, amp in scene.targets:
        r += amp * s * np.exp(2j * np.pi * nu * t_axis)
    if scene.noise_psd > 0:
        r = awgn(r, scene.noise_psd, seed=seed,
                 samples_per_T=scene.cfg.pulse.samples_per_T,
                 T=scene.cfg.pulse.T)
    return r


def _ls_objective(cols: np.ndarray, r: np.ndarray):
    """Least-squares fit of r onto the given columns: (objective, amplitudes)."""
    g = cols.conj().T @ cols
    c = cols.conj().T @ r
    try:
        a = np.linalg.solve(g, c)
    except np.linalg.LinAlgError:
        raise IllConditionedError("steering columns are numerically collinear")
    return float(np.real(np.vdot(c, a))), a


def ml_doppler(scene: SensingScene, frame: SymbolFrame, received: np.ndarray,
               candidate_grid) -> MlEstimate:
    """Exhaustive doppler search with least-squares amplitudes.

    Model order equals the number of scene targets (one or two). For two
    targets every unordered candidate pair is scored by the energy captured
    by its amplitude fit; numerically collinear pairs are skipped and
    counted. Each winning doppler then takes one parabolic step from the
    objective at its grid neighbors, kept only when the refit improves.
    """
    grid = np.asarray(candidate_grid, dtype=float)
    if grid.size < 3:
        raise ValueError("candidate grid needs at least 3 points")
    steps = np.diff(grid)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6):
        raise ValueError("candidate grid must be uniform ascending")
    step = float(steps[0])
    n_targets = len(scene.targets)
    if n_targets > 2:
        raise ValueError("search supports one or two targets")
    r = np.asarray(received, dtype=complex)
    s = modulate(scene.cfg, frame)
    if r.size != s.size:
        raise ValueError("received length does not match the frame waveform")
    t_axis = np.arange(s.size) * scene.cfg.pulse.dt

    def steer(nu):
        return s * np.exp(2j * np.pi * nu * t_axis)

    m_cols = s[:, None] * np.exp(2j * np.pi * np.outer(t_axis, grid))
    g_full = m_cols.conj().T @ m_cols
    c_full = m_cols.conj().T @ r
    skipped = 0

    if n_targets == 1:
        q = np.abs(c_full) ** 2 / np.real(np.diag(g_full))
        best = int(np.argmax(q))
        nus = [grid[best]]
    else:
        gd = np.real(np.diag(g_full))
        det = gd[:, None] * gd[None, :] - np.abs(g_full) ** 2
        coherence = np.abs(g_full) ** 2 / (gd[:, None] * gd[None, :])
        iu, ju = np.triu_indices(grid.size, k=1)
        bad = coherence[iu, ju] > 1.0 - 1e-6
        skipped = int(np.count_nonzero(bad))
        if skipped == bad.size:
            raise IllConditionedError("every candidate pair is collinear")
        d_pair = np.where(bad, 1.0, det[iu, ju])
        ai = (gd[ju] * c_full[iu] - g_full[iu, ju] * c_full[ju]) / d_pair
        aj = (gd[iu] * c_full[ju] - g_full[ju, iu] * c_full[iu]) / d_pair
        q_pair = np.real(np.conj(c_full[iu]) * ai + np.conj(c_full[ju]) * aj)
        q_pair[bad] = -np.inf
        k = int(np.argmax(q_pair))
        nus = [grid[iu[k]], grid[ju[k]]]

    def objective_at(nu_list):
        cols = np.stack([steer(nu) for nu in nu_list], axis=1)
        return _ls_objective(cols, r)

    q0, amps = objective_at(nus)
    for idx in range(n_targets):
        lo = [nu if i != idx else nu - step for i, nu in enumerate(nus)]
        hi = [nu if i != idx else nu + step for i, nu in enumerate(nus)]
        try:
            q_lo, _ = objective_at(lo)
            q_hi, _ = objective_at(hi)
        except IllConditionedError:
            continue
        denom = q_lo - 2.0 * q0 + q_hi
        if denom >= -1e-30:
            continue
        shift = 0.5 * step * (q_lo - q_hi) / denom
        if abs(shift) > step:
            continue
        trial = list(nus)
        trial[idx] = nus[idx] + shift
        try:
            q_try, a_try = objective_at(trial)
        except IllConditionedError:
            continue
        if q_try > q0:
            q0, amps, nus = q_try, a_try, trial

    order = np.argsort(-np.abs(amps))
    return MlEstimate(dopplers=np.asarray(nus)[order],
                      amplitudes=np.asarray(amps)[order],
                      objective=q0, skipped_pairs=skipped)
