"""Ambiguity-surface estimation and known-frame Doppler recovery."""

import numpy as np
import pytest

from ftnlab.errors import IllConditionedError
from ftnlab.model import FtnConfig, random_frame
from ftnlab.pulse import make_pulse
from ftnlab.sensing import (AmbiguityGrid, SensingScene, af_peak_report,
                            expected_af, ml_doppler, synthesize_return)

PULSE = make_pulse("rrc", 0.5, samples_per_T=10, span=12)


def cfg_for(tau, N=32):
    return FtnConfig(pulse=PULSE, tau=tau, N=N)


def test_origin_value_is_exactly_one():
    # A(0,0) equals the frame energy, so the normalizer makes it 1 exactly
    cfg = cfg_for(0.8)
    g = expected_af(cfg, [0.0], [0.0], trials=100, seed=2)
    assert g.values[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_origin_is_global_max_within_mc_noise():
    cfg = cfg_for(0.8)
    delays = np.arange(-10, 11) * 0.2
    dops = np.linspace(-1.5, 1.5, 31)
    g = expected_af(cfg, delays, dops, trials=150, seed=3)
    assert np.all(g.values <= 1.0 + 3.0 * g.stderr + 1e-9)


def test_sign_symmetry_is_exact():
    # every (delay, doppler) product pair reappears conjugated at the
    # mirrored point, so |A| matches exactly, not just in expectation
    cfg = cfg_for(0.7)
    delays = np.arange(-6, 7) * 0.3
    dops = np.linspace(-1.2, 1.2, 17)
    g = expected_af(cfg, delays, dops, trials=120, seed=4)
    np.testing.assert_allclose(g.values, g.values[::-1, ::-1], rtol=1e-10,
                               atol=1e-15)


def test_doubling_trials_moves_less_than_three_stderr():
    cfg = cfg_for(0.8)
    delays = np.arange(-8, 9) * 0.2
    dops = np.linspace(-1.5, 1.5, 31)
    g1 = expected_af(cfg, delays, dops, trials=200, seed=9)
    g2 = expected_af(cfg, delays, dops, trials=400, seed=9)
    z = np.abs(g1.values - g2.values) / np.sqrt(g1.stderr ** 2 + g2.stderr ** 2)
    assert z.max() < 3.0


@pytest.mark.parametrize("tau,expected_nu", [(1.0, 1.0), (0.8, 1.25)])
def test_packing_replica_peaks_present(tau, expected_nu):
    dops = np.linspace(-2.0, 2.0, 321)
    g = expected_af(cfg_for(tau, N=128), [0.0], dops, trials=300, seed=5)
    peaks = af_peak_report(g, exclusion_radius=0.5, threshold_factor=3.0)
    assert len(peaks) == 2
    got = sorted(p.doppler for p in peaks)
    step = dops[1] - dops[0]
    assert abs(got[0] + expected_nu) <= step and abs(got[1] - expected_nu) <= step
    assert all(p.ratio > 3.0 for p in peaks)


def test_no_replica_peaks_below_critical_packing():
    # beyond tau = 1/(1+beta) the replica would sit outside the pulse
    # bandwidth, so the doppler slice is clean
    dops = np.linspace(-2.0, 2.0, 321)
    g = expected_af(cfg_for(0.6, N=128), [0.0], dops, trials=300, seed=5)
    assert af_peak_report(g, exclusion_radius=0.5, threshold_factor=3.0) == []


def test_delay_ripple_appears_only_above_critical_packing():
    # periodizing rho^2 at spacing tau*T ripples iff 1/(tau*T) is inside
    # the 2x pulse bandwidth: tau=0.8 ripples, tau=0.6 is flat. Quadratic
    # detrend over the pulse-tail window isolates that ripple.
    delays = np.arange(20, 33) * 0.1
    resid_var = {}
    for tau in (0.8, 0.6):
        g = expected_af(cfg_for(tau, N=16), delays, [0.0], trials=30000, seed=7)
        sl = g.values[:, 0]
        coef = np.polynomial.polynomial.polyfit(delays, sl, 2)
        resid = sl - np.polynomial.polynomial.polyval(delays, coef)
        resid_var[tau] = float(np.var(resid))
    assert resid_var[0.8] >= 2.0 * resid_var[0.6]


def test_af_input_validation():
    cfg = cfg_for(0.8)
    with pytest.raises(ValueError, match="100 trials"):
        expected_af(cfg, [0.0], [0.0], trials=50)
    with pytest.raises(ValueError, match="oversampling grid"):
        expected_af(cfg, [0.123], [0.0], trials=100)
    with pytest.raises(ValueError, match="nonempty"):
        expected_af(cfg, [], [0.0], trials=100)


def test_grid_object_validation():
    ax = np.array([0.0, 1.0])
    good = np.zeros((2, 2))
    with pytest.raises(ValueError, match="shapes"):
        AmbiguityGrid(delay_grid=ax, doppler_grid=ax, values=np.zeros((3, 2)),
                      stderr=good, trials=100, seed=0, doppler_units="", window=1.0)
    with pytest.raises(ValueError, match=">= 0"):
        AmbiguityGrid(delay_grid=ax, doppler_grid=ax, values=good - 1.0,
                      stderr=good, trials=100, seed=0, doppler_units="", window=1.0)


def synthetic_grid(floor, spikes):
    dops = np.linspace(-2.0, 2.0, 161)
    v = np.full(dops.size, floor)
    v[np.abs(dops) < 0.3] = 1.0
    for nu, val in spikes:
        v[np.argmin(np.abs(dops - nu))] = val
    return AmbiguityGrid(delay_grid=np.array([0.0]), doppler_grid=dops,
                         values=v[None, :], stderr=np.zeros((1, dops.size)),
                         trials=100, seed=0, doppler_units="test", window=1.0)


def test_peak_report_finds_injected_spike_exactly():
    g = synthetic_grid(0.001, [(0.7, 0.05)])
    peaks = af_peak_report(g, exclusion_radius=0.4, threshold_factor=3.0)
    assert len(peaks) == 1
    assert peaks[0].doppler == pytest.approx(0.7, abs=1e-9)
    assert peaks[0].ratio == pytest.approx(50.0, rel=1e-6)


def test_peak_report_threshold_suppresses_weak_spike():
    g = synthetic_grid(0.001, [(0.7, 0.0025)])
    assert af_peak_report(g, exclusion_radius=0.4, threshold_factor=3.0) == []


def test_peak_report_validation():
    g = synthetic_grid(0.001, [])
    with pytest.raises(ValueError, match="must be > 0"):
        af_peak_report(g, exclusion_radius=-1.0)
    with pytest.raises(ValueError, match="guard_radius"):
        af_peak_report(g, exclusion_radius=0.4, guard_radius=0.5, window_radius=0.3)
    with pytest.raises(ValueError, match="sidelobe region"):
        af_peak_report(g, exclusion_radius=5.0)


def test_scene_validation():
    cfg = cfg_for(0.8)
    with pytest.raises(ValueError, match="at least one target"):
        SensingScene(targets=(), noise_psd=0.1, cfg=cfg)
    with pytest.raises(ValueError, match="nonzero"):
        SensingScene(targets=((0.5, 0.0),), noise_psd=0.1, cfg=cfg)
    with pytest.raises(ValueError, match=">= 0"):
        SensingScene(targets=((0.5, 1.0),), noise_psd=-0.1, cfg=cfg)


GRID = np.linspace(-1.0, 1.0, 201)


def test_single_target_noiseless_on_grid_is_exact():
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.5, 0.8 - 0.3j),), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=3)
    r = synthesize_return(scene, frame, seed=0)
    est = ml_doppler(scene, frame, r, GRID)
    assert abs(est.dopplers[0] - 0.5) <= 1e-9
    assert abs(est.amplitudes[0] - (0.8 - 0.3j)) <= 1e-9
    assert est.skipped_pairs == 0


def test_single_target_off_grid_refinement():
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.503, 1.0),), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=3)
    r = synthesize_return(scene, frame, seed=0)
    est = ml_doppler(scene, frame, r, GRID)
    # refinement must land well inside the half grid cell of 0.005
    assert abs(est.dopplers[0] - 0.503) <= 1e-3


def test_two_targets_noiseless_exact_and_sorted():
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.5, 1.0), (-0.4, 0.15)), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=3)
    r = synthesize_return(scene, frame, seed=0)
    est = ml_doppler(scene, frame, r, GRID)
    assert est.dopplers[0] == pytest.approx(0.5, abs=1e-9)
    assert est.dopplers[1] == pytest.approx(-0.4, abs=1e-9)
    assert est.amplitudes[0] == pytest.approx(1.0, abs=1e-8)
    assert est.amplitudes[1] == pytest.approx(0.15, abs=1e-8)


def recovery_counts(tau, n_seeds):
    # equal frame duration: the packed frame carries more symbols
    N = int(round(32.0 / tau))
    cfg = cfg_for(tau, N=N)
    scene = SensingScene(targets=((0.5, 1.0), (-0.4, 0.15)), noise_psd=0.05,
                         cfg=cfg)
    both = weak = 0
    for sd in range(n_seeds):
        frame = random_frame(cfg, seed=[0xF1, sd])
        r = synthesize_return(scene, frame, seed=[0xF2, sd])
        est = ml_doppler(scene, frame, r, GRID)
        errs = [min(abs(d - t) for d in est.dopplers) for t in (0.5, -0.4)]
        ok = [e <= 0.005 for e in errs]
        both += all(ok)
        weak += ok[1]
    return both, weak


def test_weak_target_recovery_prefers_packing():
    both6, weak6 = recovery_counts(0.6, 30)
    both1, weak1 = recovery_counts(1.0, 30)
    assert both6 >= 27
    assert weak1 < weak6


def test_collinear_pair_skipped_and_flagged():
    # doppler 10 at 10 samples per unit time advances a full cycle per
    # sample, so its steering column equals the doppler-0 column
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.0, 1.0), (5.0, 0.5)), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=1)
    r = synthesize_return(scene, frame, seed=0)
    est = ml_doppler(scene, frame, r, np.array([0.0, 5.0, 10.0]))
    assert est.skipped_pairs == 1
    assert sorted(np.round(est.dopplers, 9)) == [0.0, 5.0]


def test_all_pairs_collinear_raises():
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.0, 1.0), (5.0, 0.5)), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=1)
    r = synthesize_return(scene, frame, seed=0)
    with pytest.raises(IllConditionedError):
        ml_doppler(scene, frame, r, np.array([0.0, 10.0, 20.0]))


def test_ml_validation():
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.5, 1.0),), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=1)
    r = synthesize_return(scene, frame, seed=0)
    with pytest.raises(ValueError, match="3 points"):
        ml_doppler(scene, frame, r, np.array([0.0, 0.5]))
    with pytest.raises(ValueError, match="uniform ascending"):
        ml_doppler(scene, frame, r, np.array([0.0, 0.5, 0.6]))
    with pytest.raises(ValueError, match="uniform ascending"):
        ml_doppler(scene, frame, r, np.array([1.0, 0.5, 0.0]))
    with pytest.raises(ValueError, match="length"):
        ml_doppler(scene, frame, r[:-5], GRID)
    three = SensingScene(targets=((0.1, 1.0), (0.2, 1.0), (0.3, 1.0)),
                         noise_psd=0.0, cfg=cfg)
    with pytest.raises(ValueError, match="one or two"):
        ml_doppler(three, frame, r, GRID)


def test_synthesize_return_matches_direct_construction():
    from ftnlab.model import modulate
    cfg = cfg_for(0.6)
    scene = SensingScene(targets=((0.37, 0.5 + 0.5j),), noise_psd=0.0, cfg=cfg)
    frame = random_frame(cfg, seed=6)
    s = modulate(cfg, frame)
    t = np.arange(s.size) * cfg.pulse.dt
    want = (0.5 + 0.5j) * s * np.exp(2j * np.pi * 0.37 * t)
    np.testing.assert_allclose(synthesize_return(scene, frame, seed=0), want,
                               atol=1e-15)


def test_af_determinism():
    cfg = cfg_for(0.8)
    dops = np.linspace(-1.0, 1.0, 21)
    g1 = expected_af(cfg, [0.0, 0.5], dops, trials=120, seed=42)
    g2 = expected_af(cfg, [0.0, 0.5], dops, trials=120, seed=42)
    assert np.array_equal(g1.values, g2.values)
    assert np.array_equal(g1.stderr, g2.stderr)
    assert g1.window == pytest.approx(cfg.N * 0.8)
