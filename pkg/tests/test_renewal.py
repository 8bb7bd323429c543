import numpy as np
import pytest

from ionsense.approx import blinking_rates, bright_manifold_ee
from ionsense.errors import EmptyRecords, InvalidEfficiency, \
    TruncationFailure
from ionsense.model import ModelParams
from ionsense.renewal import EmissionRecord, WtdCache, batch_log_likelihood, \
    build_wtd, detection_rate, load_records, log_likelihood, p0_eval, \
    record_stream, sample_record, sample_records, sample_waits, save_records


def test_two_level_closed_form(twolevel):
    # resonance fluorescence: W = 16 g O^2/gbar^2 e^{-g tau/2} sinh^2(gbar tau/4)
    tbl = build_wtd(twolevel)
    gg, om = 0.95, 0.19
    gbar = np.sqrt(gg**2 - 16 * om**2)
    taus = np.array([0.1, 1.0, 5.0, 20.0, 60.0])
    closed = (16 * gg * om**2 / gbar**2 * np.exp(-gg * taus / 2)
              * np.sinh(gbar * taus / 4)**2)
    assert np.allclose(tbl.w_eval(taus), closed, rtol=1e-10)


def test_wtd_mass_and_monotonic_p0(setup1, setup2):
    for p in (setup1.replace(eta_g=0.01), setup2):
        tbl = build_wtd(p)
        assert 1 - 1e-4 <= tbl.total_mass <= 1 + 1e-12
        assert tbl.p0_values[0] <= 1.0
        assert np.all(np.diff(tbl.p0_values) <= 1e-12)
        assert np.all(tbl.w_values >= 0)


def test_w_is_minus_dp0(setup1, setup2):
    eps = np.finfo(float).eps
    for p in (setup1.replace(eta_g=0.01), setup2):
        tbl = build_wtd(p)
        taus = tbl.tau_grid[::25]
        w = tbl.w_eval(taus)
        # balance roundoff against curvature per point: the third-derivative
        # scale of P0 fixes the optimal central-difference step, and points
        # whose best achievable FD error exceeds the tolerance are skipped
        # (at very small tau, W is below double-precision FD resolution)
        m3 = np.zeros_like(taus)
        for lam, b in zip(tbl.p0_eigenvalues, tbl.p0_coef):
            m3 += np.abs(b) * np.abs(lam)**3 * np.exp(lam.real * taus)
        delta = np.cbrt(3 * eps / np.maximum(m3, 1e-300))
        fd_floor = eps / delta + m3 * delta**2 / 6
        mask = (w > 1e-12 * w.max()) & (fd_floor < 0.3e-6 * w)
        assert mask.sum() > taus.size // 4
        deriv = -(tbl.p0_eval(taus + delta) - tbl.p0_eval(taus - delta)) \
            / (2 * delta)
        assert np.max(np.abs(deriv[mask] - w[mask]) / w[mask]) < 1e-6


def test_blinking_two_plateau_shape():
    from ionsense.approx import wtd_blinking_ansatz
    from ionsense.model import preset
    p = preset("setup1", omega_d_ratio=0.001).replace(eta_g=0.01)
    tbl = build_wtd(p)
    rates = blinking_rates(p)
    taus = np.geomspace(rates.t_cross, 2 / rates.gamma2, 20)
    ansatz = wtd_blinking_ansatz(rates, taus)
    assert np.max(np.abs(tbl.w_eval(taus) - ansatz) / ansatz) < 0.1


def test_setup2_modulation_period(setup2):
    from ionsense.approx import darkstate_perturbation
    omega = darkstate_perturbation(setup2).omega_mod
    period = 2 * np.pi / omega
    tbl = build_wtd(setup2)
    taus = np.arange(500.0, 6.5 * period, period / 60)
    w = tbl.w_eval(taus)
    peaks = [taus[i] for i in range(1, len(taus) - 1)
             if w[i] > w[i - 1] and w[i] > w[i + 1]]
    spacing = np.diff(peaks)
    assert np.allclose(spacing, period, rtol=0.01)


def test_p0_basics(setup1, setup2):
    tbl1 = build_wtd(setup1)
    assert p0_eval(tbl1, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert p0_eval(tbl1, tbl1.tau_max) < 1e-6
    # the dark state keeps the no-detection plateau orders of magnitude higher
    p1 = setup1.replace(omega_u=setup1.omega_e)
    tbl1m = build_wtd(p1)
    tbl2 = build_wtd(setup2)
    assert p0_eval(tbl2, 1e4) / p0_eval(tbl1m, 1e4) >= 1e2


def test_detection_rate(setup1):
    assert detection_rate(setup1.replace(eta_g=0.0)) == 0.0
    assert detection_rate(setup1.replace(eta_g=0.5)) == pytest.approx(
        2 * detection_rate(setup1.replace(eta_g=0.25)), rel=1e-12)


def test_renewal_identity(setup1, setup2):
    for p in (setup1, setup1.replace(eta_g=0.01), setup2):
        tbl = build_wtd(p)
        assert detection_rate(p) * tbl.mean_wait() == pytest.approx(1.0, rel=1e-3)


def test_build_wtd_requires_detection(setup1):
    with pytest.raises(InvalidEfficiency):
        build_wtd(setup1.replace(eta_g=0.0))


def test_population_trapping_detected():
    # no repump: population leaks into the metastable level and stays there
    p = ModelParams(omega_e=0.19, omega_d=1.9e-3, omega_u=0.0, delta_u=0.0,
                    gamma_g=0.95, gamma_u=0.05)
    with pytest.raises(TruncationFailure):
        build_wtd(p)


def test_record_window_shorter_than_first_wait(setup1):
    tbl = build_wtd(setup1)
    t = 1e-6
    rec = sample_record(setup1, t, 3, tbl)
    assert rec.n_detections == 0
    assert rec.tail == t


def test_sampling_moment_match(setup1):
    tbl = build_wtd(setup1)
    rec = sample_record(setup1, 1e6, 42, tbl)
    mean, n = rec.waits.mean(), rec.n_detections
    se = rec.waits.std(ddof=1) / np.sqrt(n)
    assert abs(mean - tbl.mean_wait()) < 3 * se


def test_sampling_tail_mass_matches_slow_weight():
    from ionsense.model import preset
    p = preset("setup1", omega_d_ratio=0.0025).replace(eta_g=0.01)
    tbl = build_wtd(p)
    rates = blinking_rates(p)
    rec = sample_record(p, 1.3e8, 7, tbl)
    frac = np.mean(rec.waits > rates.t_cross)
    se = np.sqrt(frac * (1 - frac) / rec.n_detections)
    # tail mass of the two-exponential ansatz beyond the crossover
    expected = ((1 - rates.p_weight) * np.exp(-rates.gamma1 * rates.t_cross)
                + rates.p_weight * np.exp(-rates.gamma2 * rates.t_cross))
    assert abs(frac - expected) < 3 * se
    assert expected == pytest.approx(rates.p_weight, rel=0.10)


def test_sampling_ks_against_spectral_cdf(setup1):
    tbl = build_wtd(setup1)
    waits = sample_waits(tbl, 100_000, record_stream(2024, 0))
    cdf = np.sort(1.0 - tbl.p0_eval(waits))
    grid = np.arange(1, waits.size + 1) / waits.size
    ks = np.max(np.maximum(np.abs(cdf - grid),
                           np.abs(cdf - grid + 1.0 / waits.size)))
    assert ks < 1.36 / np.sqrt(waits.size) * 1.5


def test_tail_weight_scales_inversely_with_efficiency():
    # tail weight of the slow component scales as 1/eta_g (derived for the
    # reduced blinking system); estimated from counts beyond T*, where T*
    # clears every faster spectral mode, and corrected for the slow decay
    # accumulated up to T*
    from ionsense.model import preset
    scaled = {}
    windows = {1.0: 6e7, 0.1: 6e7, 0.01: 6e7}
    for eta, t in windows.items():
        p = preset("threelevel", omega_d_ratio=0.005).replace(eta_g=eta)
        tbl = build_wtd(p)
        rates = blinking_rates(p)
        decays = np.sort(np.abs(tbl.w_eigenvalues.real))
        second = decays[decays > 2 * decays[0]][0]
        t_star = max(12.0 / second, rates.t_cross)
        rec = sample_record(p, t, 17, tbl)
        frac = np.mean(rec.waits > t_star)
        scaled[eta] = frac * np.exp(rates.gamma2 * t_star) * eta
    for eta in (0.1, 0.01):
        assert abs(scaled[eta] - scaled[1.0]) / scaled[1.0] < 0.15


def test_stream_independence_and_determinism(setup1):
    tbl = build_wtd(setup1)
    a = sample_record(setup1, 1e4, record_stream(5, 0), tbl)
    b = sample_record(setup1, 1e4, record_stream(5, 0), tbl)
    c = sample_record(setup1, 1e4, record_stream(5, 1), tbl)
    assert np.array_equal(a.waits, b.waits)
    assert not np.array_equal(a.waits, c.waits)


def test_batched_sampling_equals_sequential(setup1):
    tbl = build_wtd(setup1)
    batched = sample_records(setup1, 2e4, 3, 31, tbl)
    for i, rec in enumerate(batched):
        ref = sample_record(setup1, 2e4, record_stream(31, i), tbl)
        assert np.array_equal(rec.waits, ref.waits)
        assert rec.tail == ref.tail


def test_empty_record_loglik(setup1):
    tbl = build_wtd(setup1)
    rec = EmissionRecord(waits=np.array([]), tail=50.0, window=50.0)
    assert log_likelihood(rec, setup1, tbl) == pytest.approx(
        np.log(p0_eval(tbl, 50.0)))


def test_loglik_concatenation(setup1):
    tbl = build_wtd(setup1)
    rec_a = EmissionRecord(waits=np.array([2.0, 3.0]), tail=0.0, window=5.0)
    rec_b = EmissionRecord(waits=np.array([1.0]), tail=2.0, window=3.0)
    rec_ab = EmissionRecord(waits=np.array([2.0, 3.0, 1.0]), tail=2.0,
                            window=8.0)
    ll = lambda r: log_likelihood(r, setup1, tbl)
    assert ll(rec_ab) == pytest.approx(ll(rec_a) + ll(rec_b), rel=1e-12)


def test_batch_loglik_matches_single(setup1):
    tbl = build_wtd(setup1)
    records = sample_records(setup1, 2e3, 5, 11, tbl)
    records.append(EmissionRecord(waits=np.array([]), tail=2e3, window=2e3))
    batch = batch_log_likelihood(records, tbl)
    singles = [log_likelihood(r, setup1, tbl) for r in records]
    assert np.allclose(batch, singles, rtol=1e-9)


def test_kl_positivity(setup1):
    truth = build_wtd(setup1, points=64)
    other = build_wtd(setup1.with_omega_d(1.5 * setup1.omega_d), points=64)
    records = sample_records(setup1, 2e3, 1000, 13, truth)
    gaps = batch_log_likelihood(records, truth) \
        - batch_log_likelihood(records, other)
    assert gaps.mean() > 3 * gaps.std(ddof=1) / np.sqrt(len(records))


def test_record_invariants():
    with pytest.raises(ValueError):
        EmissionRecord(waits=np.array([1.0, -2.0]), tail=0.0, window=1.0)
    with pytest.raises(ValueError):
        EmissionRecord(waits=np.array([1.0]), tail=0.5, window=2.0)


def test_record_serialization_roundtrip(tmp_path, setup1):
    tbl = build_wtd(setup1)
    records = sample_records(setup1, 5e3, 3, 23, tbl)
    records.append(EmissionRecord(waits=np.array([]), tail=5e3, window=5e3))
    path = tmp_path / "records.txt"
    save_records(records, path)
    back = load_records(path)
    assert len(back) == len(records)
    for orig, rec in zip(records, back):
        assert np.array_equal(orig.waits, rec.waits)
        assert rec.tail == orig.tail and rec.window == orig.window
    with pytest.raises(EmptyRecords):
        save_records([], tmp_path / "empty.txt")


def test_wtd_cache_counts(setup1):
    cache = WtdCache(setup1, points=64)
    t1 = cache.get(setup1.omega_d)
    t2 = cache.get(setup1.omega_d)
    assert t1 is t2
    assert (cache.misses, cache.hits) == (1, 1)
    cache.get(2 * setup1.omega_d)
    assert (cache.misses, cache.hits) == (2, 1)


def test_wtd_cache_eviction(setup1):
    cache = WtdCache(setup1, points=64, max_entries=2)
    for k in range(4):
        cache.get((1 + 0.1 * k) * setup1.omega_d)
    assert len(cache._tables) == 2
