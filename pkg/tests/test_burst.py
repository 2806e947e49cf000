import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import burst_distribution, summary
from superatom.burst import (
    Branch,
    BurstParams,
    expected_statistics,
    loss_index_distribution,
    photon_histogram,
    repeat_areas,
    simulate_dataset,
    simulate_trial,
    substream,
    temporal_profile,
    trial_uniforms,
)
from superatom.qubit import PLUS_D, R1, R2, X_BASIS, Y_BASIS, Z_BASIS, QubitState

SEED = 20220315
BASES = {"Z": Z_BASIS, "X": X_BASIS, "Y": Y_BASIS}


def _assert_matches_oracle(state, basis, params, n=100_000, seed=SEED):
    ds = simulate_dataset(state, basis, n, params, seed)
    exp = expected_statistics(state, basis, params)
    mean = ds.totals.mean()
    p0 = np.mean(ds.totals == 0)
    se_mean = max(ds.totals.std(ddof=1), 1e-12) / math.sqrt(n)
    se_p0 = math.sqrt(exp.prob_zero * (1 - exp.prob_zero) / n)
    assert abs(mean - exp.mean_photons) <= 4 * se_mean + 1e-12
    assert abs(p0 - exp.prob_zero) <= 4 * se_p0 + 1e-12


def test_params_validation_lists_every_problem():
    with pytest.raises(ValueError) as err:
        BurstParams(p_click=1.5, s_surv=-0.1, n_repeats=0)
    text = str(err.value)
    assert "p_click" in text and "s_surv" in text and "n_repeats" in text
    assert BurstParams().emission_tau_ns == pytest.approx(400.0 / 8)


def test_no_detection_channels_gives_no_clicks():
    params = BurstParams(p_click=0.0, p_dark=0.0)
    for state in (R1, R2, PLUS_D):
        ds = simulate_dataset(state, X_BASIS, 2000, params, SEED)
        assert not ds.totals.any()


def test_perfect_blockade_is_dark():
    params = BurstParams(s_surv=1.0, eta_prep=1.0, p_dark=0.0)
    ds = simulate_dataset(R2, Z_BASIS, 5000, params, SEED)
    assert not ds.totals.any()
    assert set(ds.branches) == {Branch.BLOCKED}


def test_r1_total_is_binomial():
    p = 0.3
    params = BurstParams(p_click=p, eta_prep=1.0, p_dark=0.0)
    n = 100_000
    ds = simulate_dataset(R1, Z_BASIS, n, params, SEED)
    hist = photon_histogram(ds)
    for k in range(6):
        expected = math.comb(12, k) * p**k * (1 - p) ** (12 - k)
        assert abs(hist[k] / n - expected) < 4 * math.sqrt(expected * (1 - expected) / n)


def test_binomial_sanity_two_repeats():
    params = BurstParams(n_repeats=2, burst_window_ns=800, p_click=0.5, eta_prep=1.0, p_dark=0.0)
    n = 100_000
    hist = photon_histogram(simulate_dataset(R1, Z_BASIS, n, params, SEED))
    assert abs(hist[1] / n - 0.5) < 3 * math.sqrt(0.25 / n)


def test_single_trial_matches_substream():
    params = BurstParams(p_click=0.5, p_dark=0.5)
    for i in (0, 5):
        ds = simulate_dataset(PLUS_D, X_BASIS, i + 1, params, SEED)
        rec = simulate_trial(PLUS_D, X_BASIS, params, substream(SEED, i))
        assert rec == ds.record(i)


def test_fast_uniforms_equal_substreams():
    u = trial_uniforms(SEED, 3, 9, 17, stream=2)
    for row, i in enumerate(range(3, 9)):
        assert np.array_equal(u[row], substream(SEED, i, 2).random(17))


def test_same_seed_same_dataset_and_streams_differ():
    params = BurstParams()
    a = simulate_dataset(R1, Z_BASIS, 3000, params, SEED)
    b = simulate_dataset(R1, Z_BASIS, 3000, params, SEED)
    c = simulate_dataset(R1, Z_BASIS, 3000, params, SEED, stream=1)
    for name in ("totals", "branches", "click_trial", "click_repeat", "click_time_ns"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.totals, c.totals)


def test_chunking_does_not_change_result():
    params = BurstParams(p_dark=0.3, dark_mode="per_repeat")
    a = simulate_dataset(PLUS_D, Y_BASIS, 1000, params, SEED, chunk_size=1000)
    b = simulate_dataset(PLUS_D, Y_BASIS, 1000, params, SEED, chunk_size=37)
    assert np.array_equal(a.click_time_ns, b.click_time_ns)
    assert np.array_equal(a.branches, b.branches)


def test_record_invariants():
    params = BurstParams(p_dark=0.5)
    ds = simulate_dataset(PLUS_D, X_BASIS, 5000, params, SEED)
    period = params.repeat_period_ns
    for rec in ds.records[:2000]:
        times = [t for _, t in rec.clicks]
        assert all(0 < t < params.burst_window_ns for t in times)
        signal_reps = [r for r, t in rec.clicks]
        assert rec.total == len(rec.clicks)
        assert all(r * period <= t < (r + 1) * period for r, t in rec.clicks)
        # at most one signal and one noise click per repeat
        assert max(np.bincount(signal_reps, minlength=1)) <= 2
        if rec.branch == Branch.DARK_ONLY:
            assert rec.total >= 1
    assert np.array_equal(np.bincount(ds.click_trial, minlength=ds.n_trials), ds.totals)


def test_invalid_trial_count_and_seed():
    with pytest.raises(ValueError):
        simulate_dataset(R1, Z_BASIS, 0, BurstParams(), SEED)
    with pytest.raises(ValueError):
        simulate_dataset(R1, Z_BASIS, 10, BurstParams(), -1)


def test_expected_r1_mean_exact():
    params = BurstParams(eta_prep=1.0, p_dark=0.0, p_click=0.25)
    assert expected_statistics(R1, Z_BASIS, params).mean_photons == pytest.approx(3.0, abs=1e-15)


def test_calibrated_defaults_reproduce_headline_means():
    params = BurstParams()
    r1 = expected_statistics(R1, Z_BASIS, params)
    r2 = expected_statistics(R2, Z_BASIS, params)
    assert r1.mean_photons == pytest.approx(2.63, abs=0.005)
    assert r2.mean_photons == pytest.approx(0.19, abs=0.005)
    assert r2.mean_given_prepared == pytest.approx(0.08, abs=0.01)
    assert params.p_click == pytest.approx(0.219, abs=0.002)


def test_loss_index_distribution_sums_to_one():
    for s in (0.0, 0.3, 1.0):
        d = loss_index_distribution(5, s)
        assert d.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(d >= 0)


@pytest.mark.parametrize("mode", ["per_trial", "per_repeat"])
def test_brute_force_equivalence(mode):
    rng = np.random.default_rng(7)
    for draw in range(20):
        n = int(rng.integers(1, 4))
        label = "ZXY"[draw % 3]
        amps = rng.normal(size=2) + 1j * rng.normal(size=2)
        amps /= np.linalg.norm(amps)
        kw = dict(p_click=rng.random(), s_surv=rng.random(), p_dark=rng.random(), eta_prep=rng.random(),
                  mw_transfer_fidelity=rng.random(), phase_jitter=1.5 * rng.random())
        params = BurstParams(n_repeats=n, burst_window_ns=400.0 * n, dark_mode=mode, **kw)
        mean, p0 = summary(burst_distribution(amps, label, n, jitter=kw.pop("phase_jitter"), dark_mode=mode,
                                              fidelity=kw.pop("mw_transfer_fidelity"), **kw))
        exp = expected_statistics(QubitState(*amps), BASES[label], params)
        assert exp.mean_photons == pytest.approx(mean, abs=1e-12)
        assert exp.prob_zero == pytest.approx(p0, abs=1e-12)


CORNERS = list(itertools.product((0.0, 1.0), repeat=4))


@pytest.mark.parametrize("eta, surv, dark, click", CORNERS)
def test_branch_forcing_corners_match_oracle(eta, surv, dark, click):
    params = BurstParams(eta_prep=eta, s_surv=surv, p_dark=dark, p_click=click)
    _assert_matches_oracle(PLUS_D, X_BASIS, params, n=20_000)


def test_random_draws_match_oracle():
    rng = np.random.default_rng(11)
    states = [R1, R2, PLUS_D, QubitState.normalized(0.88, 0.48)]
    for draw in range(20):
        params = BurstParams(
            p_click=rng.uniform(0.05, 0.5), s_surv=rng.uniform(0.8, 1.0), p_dark=rng.uniform(0, 0.2),
            eta_prep=rng.uniform(0.7, 1.0), mw_transfer_fidelity=rng.uniform(0.9, 1.0),
            phase_jitter=rng.uniform(0, 1), dark_mode=("per_trial", "per_repeat")[draw % 2],
        )
        _assert_matches_oracle(states[draw % 4], BASES["ZXY"[draw % 3]], params, seed=SEED + draw)


def test_blocked_mean_monotone_on_grid():
    grid = np.linspace(0, 1, 11)
    for dark in grid:
        means = [expected_statistics(R2, Z_BASIS, BurstParams(s_surv=s, p_dark=dark)).mean_photons for s in grid]
        assert np.all(np.diff(means) <= 1e-15)
    for surv in grid:
        means = [expected_statistics(R2, Z_BASIS, BurstParams(s_surv=surv, p_dark=d)).mean_photons for d in grid]
        assert np.all(np.diff(means) >= -1e-15)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(200)))
def test_histogram_invariant_under_permutation(order):
    ds = simulate_dataset(PLUS_D, X_BASIS, 200, BurstParams(p_dark=0.2), SEED)
    shuffled = ds.permuted(order)
    assert np.array_equal(photon_histogram(shuffled), photon_histogram(ds))
    assert shuffled.record(0) == ds.record(order[0])


def test_histogram_range_and_sum():
    ds = simulate_dataset(R1, Z_BASIS, 1000, BurstParams(), SEED)
    hist = photon_histogram(ds)
    assert len(hist) == 14 and hist.sum() == 1000


def test_empty_profile_and_profile_total():
    ds = simulate_dataset(R1, Z_BASIS, 100, BurstParams(p_click=0.0, p_dark=0.0), SEED)
    counts, edges = temporal_profile(ds)
    assert not counts.any() and len(counts) == 1920 and edges[-1] == 4800
    ds = simulate_dataset(R1, Z_BASIS, 1000, BurstParams(), SEED)
    assert temporal_profile(ds)[0].sum() == ds.totals.sum()


def test_r1_peaks_have_near_equal_area():
    ds = simulate_dataset(R1, Z_BASIS, 100_000, BurstParams(), SEED)
    areas = repeat_areas(ds)
    assert len(areas) == 12
    assert areas.std() / areas.mean() < 0.10


def test_r2_first_peak_ratio_tracks_prep_failures():
    params = BurstParams()
    r1 = simulate_dataset(R1, Z_BASIS, 100_000, params, SEED, stream=0)
    r2 = simulate_dataset(R2, Z_BASIS, 100_000, params, SEED, stream=1)
    ratio = repeat_areas(r2)[0] / repeat_areas(r1)[0]
    assert ratio == pytest.approx(1 - params.eta_prep, abs=0.01)


def test_r1_zero_photon_fraction_below_poisson_reference():
    ds = simulate_dataset(R1, Z_BASIS, 100_000, BurstParams(), SEED)
    zero = np.mean(ds.totals == 0)
    # binary repeats make the count sub-Poissonian, so P(0) < e^-2.63
    assert 0.04 < zero < math.exp(-2.63)


@pytest.mark.xfail(strict=True, reason="independent binary repeats at mean 2.63 cap P(N=0) near 0.05")
def test_r1_zero_photon_fraction_in_measured_band():
    ds = simulate_dataset(R1, Z_BASIS, 100_000, BurstParams(), SEED)
    assert 0.07 <= np.mean(ds.totals == 0) <= 0.09
