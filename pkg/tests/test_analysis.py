import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from superatom.analysis import (
    DiscriminationResult,
    StokesVector,
    classify,
    corrected_conditionals,
    corrected_mean_photons,
    density_from_stokes,
    discrimination,
    fit_poisson,
    poisson_pmf,
    prep_efficiency_from_peaks,
    project_physical,
    state_fidelity,
    stokes_from_basis_probs,
    stokes_from_density,
    stokes_from_probs,
    tomography,
)
from superatom.burst import Branch, BurstParams, BurstRecord, Dataset, profile_edges
from superatom.qubit import PLUS_D, PLUS_R, R1, X_BASIS, Y_BASIS, Z_BASIS, MeasurementBasis, QubitState

BASES = {"Z": Z_BASIS, "X": X_BASIS, "Y": Y_BASIS}


def dataset_from_totals(totals, state=R1):
    totals = np.asarray(totals, dtype=np.int64)
    trial = np.repeat(np.arange(len(totals)), totals)
    rep = np.zeros(len(trial), dtype=np.int64)
    return Dataset(totals, np.zeros(len(totals), dtype=np.int8), trial, rep, rep + 1.0,
                   state, Z_BASIS, BurstParams(), seed=0)


@st.composite
def states(draw):
    v = [draw(st.floats(-1, 1)) + 1j * draw(st.floats(-1, 1)) for _ in range(2)]
    if abs(v[0]) ** 2 + abs(v[1]) ** 2 < 1e-6:
        v = [1, 0]
    return QubitState.normalized(*v)


@pytest.mark.parametrize("total, outcome", [(0, "R2"), (1, "R1"), (12, "R1")])
def test_classify(total, outcome):
    assert classify(BurstRecord(tuple((0, 1.0) for _ in range(total)), Branch.UNBLOCKED)) == outcome
    assert classify(total) == outcome


def test_classify_threshold_validation_and_higher_threshold():
    assert classify(1, threshold=2) == "R2"
    with pytest.raises(ValueError):
        classify(3, threshold=0)


def test_perfect_discrimination():
    res = discrimination(dataset_from_totals([1, 3, 12]), dataset_from_totals([0, 0]))
    assert (res.p_detect_r2_given_r2, res.p_detect_r1_given_r1, res.raw_fidelity) == (1.0, 1.0, 1.0)


@given(st.lists(st.integers(0, 13), min_size=1, max_size=50), st.lists(st.integers(0, 13), min_size=1, max_size=50),
       st.integers(1, 4))
def test_discrimination_is_a_counting_identity(a, b, threshold):
    res = discrimination(dataset_from_totals(a), dataset_from_totals(b), threshold)
    r1_hits = sum(classify(t, threshold) == "R1" for t in a)
    r2_hits = sum(classify(t, threshold) == "R2" for t in b)
    assert res.p_detect_r1_given_r1 == pytest.approx(r1_hits / len(a), abs=1e-15)
    assert res.p_detect_r2_given_r2 == pytest.approx(r2_hits / len(b), abs=1e-15)
    assert res.raw_fidelity == pytest.approx(0.5 * (res.p_detect_r1_given_r1 + res.p_detect_r2_given_r2), abs=1e-15)
    # swapping the inputs reports the complementary conditionals
    swapped = discrimination(dataset_from_totals(b), dataset_from_totals(a), threshold)
    assert swapped.p_detect_r1_given_r1 == pytest.approx(1 - res.p_detect_r2_given_r2, abs=1e-15)
    assert swapped.p_detect_r2_given_r2 == pytest.approx(1 - res.p_detect_r1_given_r1, abs=1e-15)


def test_corrected_conditionals_published_inputs():
    res = corrected_conditionals(DiscriminationResult(0.908, 0.918), 0.082, 0.955)
    assert res.p_detect_r2_given_r2 == pytest.approx(0.946921, abs=1e-6)
    assert res.p_detect_r1_given_r1 == 0.918
    assert res.raw_fidelity == pytest.approx(0.932461, abs=1e-6)


def test_corrected_mean_photons_published_inputs():
    assert corrected_mean_photons(0.19, 2.63, 0.955) == pytest.approx(0.075026, abs=1e-6)


def test_correction_identity_and_errors():
    raw = DiscriminationResult(0.9, 0.8)
    assert corrected_conditionals(raw, 0.2, 1.0) == raw
    with pytest.raises(ValueError):
        corrected_conditionals(raw, 0.2, 0.0)
    with pytest.raises(ValueError):
        corrected_mean_photons(0.1, 2.0, 0.0)


def test_correction_clamps_and_warns(caplog):
    with caplog.at_level(logging.WARNING):
        res = corrected_conditionals(DiscriminationResult(0.1, 0.5), 0.9, 0.5)
    assert res.p_detect_r2_given_r2 == 0.0
    assert "clamped" in caplog.text


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1))
def test_correction_recovers_true_mixture(p_true, p_fail, eta):
    observed = eta * p_true + (1 - eta) * p_fail
    res = corrected_conditionals(DiscriminationResult(observed, 0.5), p_fail, eta)
    assert res.p_detect_r2_given_r2 == pytest.approx(p_true, abs=1e-12)


def _profiles(first_r1, first_r2):
    edges = profile_edges(BurstParams())
    r1 = np.zeros(len(edges) - 1)
    r2 = np.zeros(len(edges) - 1)
    r1[10], r2[10] = first_r1, first_r2
    r1[200] = r2[200] = 50
    return (r1, edges), (r2, edges)


def test_prep_efficiency_examples():
    window = (0.0, 400.0)
    assert prep_efficiency_from_peaks(*_profiles(1000, 45), window) == pytest.approx(0.955, abs=1e-12)
    assert prep_efficiency_from_peaks(*_profiles(1000, 1000), window) == 0.0
    assert prep_efficiency_from_peaks(*_profiles(1000, 0), window) == 1.0
    with pytest.raises(ValueError):
        prep_efficiency_from_peaks(*_profiles(0, 10), window)
    (c1, e1), (c2, _) = _profiles(10, 1)
    with pytest.raises(ValueError):
        prep_efficiency_from_peaks((c1, e1), (c2[:-1], e1[:-1]), window)


def test_poisson_examples():
    assert poisson_pmf(0, 2.63) == pytest.approx(math.exp(-2.63), abs=1e-15)
    assert poisson_pmf(0, 2.63) == pytest.approx(0.0721, abs=5e-5)
    assert poisson_pmf(0, 0) == 1.0 and poisson_pmf(3, 0) == 0.0
    with pytest.raises(ValueError):
        poisson_pmf(1, -0.1)
    hist = [poisson_pmf(n, 2.63) for n in range(200)]
    assert fit_poisson(hist) == pytest.approx(2.63, abs=1e-12)
    with pytest.raises(ValueError):
        fit_poisson([0, 0])


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=20).filter(any))
def test_fit_poisson_is_histogram_mean(hist):
    values = np.repeat(np.arange(len(hist)), hist)
    assert fit_poisson(hist) == pytest.approx(values.mean(), rel=1e-12)


def test_stokes_examples():
    assert stokes_from_probs(1, 0.5, 0.5) == StokesVector(0, 0, 1)
    assert stokes_from_probs(0.5, 1, 0.5) == StokesVector(1, 0, 0)
    state = QubitState.normalized(0.88, 0.48)
    from superatom.qubit import born_probability
    s = stokes_from_probs(born_probability(state, R1), born_probability(state, PLUS_D), born_probability(state, PLUS_R))
    # 2ab and a^2 - b^2 of the normalized amplitudes (norm^2 = 1.0048)
    assert s.as_array() == pytest.approx([0.8448 / 1.0048, 0.0, 0.544 / 1.0048], abs=1e-6)
    with pytest.raises(ValueError):
        stokes_from_probs(1.1, 0.5, 0.5)


def test_density_examples_and_round_trip():
    assert np.allclose(density_from_stokes(StokesVector(0, 0, 0)), np.eye(2) / 2)
    assert np.allclose(density_from_stokes(StokesVector(0, 0, 1)), np.diag([1, 0]))
    s = StokesVector(0.3, -0.2, 0.5)
    assert stokes_from_density(density_from_stokes(s)).as_array() == pytest.approx(s.as_array(), abs=1e-12)


def test_projection_examples():
    rho = density_from_stokes(StokesVector(0.1, 0.2, 0.3))
    assert np.allclose(project_physical(rho), rho, atol=1e-15)
    out = stokes_from_density(project_physical(density_from_stokes(StokesVector(1.2, 0, 0))))
    assert out.as_array() == pytest.approx([1, 0, 0], abs=1e-12)
    s = np.array([0.6, 0.8, 0.6])
    out = stokes_from_density(project_physical(density_from_stokes(StokesVector(*s))))
    assert out.as_array() == pytest.approx(s / np.linalg.norm(s), abs=1e-12)
    with pytest.raises(ValueError):
        project_physical(np.array([[0.5, 1], [0, 0.5]]))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_projection_is_idempotent_and_physical(a, b, c):
    once = project_physical(density_from_stokes(StokesVector(a, b, c)))
    assert np.linalg.eigvalsh(once).min() >= -1e-12
    assert np.trace(once).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(project_physical(once), once, atol=1e-12)
    assert stokes_from_density(once).norm <= 1 + 1e-12


def test_fidelity_examples():
    assert state_fidelity(np.outer(PLUS_D.vector, PLUS_D.vector.conj()), PLUS_D) == pytest.approx(1.0)
    assert state_fidelity(np.eye(2) / 2, PLUS_R) == pytest.approx(0.5)


@given(states(), st.floats(0, 2 * math.pi))
def test_tomography_round_trip(state, x_phase):
    from superatom.qubit import born_probability
    bases = {b: MeasurementBasis(b, x_phase) for b in "ZXY"}
    probs = {b: born_probability(state, basis.plus_state) for b, basis in bases.items()}
    result = tomography(probs, bases, state)
    assert result.fidelity == pytest.approx(1.0, abs=1e-10)
    assert stokes_from_basis_probs(probs, bases).as_array() == pytest.approx(state.bloch(), abs=1e-10)


def test_tomography_report_layout():
    probs = {"Z": 0.5, "X": 0.97, "Y": 0.5}
    out = tomography(probs, BASES, PLUS_D, n_trials=1000, seed=3).to_dict()
    assert set(out) >= {"basis_probs", "stokes", "density_matrix", "fidelity", "n_trials", "seed"}
    assert len(out["density_matrix"]) == 4 and all(len(z) == 2 for z in out["density_matrix"])
    assert out["fidelity"] == pytest.approx(0.97)
    assert out["basis_stderr"]["X"] == pytest.approx(math.sqrt(0.97 * 0.03 / 1000))
