"""Readout analysis on counted photons.

Threshold discrimination, raw and preparation-corrected single-shot
fidelity, the first-peak preparation-efficiency estimator, Poisson fits and
linear-inversion tomography with a physicality projection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .burst import BurstRecord, Dataset
from .qubit import MeasurementBasis, QubitState

log = logging.getLogger(__name__)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

R1_OUTCOME = "R1"
R2_OUTCOME = "R2"


def classify(record: BurstRecord | int, threshold: int = 1) -> str:
    """R1 if at least ``threshold`` photons were counted, else R2."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    total = record if isinstance(record, (int, np.integer)) else record.total
    return R1_OUTCOME if total >= threshold else R2_OUTCOME


def r1_fraction(ds: Dataset, threshold: int = 1) -> float:
    """Fraction of trials classified R1."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    return float(np.count_nonzero(ds.totals >= threshold)) / ds.n_trials


@dataclass(frozen=True)
class DiscriminationResult:
    p_detect_r2_given_r2: float
    p_detect_r1_given_r1: float

    @property
    def raw_fidelity(self) -> float:
        return 0.5 * (self.p_detect_r2_given_r2 + self.p_detect_r1_given_r1)


def discrimination(ds_r1: Dataset, ds_r2: Dataset, threshold: int = 1) -> DiscriminationResult:
    """Conditional readout probabilities from |r1>- and |r2>-prepared runs."""
    return DiscriminationResult(
        p_detect_r2_given_r2=1.0 - r1_fraction(ds_r2, threshold),
        p_detect_r1_given_r1=r1_fraction(ds_r1, threshold),
    )


def corrected_conditionals(result: DiscriminationResult, p0_given_r1: float,
                           eta_prep: float) -> DiscriminationResult:
    """Remove failed-preparation trials from the |r2> conditional.

    Failed |r2> preparations read out like |r1> trials, so
    ``P_obs(0|r2) = eta * P(0|r2) + (1 - eta) * P(0|r1)``.
    """
    if not 0.0 < eta_prep <= 1.0:
        raise ValueError(f"eta_prep must lie in (0, 1], got {eta_prep}")
    raw = (result.p_detect_r2_given_r2 - (1.0 - eta_prep) * p0_given_r1) / eta_prep
    corrected = min(1.0, max(0.0, raw))
    if corrected != raw:
        log.warning("corrected P(0|r2)=%.6f clamped to [0, 1]; model mismatch", raw)
    return DiscriminationResult(corrected, result.p_detect_r1_given_r1)


def corrected_mean_photons(mean_r2: float, mean_r1: float, eta_prep: float) -> float:
    """Mean |r2> photon number with the failed-preparation admixture removed."""
    if not 0.0 < eta_prep <= 1.0:
        raise ValueError(f"eta_prep must lie in (0, 1], got {eta_prep}")
    return (mean_r2 - (1.0 - eta_prep) * mean_r1) / eta_prep


def peak_area(counts: np.ndarray, edges: np.ndarray, window: tuple[float, float]) -> float:
    lo, hi = window
    centers = 0.5 * (edges[:-1] + edges[1:])
    return float(counts[(centers >= lo) & (centers < hi)].sum())


def prep_efficiency_from_peaks(profile_r1, profile_r2, peak_window: tuple[float, float]) -> float:
    """``1 - area_r2 / area_r1`` over the first-repeat window.

    Each profile is a ``(counts, edges)`` pair on a shared binning.
    """
    counts_r1, edges_r1 = profile_r1
    counts_r2, edges_r2 = profile_r2
    if not np.array_equal(edges_r1, edges_r2):
        raise ValueError("profiles must share binning")
    area_r1 = peak_area(counts_r1, edges_r1, peak_window)
    if area_r1 == 0:
        raise ValueError("r1 first-peak area is zero")
    ratio = peak_area(counts_r2, edges_r2, peak_window) / area_r1
    return min(1.0, max(0.0, 1.0 - ratio))


def poisson_pmf(n: int, mean: float) -> float:
    if mean < 0:
        raise ValueError(f"Poisson mean must be >= 0, got {mean}")
    if mean == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mean) - mean - math.lgamma(n + 1))


def fit_poisson(hist) -> float:
    """Maximum-likelihood Poisson mean of a photon-number histogram."""
    hist = np.asarray(hist, dtype=float)
    total = hist.sum()
    if total <= 0:
        raise ValueError("histogram is empty")
    return float(np.arange(len(hist)) @ hist / total)


# -- tomography -------------------------------------------------------------

@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def stokes_from_probs(p_r1: float, p_d: float, p_r: float) -> StokesVector:
    """Stokes vector from the |r1>, |D> and |R> outcome probabilities."""
    for value in (p_r1, p_d, p_r):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probabilities must lie in [0, 1], got {value}")
    return StokesVector(2 * p_d - 1, 2 * p_r - 1, 2 * p_r1 - 1)


def stokes_from_basis_probs(probs: dict[str, float], bases: dict[str, MeasurementBasis]) -> StokesVector:
    """Solve ``n_B . s = 2 p_B - 1`` for the Bloch axes of the plus states.

    With the default phase convention the axes are X, Y, Z and this reduces
    to :func:`stokes_from_probs`.
    """
    labels = ("X", "Y", "Z")
    axes = np.array([bases[b].plus_state.bloch() for b in labels])
    rhs = np.array([2 * probs[b] - 1 for b in labels])
    return StokesVector(*np.linalg.solve(axes, rhs))


def density_from_stokes(s: StokesVector) -> np.ndarray:
    return 0.5 * (IDENTITY + s.s1 * PAULI_X + s.s2 * PAULI_Y + s.s3 * PAULI_Z)


def stokes_from_density(rho: np.ndarray) -> StokesVector:
    return StokesVector(*(float(np.trace(rho @ P).real) for P in (PAULI_X, PAULI_Y, PAULI_Z)))


def _check_hermitian(rho: np.ndarray, tol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ValueError(f"density matrix must be 2x2, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace to one."""
    _check_hermitian(rho)
    herm = 0.5 * (rho + rho.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    if vals.min() >= 0:
        return np.array(rho, dtype=complex)
    vals = np.clip(vals, 0.0, None)
    vals /= vals.sum()
    return (vecs * vals) @ vecs.conj().T


def state_fidelity(rho: np.ndarray, psi: QubitState) -> float:
    v = psi.vector
    return float(min(1.0, max(0.0, np.vdot(v, rho @ v).real)))


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


@dataclass(frozen=True)
class TomographyResult:
    basis_probs: dict
    basis_stderr: dict
    stokes: StokesVector
    density_matrix: np.ndarray
    fidelity: float
    n_trials: int
    seed: int | None

    @property
    def stokes_physical(self) -> StokesVector:
        return stokes_from_density(self.density_matrix)

    def to_dict(self) -> dict:
        rho = self.density_matrix
        phys = self.stokes_physical
        return {
            "basis_probs": dict(self.basis_probs),
            "basis_stderr": dict(self.basis_stderr),
            "stokes": [self.stokes.s1, self.stokes.s2, self.stokes.s3],
            "stokes_physical": [phys.s1, phys.s2, phys.s3],
            "density_matrix": [[float(z.real), float(z.imag)] for z in rho.reshape(-1)],
            "fidelity": self.fidelity,
            "n_trials": self.n_trials,
            "seed": self.seed,
        }


def tomography(probs: dict[str, float], bases: dict[str, MeasurementBasis], target: QubitState,
               n_trials: int = 0, seed: int | None = None) -> TomographyResult:
    """Rebuild and score a state from per-basis R1 probabilities."""
    stokes = stokes_from_basis_probs(probs, bases)
    rho = project_physical(density_from_stokes(stokes))
    stderr = {b: binomial_stderr(p, n_trials) if n_trials else 0.0 for b, p in probs.items()}
    return TomographyResult(
        basis_probs=dict(probs),
        basis_stderr=stderr,
        stokes=stokes,
        density_matrix=rho,
        fidelity=state_fidelity(rho, target),
        n_trials=n_trials,
        seed=seed,
    )


def tomography_from_datasets(datasets: dict[str, Dataset], target: QubitState,
                             threshold: int = 1) -> TomographyResult:
    probs = {label: r1_fraction(ds, threshold) for label, ds in datasets.items()}
    bases = {label: ds.basis for label, ds in datasets.items()}
    first = next(iter(datasets.values()))
    return tomography(probs, bases, target, n_trials=first.n_trials, seed=first.seed)
