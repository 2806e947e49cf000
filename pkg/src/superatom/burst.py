"""Seeded Monte Carlo of the blockade-conditioned photon burst readout.

One trial: prepare the superatom, rotate into the measurement basis,
project, then run ``n_repeats`` excite/retrieve cycles. An |r2> projection
blockades retrieval until the blockading excitation is lost; anything else
emits a train of single photons that each reach the detector with
probability ``p_click``. Noise clicks are added on top.

Randomness is counter based: trial ``i`` draws a fixed block of uniforms
from a Philox stream keyed by the master seed with counter ``i``, so a
dataset is bit-identical however its trials are split across workers.
:func:`expected_statistics` is the closed-form expectation of the same
generative model and serves as its oracle.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .qubit import QubitState, MeasurementBasis, measured_r2_probability

DARK_MODES = ("per_trial", "per_repeat")
# Uniform draws per trial header; each repeat adds five more.
_HEADER_SLOTS = 5
_SLOTS_PER_REPEAT = 5
_DEFAULT_CHUNK = 8192


class Branch(enum.IntEnum):
    UNBLOCKED = 0
    BLOCKED = 1
    PREP_FAIL = 2
    DARK_ONLY = 3


@dataclass(frozen=True)
class BurstParams:
    """Burst protocol and noise parameters. Times are in nanoseconds.

    ``p_dark`` is the probability of a noise click per trial, or per repeat
    when ``dark_mode == "per_repeat"``. ``emission_tau_ns`` defaults to one
    eighth of the repeat period. ``phase_jitter`` is the standard deviation
    (rad) of the MW phase error on the pi/2 basis pulses.
    """

    n_repeats: int = 12
    burst_window_ns: float = 4800.0
    p_click: float = 0.21798597168895018
    s_surv: float = 0.9960381553535096
    p_dark: float = 0.012
    eta_prep: float = 0.955
    mw_transfer_fidelity: float = 0.997
    emission_tau_ns: float | None = None
    bin_size_ns: float = 2.5
    dark_mode: str = "per_trial"
    phase_jitter: float = 0.0

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ValueError("invalid burst parameters: " + "; ".join(errors))
        if self.emission_tau_ns is None:
            object.__setattr__(self, "emission_tau_ns", self.repeat_period_ns / 8.0)

    def problems(self) -> list[str]:
        errors = []
        for name in ("p_click", "s_surv", "p_dark", "eta_prep", "mw_transfer_fidelity"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
                errors.append(f"{name}={value!r} not a probability in [0, 1]")
        if not (isinstance(self.n_repeats, int) and self.n_repeats >= 1):
            errors.append(f"n_repeats={self.n_repeats!r} must be an integer >= 1")
        for name in ("burst_window_ns", "bin_size_ns"):
            if not getattr(self, name) > 0:
                errors.append(f"{name}={getattr(self, name)!r} must be > 0")
        if self.emission_tau_ns is not None and not self.emission_tau_ns > 0:
            errors.append(f"emission_tau_ns={self.emission_tau_ns!r} must be > 0")
        if self.dark_mode not in DARK_MODES:
            errors.append(f"dark_mode={self.dark_mode!r} must be one of {DARK_MODES}")
        if not self.phase_jitter >= 0:
            errors.append(f"phase_jitter={self.phase_jitter!r} must be >= 0")
        return errors

    @property
    def repeat_period_ns(self) -> float:
        return self.burst_window_ns / self.n_repeats

    @property
    def n_slots(self) -> int:
        return _HEADER_SLOTS + _SLOTS_PER_REPEAT * self.n_repeats

    @property
    def max_photons(self) -> int:
        extra = self.n_repeats if self.dark_mode == "per_repeat" else 1
        return self.n_repeats + extra

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "BurstParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class BurstRecord:
    """One trial: clicks as ``(repeat_index, timestamp_ns)`` pairs."""

    clicks: tuple[tuple[int, float], ...]
    branch: Branch

    @property
    def total(self) -> int:
        return len(self.clicks)


@dataclass
class Dataset:
    """Columnar store of simulated trials.

    Per-trial arrays ``totals`` and ``branches``; per-click arrays
    ``click_trial``, ``click_repeat`` and ``click_time_ns`` sorted by trial,
    then time.
    """

    totals: np.ndarray
    branches: np.ndarray
    click_trial: np.ndarray
    click_repeat: np.ndarray
    click_time_ns: np.ndarray
    prepared_state: QubitState
    basis: MeasurementBasis
    params: BurstParams
    seed: int
    stream: int = 0

    def __post_init__(self):
        if len(self.totals) == 0:
            raise ValueError("dataset must contain at least one trial")

    @property
    def n_trials(self) -> int:
        return len(self.totals)

    def record(self, i: int) -> BurstRecord:
        lo, hi = np.searchsorted(self.click_trial, [i, i + 1])
        clicks = tuple(
            (int(r), float(t)) for r, t in zip(self.click_repeat[lo:hi], self.click_time_ns[lo:hi])
        )
        return BurstRecord(clicks, Branch(int(self.branches[i])))

    @property
    def records(self) -> list[BurstRecord]:
        return [self.record(i) for i in range(self.n_trials)]

    def permuted(self, order) -> "Dataset":
        """Same trials in a different order (click arrays re-sorted)."""
        order = np.asarray(order)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        new_trial = inverse[self.click_trial]
        idx = np.lexsort((self.click_time_ns, new_trial))
        return replace(
            self,
            totals=self.totals[order],
            branches=self.branches[order],
            click_trial=new_trial[idx],
            click_repeat=self.click_repeat[idx],
            click_time_ns=self.click_time_ns[idx],
        )


# -- random streams ---------------------------------------------------------

def substream(master_seed: int, trial_index: int, stream: int = 0) -> np.random.Generator:
    """Generator for one trial.

    Philox keyed by the master seed with the trial index in the top counter
    word; ``stream`` separates datasets drawn under one seed.
    """
    return np.random.Generator(
        np.random.Philox(key=master_seed, counter=[0, 0, stream, trial_index])
    )


def trial_uniforms(master_seed: int, start: int, stop: int, n_slots: int, stream: int = 0) -> np.ndarray:
    """Rows ``start..stop-1`` of the per-trial uniform matrix.

    Equal to ``substream(seed, i, stream).random(n_slots)`` row by row, but
    reuses one bit generator by resetting its counter.
    """
    bitgen = np.random.Philox(key=master_seed)
    state = bitgen.state
    out = np.empty((stop - start, n_slots))
    for row, i in enumerate(range(start, stop)):
        state["state"]["counter"] = np.array([0, 0, stream, i], dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bitgen.state = state
        out[row] = (bitgen.random_raw(n_slots) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return out


def _open(u: np.ndarray) -> np.ndarray:
    # [0, 1) -> (0, 1) so timestamps stay strictly inside their interval
    return u + 2.0**-54


# -- generative model -------------------------------------------------------

def _pulse_area(basis: MeasurementBasis) -> float:
    return basis.rotation.theta


def flip_probability(basis: MeasurementBasis, params: BurstParams) -> float:
    """Population-flip probability of the basis pulse, (1 - F) per pi of area."""
    return min(1.0, (1.0 - params.mw_transfer_fidelity) * _pulse_area(basis) / math.pi)


def _jitter_coefficients(state: QubitState, basis: MeasurementBasis) -> tuple[float, float, float]:
    # p_r2(delta) = a + b cos(delta) + c sin(delta) for a phase error delta
    p0 = measured_r2_probability(state, basis, 0.0)
    p_pi = measured_r2_probability(state, basis, math.pi)
    p_half = measured_r2_probability(state, basis, math.pi / 2)
    a = 0.5 * (p0 + p_pi)
    return a, 0.5 * (p0 - p_pi), p_half - a


def blockade_probability(state: QubitState, basis: MeasurementBasis, params: BurstParams) -> float:
    """P(projected onto |r2>) for a successfully prepared trial.

    Averages over the Gaussian MW phase jitter and includes the pulse flip.
    """
    a, b, _ = _jitter_coefficients(state, basis)
    if _pulse_area(basis) > 0:
        p_r2 = a + b * math.exp(-0.5 * params.phase_jitter**2)
    else:
        p_r2 = abs(state.a_r2) ** 2
    q = flip_probability(basis, params)
    return p_r2 * (1.0 - q) + (1.0 - p_r2) * q


def _simulate_block(u: np.ndarray, first_trial: int, state, basis, params: BurstParams):
    m = u.shape[0]
    n = params.n_repeats
    period = params.repeat_period_ns
    tau = params.emission_tau_ns

    prep_ok = u[:, 0] < params.eta_prep
    if _pulse_area(basis) > 0 and params.phase_jitter > 0:
        a, b, c = _jitter_coefficients(state, basis)
        delta = params.phase_jitter * ndtri(_open(u[:, 2]))
        p_r2 = np.clip(a + b * np.cos(delta) + c * np.sin(delta), 0.0, 1.0)
        q = flip_probability(basis, params)
        p_block = p_r2 * (1.0 - q) + (1.0 - p_r2) * q
    else:
        p_block = blockade_probability(state, basis, params)
    blocked = prep_ok & (u[:, 1] < p_block)

    base = _HEADER_SLOTS
    surv_u = u[:, base : base + n]
    click_u = u[:, base + n : base + 2 * n]
    emit_u = u[:, base + 2 * n : base + 3 * n]
    dark_rep_u = u[:, base + 3 * n : base + 4 * n]
    dark_rep_t = u[:, base + 4 * n : base + 5 * n]

    # first repeat at which the blockade has been lost (n if never)
    lost = surv_u >= params.s_surv
    loss_index = np.where(lost.any(axis=1), lost.argmax(axis=1), n)
    loss_index = np.where(blocked, loss_index, 0)
    repeats = np.arange(n)
    signal = (click_u < params.p_click) & (repeats[None, :] >= loss_index[:, None])

    truncation = -math.expm1(-period / tau)
    emit_t = -tau * np.log1p(-_open(emit_u) * truncation)
    signal_t = repeats[None, :] * period + emit_t

    sig_trial, sig_rep = np.nonzero(signal)
    sig_time = signal_t[sig_trial, sig_rep]

    if params.dark_mode == "per_trial":
        dark = u[:, 3] < params.p_dark
        dark_trial = np.nonzero(dark)[0]
        dark_time = _open(u[dark_trial, 4]) * params.burst_window_ns
        dark_rep = np.minimum((dark_time // period).astype(np.int64), n - 1)
    else:
        dark = dark_rep_u < params.p_dark
        dark_trial, dark_rep = np.nonzero(dark)
        dark_time = (dark_rep + _open(dark_rep_t[dark_trial, dark_rep])) * period

    n_signal = signal.sum(axis=1)
    n_dark = np.bincount(dark_trial, minlength=m)
    totals = n_signal + n_dark

    branches = np.full(m, Branch.UNBLOCKED, dtype=np.int8)
    branches[blocked] = Branch.BLOCKED
    branches[~prep_ok] = Branch.PREP_FAIL
    branches[(n_signal == 0) & (n_dark > 0)] = Branch.DARK_ONLY

    trial = np.concatenate([sig_trial, dark_trial]).astype(np.int64)
    rep = np.concatenate([sig_rep, dark_rep]).astype(np.int64)
    time = np.concatenate([sig_time, dark_time])
    order = np.lexsort((time, trial))
    return (
        totals.astype(np.int64),
        branches,
        trial[order] + first_trial,
        rep[order],
        time[order],
    )


def simulate_trial(state: QubitState, basis: MeasurementBasis, params: BurstParams,
                   rng: np.random.Generator) -> BurstRecord:
    """Run one measurement trial, drawing its uniforms from ``rng``."""
    u = rng.random(params.n_slots)[None, :]
    totals, branches, _, rep, time = _simulate_block(u, 0, state, basis, params)
    clicks = tuple((int(r), float(t)) for r, t in zip(rep, time))
    return BurstRecord(clicks, Branch(int(branches[0])))


def _run_chunk(args):
    seed, stream, start, stop, state, basis, params = args
    u = trial_uniforms(seed, start, stop, params.n_slots, stream)
    return _simulate_block(u, start, state, basis, params)


def simulate_dataset(state: QubitState, basis: MeasurementBasis, n_trials: int,
                     params: BurstParams, master_seed: int, workers: int = 1,
                     stream: int = 0, chunk_size: int = _DEFAULT_CHUNK) -> Dataset:
    """Simulate ``n_trials`` independent trials.

    Trial ``i`` always uses ``substream(master_seed, i, stream)``;
    ``workers > 1`` spreads chunks over processes without changing the result.
    """
    if not (isinstance(n_trials, (int, np.integer)) and n_trials >= 1):
        raise ValueError(f"n_trials must be >= 1, got {n_trials!r}")
    if not 0 <= master_seed < 2**64:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    jobs = [
        (master_seed, stream, lo, min(lo + chunk_size, n_trials), state, basis, params)
        for lo in range(0, n_trials, chunk_size)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(job) for job in jobs]
    cols = [np.concatenate([p[k] for p in parts]) for k in range(5)]
    return Dataset(*cols, prepared_state=state, basis=basis, params=params, seed=master_seed, stream=stream)


# -- analytic oracle --------------------------------------------------------

@dataclass(frozen=True)
class ExpectedStats:
    """Exact expectations of the generative model.

    ``mean_given_prepared`` conditions on successful superatom preparation,
    i.e. removes the PREP_FAIL admixture but keeps noise clicks.
    """

    mean_photons: float
    prob_zero: float
    prob_geq1: float
    mean_given_prepared: float
    weights: dict = field(default_factory=dict)


def loss_index_distribution(n: int, s_surv: float) -> np.ndarray:
    """P(blockade first lost before repeat j), j = 0..n-1, and P(never) at j = n."""
    j = np.arange(n + 1)
    probs = s_surv ** j * (1.0 - s_surv)
    probs[n] = s_surv**n
    return probs


def expected_statistics(state: QubitState, basis: MeasurementBasis, params: BurstParams) -> ExpectedStats:
    n = params.n_repeats
    p = params.p_click
    w_fail = 1.0 - params.eta_prep
    w_block = params.eta_prep * blockade_probability(state, basis, params)
    w_free = params.eta_prep - w_block

    loss = loss_index_distribution(n, params.s_surv)
    live = n - np.arange(n + 1)
    mean_free = n * p
    p0_free = (1.0 - p) ** n
    mean_block = p * float(loss @ live)
    p0_block = float(loss @ (1.0 - p) ** live)

    if params.dark_mode == "per_trial":
        dark_mean, no_dark = params.p_dark, 1.0 - params.p_dark
    else:
        dark_mean, no_dark = n * params.p_dark, (1.0 - params.p_dark) ** n

    signal_mean = (w_fail + w_free) * mean_free + w_block * mean_block
    prob_zero = ((w_fail + w_free) * p0_free + w_block * p0_block) * no_dark
    if params.eta_prep > 0:
        given_prepared = (w_free * mean_free + w_block * mean_block) / params.eta_prep + dark_mean
    else:
        given_prepared = float("nan")
    return ExpectedStats(
        mean_photons=signal_mean + dark_mean,
        prob_zero=prob_zero,
        prob_geq1=1.0 - prob_zero,
        mean_given_prepared=given_prepared,
        weights={"PREP_FAIL": w_fail, "BLOCKED": w_block, "UNBLOCKED": w_free},
    )


# -- histograms -------------------------------------------------------------

def photon_histogram(ds: Dataset) -> np.ndarray:
    """Trial counts indexed by total photon number N = 0..max_photons."""
    size = max(ds.params.max_photons, int(ds.totals.max())) + 1
    return np.bincount(ds.totals, minlength=size)


def profile_edges(params: BurstParams) -> np.ndarray:
    n_bins = int(math.ceil(params.burst_window_ns / params.bin_size_ns - 1e-9))
    return np.arange(n_bins + 1) * params.bin_size_ns


def temporal_profile(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Click-time histogram over the burst window; returns ``(counts, edges)``."""
    edges = profile_edges(ds.params)
    idx = np.minimum((ds.click_time_ns // ds.params.bin_size_ns).astype(np.int64), len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1)
    return counts, edges


def repeat_areas(ds: Dataset) -> np.ndarray:
    """Click counts per repeat period (peak areas of the temporal profile)."""
    return np.bincount(ds.click_repeat, minlength=ds.params.n_repeats)
