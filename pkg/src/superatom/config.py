"""Run configuration: flat JSON schema, defaults and validation.

The defaults reproduce the experiment; ``data/defaults.json`` is the
same set written to disk.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .burst import DARK_MODES, BurstParams
from .model import EfficiencyModel, GeometryParams, LossChain, RabiParams
from .qubit import X_BASIS_PHASE, MeasurementBasis, parse_state

SCHEMA_VERSION = 1
_PROBABILITIES = (
    "p_click", "s_surv", "p_dark", "eta_prep", "mw_transfer_fidelity", "rabi_amplitude", "p",
    "eta_out", "eta_fiber", "eta_pockels", "eta_spd", "eta_collection_freespace",
    "target_p0_r2", "target_p_geq1_r1",
)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION

    # photon burst
    n_repeats: int = 12
    burst_window_ns: float = 4800.0
    p_click: float = 0.21798597168895018
    s_surv: float = 0.9960381553535096
    p_dark: float = 0.012
    dark_mode: str = "per_trial"
    eta_prep: float = 0.955
    mw_transfer_fidelity: float = 0.997
    emission_tau_ns: float | None = None
    bin_size_ns: float = 2.5
    phase_jitter: float = 0.0

    # collective Rabi oscillation; omega in rad/s, gamma in 1/s
    rabi_omega: float = 2 * math.pi * 2.9e6
    rabi_gamma: float = 0.0
    rabi_amplitude: float = 1.0
    rabi_t_start_ns: float = 0.0
    rabi_t_stop_ns: float = 1000.0
    rabi_t_step_ns: float = 1.0

    # retrieval efficiency model and optical chain
    k: float = 0.16620498614958448
    p: float = 1.0
    finesse: float = 19.5
    od: float = 1.9
    eta_out: float = 0.80
    eta_fiber: float = 0.859
    eta_pockels: float = 0.85
    eta_spd: float = 0.68
    eta_collection_freespace: float = 0.90

    # geometry, micrometres
    blockade_radius_um: float = 9.0
    excitation_radius_um: float = 6.5

    # run control
    n_trials: int = 100_000
    master_seed: int = 20220315
    workers: int = 1
    out_dir: str = "out"
    states: list[str] = field(default_factory=lambda: ["r1", "r2"])
    basis: str = "Z"
    tomo_state: str = "D"
    x_basis_phase: float = X_BASIS_PHASE
    threshold: int = 1
    peak_window_ns: list[float] | None = None

    # calibration
    target_mean_r1: float | None = 2.63
    target_mean_r2: float | None = 0.19
    target_p0_r2: float | None = 0.908
    target_p_geq1_r1: float | None = 0.918
    calibrate_free: list[str] = field(default_factory=lambda: ["p_click", "s_surv"])

    # efficiency-vs-OD fitting
    fit_mode: str = "freespace"
    fit_fixed_p: float | None = None
    fit_chain: float = 1.0
    predict_finesse: float | None = None

    # -- derived objects ---------------------------------------------------

    def burst_params(self) -> BurstParams:
        return BurstParams(
            n_repeats=self.n_repeats,
            burst_window_ns=self.burst_window_ns,
            p_click=self.p_click,
            s_surv=self.s_surv,
            p_dark=self.p_dark,
            eta_prep=self.eta_prep,
            mw_transfer_fidelity=self.mw_transfer_fidelity,
            emission_tau_ns=self.emission_tau_ns,
            bin_size_ns=self.bin_size_ns,
            dark_mode=self.dark_mode,
            phase_jitter=self.phase_jitter,
        )

    def rabi_params(self) -> RabiParams:
        return RabiParams(self.rabi_omega, self.rabi_gamma, self.rabi_amplitude)

    def efficiency_model(self, cavity: bool = True) -> EfficiencyModel:
        if cavity:
            return EfficiencyModel.cavity(self.k, self.p, self.finesse)
        return EfficiencyModel(self.k, self.p)

    def loss_chain(self) -> LossChain:
        return LossChain(
            (
                ("cavity_output", self.eta_out),
                ("fiber", self.eta_fiber),
                ("pockels", self.eta_pockels),
                ("detector", self.eta_spd),
            )
        )

    def geometry(self) -> GeometryParams:
        return GeometryParams(self.blockade_radius_um, self.excitation_radius_um)

    def measurement_basis(self, label: str | None = None) -> MeasurementBasis:
        return MeasurementBasis(label or self.basis, self.x_basis_phase)

    def targets(self) -> dict[str, float]:
        names = ("mean_r1", "mean_r2", "p0_r2", "p_geq1_r1")
        return {n: getattr(self, f"target_{n}") for n in names if getattr(self, f"target_{n}") is not None}

    def peak_window(self) -> tuple[float, float]:
        if self.peak_window_ns is None:
            return (0.0, self.burst_window_ns / self.n_repeats)
        lo, hi = self.peak_window_ns
        return (float(lo), float(hi))

    # -- validation and persistence ------------------------------------------

    def problems(self) -> list[str]:
        out = []
        for name in _PROBABILITIES:
            value = getattr(self, name)
            if value is None and name.startswith("target_"):
                continue
            if not (isinstance(value, (int, float)) and not isinstance(value, bool) and 0.0 <= value <= 1.0):
                out.append(f"{name}: {value!r} is not a probability in [0, 1]")
        if self.schema_version != SCHEMA_VERSION:
            out.append(f"schema_version: {self.schema_version!r} (this build reads {SCHEMA_VERSION})")
        for name in ("n_repeats", "n_trials", "threshold", "workers"):
            value = getattr(self, name)
            if not (isinstance(value, int) and not isinstance(value, bool) and value >= 1):
                out.append(f"{name}: {value!r} must be an integer >= 1")
        if not (isinstance(self.master_seed, int) and 0 <= self.master_seed < 2**64):
            out.append(f"master_seed: {self.master_seed!r} must be an unsigned 64-bit integer")
        for name in ("burst_window_ns", "bin_size_ns", "rabi_omega", "finesse", "k",
                     "blockade_radius_um", "excitation_radius_um"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0):
                out.append(f"{name}: {value!r} must be > 0")
        for name in ("rabi_gamma", "phase_jitter", "od"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value >= 0):
                out.append(f"{name}: {value!r} must be >= 0")
        if self.emission_tau_ns is not None and not self.emission_tau_ns > 0:
            out.append(f"emission_tau_ns: {self.emission_tau_ns!r} must be > 0 or null")
        if self.dark_mode not in DARK_MODES:
            out.append(f"dark_mode: {self.dark_mode!r} must be one of {list(DARK_MODES)}")
        if self.basis not in ("Z", "X", "Y"):
            out.append(f"basis: {self.basis!r} must be Z, X or Y")
        for spec in self.states:
            try:
                parse_state(spec)
            except ValueError as exc:
                out.append(f"states: {exc}")
        try:
            parse_state(self.tomo_state)
        except ValueError as exc:
            out.append(f"tomo_state: {exc}")
        if self.fit_mode not in ("freespace", "cavity"):
            out.append(f"fit_mode: {self.fit_mode!r} must be freespace or cavity")
        if not 0 < self.fit_chain <= 1:
            out.append(f"fit_chain: {self.fit_chain!r} must lie in (0, 1]")
        if self.fit_fixed_p is not None and not 0 < self.fit_fixed_p <= 1:
            out.append(f"fit_fixed_p: {self.fit_fixed_p!r} must lie in (0, 1] or be null")
        if self.peak_window_ns is not None:
            pw = self.peak_window_ns
            if not (len(pw) == 2 and 0 <= pw[0] < pw[1] <= self.burst_window_ns):
                out.append(f"peak_window_ns: {pw!r} must be [lo, hi] inside the burst window")
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"{name}: unknown field" for name in unknown])
        return cls(**data)

    def updated(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig.from_dict(data)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def defaults_path():
    return resources.files("superatom") / "data" / "defaults.json"
