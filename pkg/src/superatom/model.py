"""Closed-form physics used throughout the package.

Rabi dynamics of the ground/Rydberg transition, the cavity-enhanced
retrieval-efficiency saturation model, and composition of optical loss
chains. Everything here is a pure function of its arguments.

Efficiencies are probabilities in [0, 1]; percentages only appear at I/O
boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable


@dataclass(frozen=True)
class RabiParams:
    """Damped collective Rabi oscillation.

    ``omega`` is the angular Rabi frequency in rad/s, ``gamma`` an envelope
    damping rate in 1/s and ``amplitude`` the peak contrast.
    """

    omega: float
    gamma: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError(f"amplitude must lie in [0, 1], got {self.amplitude}")


@dataclass(frozen=True)
class EfficiencyModel:
    """Parameters of ``p * C / (C + 1)`` with ``C = k * od * enhancement``."""

    k: float
    p: float = 1.0
    enhancement: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not self.enhancement >= 1.0:
            raise ValueError(f"enhancement must be >= 1, got {self.enhancement}")

    @classmethod
    def cavity(cls, k: float, p: float, finesse: float) -> "EfficiencyModel":
        return cls(k=k, p=p, enhancement=cavity_enhancement(finesse))


@dataclass(frozen=True)
class LossChain:
    """Ordered named stage efficiencies, e.g. cavity output, fiber, detector."""

    stages: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        stages = tuple((str(name), float(eff)) for name, eff in self.stages)
        for name, eff in stages:
            if not 0.0 <= eff <= 1.0:
                raise ValueError(f"stage {name!r} efficiency must lie in [0, 1], got {eff}")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def from_mapping(cls, stages: dict[str, float] | Iterable[tuple[str, float]]) -> "LossChain":
        items = stages.items() if isinstance(stages, dict) else stages
        return cls(tuple(items))

    def __add__(self, other: "LossChain") -> "LossChain":
        return LossChain(self.stages + other.stages)

    def __len__(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class GeometryParams:
    """Blockade radius and 1/e^2 excitation radius, both in micrometres."""

    blockade_radius: float
    excitation_radius: float

    def __post_init__(self):
        if not (self.blockade_radius > 0 and self.excitation_radius > 0):
            raise ValueError("blockade_radius and excitation_radius must both be > 0")


def rabi_population(t: float, params: RabiParams) -> float:
    """Rydberg population ``A sin^2(omega t / 2) exp(-gamma t)`` at time ``t`` (s)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    s = math.sin(0.5 * params.omega * t)
    return params.amplitude * s * s * math.exp(-params.gamma * t)


def pi_pulse_duration(omega: float) -> float:
    if not omega > 0:
        raise ValueError(f"omega must be > 0, got {omega}")
    return math.pi / omega


def cavity_enhancement(finesse: float) -> float:
    """Cooperativity enhancement ``2F/pi`` of a ring cavity of finesse ``F``."""
    if not finesse > 0:
        raise ValueError(f"finesse must be > 0, got {finesse}")
    return 2.0 * finesse / math.pi


def cooperativity(od: float, model: EfficiencyModel) -> float:
    if od < 0:
        raise ValueError(f"od must be >= 0, got {od}")
    return model.k * od * model.enhancement


def saturating_efficiency(od: float, model: EfficiencyModel) -> float:
    """Retrieval efficiency ``p C / (C + 1)`` at optical depth ``od``."""
    c = cooperativity(od, model)
    return model.p * c / (c + 1.0)


def k_from_anchor(od: float, efficiency: float, p: float = 1.0, enhancement: float = 1.0) -> float:
    """Invert the saturation model for ``k`` given one (od, efficiency) point."""
    if not od > 0:
        raise ValueError("anchor od must be > 0")
    if not 0.0 < efficiency < p:
        raise ValueError("anchor efficiency must lie strictly between 0 and p")
    ratio = efficiency / p
    return ratio / (1.0 - ratio) / (od * enhancement)


def chain_efficiency(chain: LossChain) -> float:
    return math.prod(eff for _, eff in chain.stages)


def blockade_regime_ok(geom: GeometryParams) -> bool:
    """True when the blockade radius strictly exceeds the excitation radius."""
    return geom.blockade_radius > geom.excitation_radius


# Reference optical chain of the experiment.
REFERENCE_CHAIN = LossChain(
    (
        ("cavity_output", 0.80),
        ("fiber", 0.859),
        ("pockels", 0.85),
        ("detector", 0.68),
    )
)
