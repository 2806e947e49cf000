"""Two-level Rydberg qubit: states, MW Raman rotations and measurement bases.

Basis order is ``(|r1>, |r2>)``. States are compared only through
``|<a|b>|^2``, so no canonical global phase is stored.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# MW phase of the pi/2 pulse that measures in the diagonal (X) basis. The
# circular (Y) basis uses this plus pi/2. With the rotation convention below,
# pi/2 maps |r1> to |D> = (|r1> + |r2>)/sqrt(2).
X_BASIS_PHASE = math.pi / 2


@dataclass(frozen=True)
class QubitState:
    a_r1: complex
    a_r2: complex

    def __post_init__(self):
        a1, a2 = complex(self.a_r1), complex(self.a_r2)
        norm = abs(a1) ** 2 + abs(a2) ** 2
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"state is not normalized (|a|^2 + |b|^2 = {norm})")
        object.__setattr__(self, "a_r1", a1)
        object.__setattr__(self, "a_r2", a2)

    @classmethod
    def normalized(cls, a_r1: complex, a_r2: complex) -> "QubitState":
        """Build a state from possibly unnormalized amplitudes."""
        norm = math.sqrt(abs(a_r1) ** 2 + abs(a_r2) ** 2)
        if norm == 0:
            raise ValueError("zero amplitude vector")
        return cls(a_r1 / norm, a_r2 / norm)

    @classmethod
    def from_vector(cls, vec) -> "QubitState":
        v = np.asarray(vec, dtype=complex).reshape(2)
        return cls.normalized(v[0], v[1])

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a_r1, self.a_r2], dtype=complex)

    @property
    def populations(self) -> tuple[float, float]:
        return abs(self.a_r1) ** 2, abs(self.a_r2) ** 2

    def bloch(self) -> np.ndarray:
        """Bloch vector with |r1> at +Z, |D> at +X and |R> at +Y."""
        a, b = self.a_r1, self.a_r2
        cross = a.conjugate() * b
        return np.array([2 * cross.real, 2 * cross.imag, abs(a) ** 2 - abs(b) ** 2])

    def preparation_area(self) -> float:
        """Pulse area that rotates |r1> into this state's populations."""
        return 2.0 * math.acos(min(1.0, abs(self.a_r1)))


R1 = QubitState(1, 0)
R2 = QubitState(0, 1)
PLUS_D = QubitState.normalized(1, 1)
MINUS_A = QubitState.normalized(1, -1)
PLUS_R = QubitState.normalized(1, 1j)
MINUS_L = QubitState.normalized(1, -1j)

NAMED_STATES = {"r1": R1, "r2": R2, "D": PLUS_D, "A": MINUS_A, "R": PLUS_R, "L": MINUS_L}


def parse_state(spec: str) -> QubitState:
    """Parse ``r1``, ``r2``, ``D``, ``A``, ``R``, ``L`` or an amplitude pair.

    Amplitude pairs are two comma-separated Python complex literals, e.g.
    ``0.88,0.48`` or ``1,1j``; they are normalized.
    """
    key = spec.strip()
    if key in NAMED_STATES:
        return NAMED_STATES[key]
    parts = key.split(",")
    if len(parts) != 2:
        raise ValueError(f"cannot parse state spec {spec!r}")
    try:
        a1, a2 = (complex(p.strip().replace(" ", "")) for p in parts)
    except ValueError as exc:
        raise ValueError(f"cannot parse state spec {spec!r}") from exc
    return QubitState.normalized(a1, a2)


@dataclass(frozen=True)
class Rotation:
    """MW Raman pulse of area ``theta`` and relative phase ``phi`` (radians)."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= TWO_PI + 1e-12:
            raise ValueError(f"theta must lie in [0, 2pi], got {self.theta}")
        object.__setattr__(self, "phi", math.fmod(self.phi, TWO_PI) % TWO_PI)


def su2(theta: float, phi: float) -> np.ndarray:
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    return np.array(
        [[c, -1j * cmath.exp(-1j * phi) * s], [-1j * cmath.exp(1j * phi) * s, c]],
        dtype=complex,
    )


def rotation_unitary(rot: Rotation) -> np.ndarray:
    """``[[cos(t/2), -i e^{-i phi} sin(t/2)], [-i e^{i phi} sin(t/2), cos(t/2)]]``."""
    return su2(rot.theta, rot.phi)


def apply(unitary: np.ndarray, state: QubitState) -> QubitState:
    return QubitState.from_vector(unitary @ state.vector)


def prepare_state(rot: Rotation) -> QubitState:
    return apply(rotation_unitary(rot), R1)


@dataclass(frozen=True)
class MeasurementBasis:
    """One of the Z, X, Y readout bases.

    ``plus_state`` is the basis state read out as |r1> (photon burst), and
    is derived from the basis rotation so the two stay consistent under any
    choice of ``x_phase``.
    """

    label: str
    x_phase: float = X_BASIS_PHASE

    def __post_init__(self):
        if self.label not in ("Z", "X", "Y"):
            raise ValueError(f"unknown basis label {self.label!r}; expected Z, X or Y")

    @property
    def rotation(self) -> Rotation:
        return basis_rotation(self)

    @property
    def plus_state(self) -> QubitState:
        return apply(rotation_unitary(self.rotation), R1)

    @property
    def minus_state(self) -> QubitState:
        return apply(rotation_unitary(self.rotation), R2)


Z_BASIS = MeasurementBasis("Z")
X_BASIS = MeasurementBasis("X")
Y_BASIS = MeasurementBasis("Y")


def basis_rotation(basis: MeasurementBasis) -> Rotation:
    """Pulse whose inverse maps ``basis.plus_state`` onto |r1>.

    Z needs no pulse; X and Y use a pi/2 pulse at phases ``x_phase`` and
    ``x_phase + pi/2``.
    """
    if basis.label == "Z":
        return Rotation(0.0, 0.0)
    if basis.label == "X":
        return Rotation(math.pi / 2, basis.x_phase)
    if basis.label == "Y":
        return Rotation(math.pi / 2, basis.x_phase + math.pi / 2)
    raise ValueError(f"unknown basis label {basis.label!r}")


def born_probability(state: QubitState, outcome_state: QubitState) -> float:
    amp = np.vdot(outcome_state.vector, state.vector)
    return float(min(1.0, abs(amp) ** 2))


def measured_r2_probability(state: QubitState, basis: MeasurementBasis, phase_offset: float = 0.0) -> float:
    """Probability of projecting onto |r2> after the basis pulse.

    ``phase_offset`` perturbs the pulse phase, modelling MW phase-line error.
    """
    rot = basis.rotation
    if rot.theta == 0.0:
        return abs(state.a_r2) ** 2
    u = su2(rot.theta, rot.phi + phase_offset)
    v = u.conj().T @ state.vector
    return float(min(1.0, abs(v[1]) ** 2))
