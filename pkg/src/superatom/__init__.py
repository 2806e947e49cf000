"""Single-shot readout of a Rydberg superatom qubit by photon bursts.

Collective Rabi dynamics, retrieval-efficiency models, a counter-based
Monte-Carlo of the burst readout, readout analysis and tomography, and
least-squares fitting of efficiency curves and burst parameters.
"""

__version__ = "0.1.0"

from .burst import BurstParams, Dataset, expected_statistics, simulate_dataset
from .config import RunConfig, load_config
from .qubit import QubitState, MeasurementBasis, parse_state

__all__ = [
    "BurstParams",
    "Dataset",
    "MeasurementBasis",
    "QubitState",
    "RunConfig",
    "expected_statistics",
    "load_config",
    "parse_state",
    "simulate_dataset",
]
