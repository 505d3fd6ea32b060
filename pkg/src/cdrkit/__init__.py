"""cdrkit: learn linear noise corrections from near-Clifford circuit data.

The package bundles the full desk-scale pipeline: circuit/observable types,
exact and noisy simulators, Markov-chain construction of near-Clifford
training sets, least-squares correction fits with error bars, zero-noise
extrapolation baselines, and an experiment runner CLI.
"""

__version__ = "0.1.0"

from .circuit import (
    Circuit,
    Gate,
    Observable,
    PauliTerm,
    clifford_substitution_weights,
    deserialize,
    deserialize_observable,
    is_clifford,
    non_clifford_count,
    serialize,
    serialize_observable,
)
from .errors import CapacityError, CdrError, ConfigError, DiagnosticError
from .sim_exact import (
    StateSpec,
    clifford_conjugation_table,
    pauli_propagation_expectation,
    statevector_expectation,
)
from .sim_noisy import (
    NoiseModel,
    ShotSpec,
    density_matrix_expectation,
    mix_noise,
    noisy_pauli_propagation_expectation,
    sampled_expectation,
    scale_noise,
    trajectory_expectation,
)

__all__ = [
    "CapacityError",
    "CdrError",
    "Circuit",
    "ConfigError",
    "DiagnosticError",
    "Gate",
    "NoiseModel",
    "Observable",
    "PauliTerm",
    "ShotSpec",
    "StateSpec",
    "clifford_conjugation_table",
    "clifford_substitution_weights",
    "density_matrix_expectation",
    "deserialize",
    "deserialize_observable",
    "is_clifford",
    "mix_noise",
    "noisy_pauli_propagation_expectation",
    "non_clifford_count",
    "pauli_propagation_expectation",
    "sampled_expectation",
    "scale_noise",
    "serialize",
    "serialize_observable",
    "statevector_expectation",
    "trajectory_expectation",
]
