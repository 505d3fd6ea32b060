import math

import numpy as np
import pytest

from cdrkit.circuit import (
    Circuit,
    Gate,
    Observable,
    PauliTerm,
    clifford_substitution_weights,
    deserialize,
    deserialize_observable,
    is_clifford,
    measurement_groups,
    non_clifford_count,
    serialize,
    serialize_observable,
)
from cdrkit.errors import ConfigError
from cdrkit.gates import rz_matrix

from conftest import random_circuit


def test_fixed_gates_are_clifford():
    for kind in ("H", "X", "Y", "Z", "S", "Sdag", "P"):
        assert is_clifford(Gate(kind, (0,)))
    assert is_clifford(Gate("CNOT", (0, 1)))


def test_rotation_classification():
    assert is_clifford(Gate("RZ", (0,), math.pi / 2))  # the S gate
    assert not is_clifford(Gate("RZ", (0,), 0.3))
    assert is_clifford(Gate("RX", (0,), math.pi / 2))  # the P gate
    assert is_clifford(Gate("RZ", (0,), 2 * math.pi))
    assert is_clifford(Gate("RZ", (0,), 3 * math.pi / 2 + 1e-12))
    assert not is_clifford(Gate("RX", (0,), math.pi / 4))


def test_classification_stable_under_two_pi_shift(rng):
    for _ in range(200):
        angle = float(rng.uniform(0, 2 * math.pi))
        g1 = Gate("RZ", (0,), angle)
        g2 = Gate("RZ", (0,), angle + 2 * math.pi)
        assert is_clifford(g1) == is_clifford(g2)
        assert np.isclose(g1.angle, g2.angle)


def test_non_clifford_count(rng):
    circuit = Circuit(
        2,
        (
            Gate("H", (0,)),
            Gate("RZ", (0,), 0.3),
            Gate("RZ", (1,), math.pi),
            Gate("RX", (1,), 1.1),
            Gate("CNOT", (0, 1)),
        ),
    )
    assert non_clifford_count(circuit) == 2
    all_clifford = random_circuit(3, 30, rng, max_non_clifford=0)
    assert non_clifford_count(all_clifford) == 0


def test_gate_validation():
    with pytest.raises(ConfigError):
        Gate("CNOT", (1, 1))
    with pytest.raises(ConfigError):
        Gate("RZ", (0,))
    with pytest.raises(ConfigError):
        Gate("H", (0,), 0.4)
    with pytest.raises(ConfigError):
        Circuit(2, (Gate("H", (3,)),))


def test_substitution_weights_normalized(rng):
    for _ in range(50):
        angle = float(rng.uniform(0, 2 * math.pi))
        sigma = float(rng.uniform(0.2, 2.0))
        weights, probs = clifford_substitution_weights(angle, sigma)
        assert np.all(weights > 0)
        assert np.isclose(probs.sum(), 1.0)


def test_substitution_weights_identity_and_s():
    weights, probs = clifford_substitution_weights(0.0, 0.5)
    assert weights[0] == pytest.approx(1.0)  # zero distance
    assert np.argmax(probs) == 0
    _, probs = clifford_substitution_weights(math.pi / 2, 0.5)
    assert np.argmax(probs) == 1


def test_substitution_weights_matrix_oracle():
    """Regression fixture computed from the 2x2 matrices directly."""
    angle, sigma = 0.3, 0.5
    expected = np.empty(4)
    for n in range(4):
        d = np.linalg.norm(rz_matrix(angle) - rz_matrix(n * math.pi / 2))
        expected[n] = math.exp(-(d * d) / (sigma * sigma))
    weights, probs = clifford_substitution_weights(angle, sigma)
    assert np.allclose(weights, expected, atol=1e-14)
    # frozen values of the normalized vector for angle=0.3, sigma=0.5
    frozen = expected / expected.sum()
    assert np.allclose(probs, frozen, atol=1e-14)
    assert probs[0] > probs[1] > probs[2] > probs[3]


def test_operator_norm_option():
    _, probs_f = clifford_substitution_weights(0.7, 0.5, norm="frobenius")
    _, probs_o = clifford_substitution_weights(0.7, 0.5, norm="operator")
    assert not np.allclose(probs_f, probs_o)
    with pytest.raises(ConfigError):
        clifford_substitution_weights(0.7, 0.5, norm="nuclear")


def test_serialize_round_trip(rng):
    for _ in range(20):
        circuit = random_circuit(int(rng.integers(1, 6)), int(rng.integers(0, 25)), rng)
        assert deserialize(serialize(circuit)) == circuit


def test_serialize_empty_circuit():
    circuit = Circuit(1, ())
    assert deserialize(serialize(circuit)) == circuit


def test_deserialize_diagnostics():
    with pytest.raises(ConfigError, match="qubits"):
        deserialize('{"qubits": 0, "gates": []}')
    with pytest.raises(ConfigError, match=r"gates\[0\].qubits\[0\]"):
        deserialize('{"qubits": 2, "gates": [{"kind": "H", "qubits": [5]}]}')
    with pytest.raises(ConfigError, match="line 1"):
        deserialize("{not json")
    with pytest.raises(ConfigError, match="unknown"):
        deserialize('{"qubits": 2, "gates": [], "extra": 1}')


def test_observable_round_trip():
    obs = Observable((PauliTerm(-2.0, "XIIZ"), PauliTerm(0.5, "IYXI")))
    assert deserialize_observable(serialize_observable(obs), qubits=4) == obs
    with pytest.raises(ConfigError, match="length"):
        deserialize_observable('{"terms": [{"coeff": 1.0, "paulis": "XX"}]}', qubits=3)


def test_observable_merge():
    obs = Observable(
        (PauliTerm(1.0, "XZ"), PauliTerm(2.0, "XZ"), PauliTerm(-3.0, "ZZ"), PauliTerm(3.0, "ZZ"))
    )
    merged = obs.merged()
    assert len(merged.terms) == 1
    assert merged.terms[0] == PauliTerm(3.0, "XZ")


def test_measurement_groups_ising():
    from cdrkit.workloads import IsingSpec, ising_observable

    obs = ising_observable(IsingSpec(6, 2.0))
    groups = measurement_groups(obs)
    assert len(groups) == 2  # one X setting, one Z setting
    assert sorted(i for g in groups for i in g) == list(range(len(obs.terms)))


def test_measurement_groups_conflicting():
    obs = Observable((PauliTerm(1.0, "XZ"), PauliTerm(1.0, "ZX"), PauliTerm(1.0, "XI")))
    groups = measurement_groups(obs)
    assert len(groups) == 2
    assert 0 in groups[0] and 2 in groups[0]
