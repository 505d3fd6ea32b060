import numpy as np
import pytest

from cdrkit.circuit import Circuit, Gate, Observable, PauliTerm

GATE_POOL = ("H", "X", "Y", "Z", "S", "Sdag", "P", "CNOT", "RZ", "RX")


def random_circuit(qubits, depth, rng, max_non_clifford=None):
    """Random circuit over the full gate set; rotation angles are generic
    until the non-Clifford budget is spent, then quarter multiples."""
    gates = []
    budget = depth if max_non_clifford is None else max_non_clifford
    while len(gates) < depth:
        kind = GATE_POOL[rng.integers(len(GATE_POOL))]
        if kind == "CNOT":
            if qubits < 2:
                continue
            a, b = rng.choice(qubits, 2, replace=False)
            gates.append(Gate("CNOT", (int(a), int(b))))
        elif kind in ("RZ", "RX"):
            if budget > 0:
                angle = float(rng.uniform(0.0, 2.0 * np.pi))
                budget -= 1
            else:
                angle = float(rng.integers(4)) * np.pi / 2.0
            gates.append(Gate(kind, (int(rng.integers(qubits)),), angle))
        else:
            gates.append(Gate(kind, (int(rng.integers(qubits)),)))
    return Circuit(qubits, tuple(gates))


def random_observable(qubits, n_terms, rng):
    terms = tuple(
        PauliTerm(
            float(rng.normal()),
            "".join(rng.choice(list("IXYZ"), qubits)),
        )
        for _ in range(n_terms)
    )
    return Observable(terms)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
