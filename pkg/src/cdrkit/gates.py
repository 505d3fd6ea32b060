"""Dense gate matrices and small-circuit unitaries.

Conventions: RZ(a) = exp(-i a Z / 2), RX(a) = exp(-i a X / 2). The fixed
gates S and P are the quarter rotations RZ(pi/2) and RX(pi/2) with the
rotation phase kept (S differs from diag(1, i) by a global phase, which is
irrelevant for expectation values but fixed here so that matrix distances
between rotations and their Clifford replacements are unambiguous).
"""

from __future__ import annotations

import numpy as np

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

PAULI_BY_LETTER = {"I": I2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def rz_matrix(angle: float) -> np.ndarray:
    """exp(-i angle Z / 2)."""
    half = 0.5 * angle
    return np.array([[np.exp(-1j * half), 0], [0, np.exp(1j * half)]])


def rx_matrix(angle: float) -> np.ndarray:
    """exp(-i angle X / 2)."""
    half = 0.5 * angle
    return np.array(
        [[np.cos(half), -1j * np.sin(half)], [-1j * np.sin(half), np.cos(half)]]
    )


S_MATRIX = rz_matrix(np.pi / 2)
SDG_MATRIX = rz_matrix(-np.pi / 2)
P_MATRIX = rx_matrix(np.pi / 2)

FIXED_MATRICES = {
    "H": HADAMARD,
    "X": PAULI_X,
    "Y": PAULI_Y,
    "Z": PAULI_Z,
    "S": S_MATRIX,
    "Sdag": SDG_MATRIX,
    "P": P_MATRIX,
    "CNOT": CNOT_MATRIX,
}


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """Matrix of a single gate (2x2, or 4x4 for CNOT)."""
    if kind == "RZ":
        return rz_matrix(angle)
    if kind == "RX":
        return rx_matrix(angle)
    return FIXED_MATRICES[kind]


def embed(mat: np.ndarray, qubits: tuple[int, ...], n_qubits: int) -> np.ndarray:
    """Embed a 1- or 2-qubit matrix into the full 2^n space.

    Qubit 0 is the most significant bit of the basis index.
    """
    dim = 1 << n_qubits
    full = np.zeros((dim, dim), dtype=complex)
    rest = [q for q in range(n_qubits) if q not in qubits]
    k = len(qubits)
    for sub_row in range(1 << k):
        for sub_col in range(1 << k):
            amp = mat[sub_row, sub_col]
            if amp == 0:
                continue
            for other in range(1 << len(rest)):
                row = col = 0
                for bit_pos, q in enumerate(qubits):
                    row |= ((sub_row >> (k - 1 - bit_pos)) & 1) << (n_qubits - 1 - q)
                    col |= ((sub_col >> (k - 1 - bit_pos)) & 1) << (n_qubits - 1 - q)
                for bit_pos, q in enumerate(rest):
                    bit = (other >> (len(rest) - 1 - bit_pos)) & 1
                    row |= bit << (n_qubits - 1 - q)
                    col |= bit << (n_qubits - 1 - q)
                full[row, col] = amp
    return full


def circuit_unitary(circuit) -> np.ndarray:
    """Dense unitary of a whole circuit; test oracle, exponential in qubits."""
    dim = 1 << circuit.qubits
    u = np.eye(dim, dtype=complex)
    for gate in circuit.gates:
        u = embed(gate_matrix(gate.kind, gate.angle), gate.qubits, circuit.qubits) @ u
    return u


def pauli_string_matrix(letters: str) -> np.ndarray:
    mat = np.array([[1.0 + 0j]])
    for letter in letters:
        mat = np.kron(mat, PAULI_BY_LETTER[letter])
    return mat
