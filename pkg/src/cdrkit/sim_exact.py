"""Exact expectation values.

Two independent routes:

* ``statevector_expectation`` -- dense state evolution, cost 2^Q, the
  brute-force oracle for small qubit counts.
* ``pauli_propagation_expectation`` -- Heisenberg-picture propagation of the
  observable's Pauli strings backward through the circuit. Clifford gates map
  one signed Pauli to one signed Pauli; each generic rotation at most doubles
  the frontier, so the cost is exponential only in the number of non-Clifford
  gates.

Pauli strings are packed two bits per qubit into int64 words (bit 0 of a
letter = X component, bit 1 = Z component: I=0, X=1, Z=2, Y=3), so frontiers
merge with a single sort-based pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Gate, Observable, is_clifford, clifford_power
from .errors import CapacityError, ConfigError

DEFAULT_Q_MAX_STATEVECTOR = 14
DEFAULT_MAX_TERMS = 2_000_000
PRUNE_TOL = 1e-14

_CODE_BY_LETTER = {"I": 0, "X": 1, "Z": 2, "Y": 3}
_LETTER_BY_CODE = "IXZY"


# ---------------------------------------------------------------------------
# Initial states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpec:
    """Product initial state: |0..0>, |+..+>, or per-qubit rotations of |0>.

    For ``product_rotations``, ``angles`` holds either Q angles (one RX per
    qubit) or 2Q angles (RX then RZ per qubit), enough to reach any product
    state up to phase.
    """

    qubits: int
    kind: str = "all_zero"
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("all_zero", "all_plus", "product_rotations"):
            raise ConfigError(f"unknown initial state kind {self.kind!r}")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if self.kind == "product_rotations":
            if len(self.angles) not in (self.qubits, 2 * self.qubits):
                raise ConfigError(
                    f"product_rotations expects {self.qubits} or "
                    f"{2 * self.qubits} angles, got {len(self.angles)}"
                )
        elif self.angles:
            raise ConfigError(f"{self.kind} takes no angles")

    @staticmethod
    def all_zero(qubits: int) -> "StateSpec":
        return StateSpec(qubits, "all_zero")

    @staticmethod
    def all_plus(qubits: int) -> "StateSpec":
        return StateSpec(qubits, "all_plus")

    @staticmethod
    def product(qubits: int, angles) -> "StateSpec":
        return StateSpec(qubits, "product_rotations", tuple(angles))


def preparation_gates(init: StateSpec) -> tuple[Gate, ...]:
    """Gates that prepare ``init`` from |0..0>."""
    if init.kind == "all_zero":
        return ()
    if init.kind == "all_plus":
        return tuple(Gate("H", (q,)) for q in range(init.qubits))
    gates = []
    if len(init.angles) == init.qubits:
        for q in range(init.qubits):
            gates.append(Gate("RX", (q,), init.angles[q]))
    else:
        for q in range(init.qubits):
            gates.append(Gate("RX", (q,), init.angles[2 * q]))
            gates.append(Gate("RZ", (q,), init.angles[2 * q + 1]))
    return tuple(gates)


# ---------------------------------------------------------------------------
# Statevector simulation
# ---------------------------------------------------------------------------


def _apply_1q(flat: np.ndarray, mat: np.ndarray, qubit: int, n_axes: int) -> np.ndarray:
    """Apply a 2x2 matrix on one tensor axis of a flat (2,)*n_axes array.

    Axis 0 is the most significant bit of the flat index.
    """
    pre = 1 << qubit
    post = flat.size >> (qubit + 1)
    if post > 1:
        return np.matmul(mat, flat.reshape(pre, 2, post)).reshape(flat.shape)
    return np.matmul(flat.reshape(pre, 2), mat.T).reshape(flat.shape)


def _apply_cnot(flat: np.ndarray, control: int, target: int, n_axes: int) -> np.ndarray:
    """CNOT as a basis permutation: swap target bit where control bit is 1."""
    a = flat.reshape((2,) * n_axes)
    sel: list = [slice(None)] * n_axes
    sel[control] = 1
    sub = a[tuple(sel)]
    t_axis = target - 1 if target > control else target
    lo: list = [slice(None)] * (n_axes - 1)
    hi: list = [slice(None)] * (n_axes - 1)
    lo[t_axis] = 0
    hi[t_axis] = 1
    tmp = sub[tuple(lo)].copy()
    sub[tuple(lo)] = sub[tuple(hi)]
    sub[tuple(hi)] = tmp
    return flat


def apply_gate_statevector(state: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    if gate.kind == "CNOT":
        return _apply_cnot(state, gate.qubits[0], gate.qubits[1], n_qubits)
    return _apply_1q(state, gate.matrix(), gate.qubits[0], n_qubits)


def _term_index_tables(letters: str) -> tuple[int, np.ndarray, complex]:
    """Precompute the gather used to evaluate <psi|P|psi> or Tr(rho P).

    Returns (xflip, signs over basis index, i**nY) with P's matrix element
    P[r, r^xflip] = signs[r] * phase.
    """
    n = len(letters)
    xflip = 0
    zy_bits = 0
    n_y = 0
    for q, letter in enumerate(letters):
        bit = 1 << (n - 1 - q)
        if letter in ("X", "Y"):
            xflip |= bit
        if letter in ("Z", "Y"):
            zy_bits |= bit
        if letter == "Y":
            n_y += 1
    idx = np.arange(1 << n)
    signs = 1 - 2 * (np.bitwise_count(idx & zy_bits).astype(np.int64) & 1)
    phase = (-1j) ** n_y
    return xflip, signs, phase


def pauli_expectation_statevector(state: np.ndarray, letters: str) -> float:
    xflip, signs, phase = _term_index_tables(letters)
    idx = np.arange(state.size)
    val = np.vdot(state, (signs * phase) * state[idx ^ xflip])
    return float(val.real)


def run_statevector(
    circuit: Circuit, init: StateSpec, q_max: int = DEFAULT_Q_MAX_STATEVECTOR
) -> np.ndarray:
    if circuit.qubits > q_max:
        raise CapacityError(
            f"statevector simulation capped at {q_max} qubits, got {circuit.qubits}"
        )
    if init.qubits != circuit.qubits:
        raise ConfigError("initial state and circuit qubit counts differ")
    state = np.zeros(1 << circuit.qubits, dtype=complex)
    state[0] = 1.0
    for gate in preparation_gates(init) + circuit.gates:
        state = apply_gate_statevector(state, gate, circuit.qubits)
    return state


def statevector_expectation(
    circuit: Circuit,
    obs: Observable,
    init: StateSpec,
    q_max: int = DEFAULT_Q_MAX_STATEVECTOR,
) -> float:
    """<init| U^dag X U |init> by dense state evolution."""
    state = run_statevector(circuit, init, q_max)
    return float(
        sum(
            t.coefficient * pauli_expectation_statevector(state, t.letters)
            for t in obs.terms
        )
    )


# ---------------------------------------------------------------------------
# Clifford conjugation tables
# ---------------------------------------------------------------------------

# Forward conjugation U P U^dag for the fixed gates, letter -> (sign, letter).
_FORWARD_1Q = {
    "H": {"X": (1, "Z"), "Y": (-1, "Y"), "Z": (1, "X")},
    "X": {"X": (1, "X"), "Y": (-1, "Y"), "Z": (-1, "Z")},
    "Y": {"X": (-1, "X"), "Y": (1, "Y"), "Z": (-1, "Z")},
    "Z": {"X": (-1, "X"), "Y": (-1, "Y"), "Z": (1, "Z")},
    "S": {"X": (1, "Y"), "Y": (-1, "X"), "Z": (1, "Z")},
    "Sdag": {"X": (-1, "Y"), "Y": (1, "X"), "Z": (1, "Z")},
    "P": {"X": (1, "X"), "Y": (1, "Z"), "Z": (-1, "Y")},
}

# Forward conjugation for CNOT, pair (control, target) -> (sign, pair).
_FORWARD_CNOT = {
    "II": (1, "II"), "IX": (1, "IX"), "IY": (1, "ZY"), "IZ": (1, "ZZ"),
    "XI": (1, "XX"), "XX": (1, "XI"), "XY": (1, "YZ"), "XZ": (-1, "YY"),
    "YI": (1, "YX"), "YX": (1, "YI"), "YY": (-1, "XZ"), "YZ": (1, "XY"),
    "ZI": (1, "ZI"), "ZX": (1, "ZX"), "ZY": (1, "IY"), "ZZ": (1, "IZ"),
}


def clifford_conjugation_table() -> dict:
    """Complete forward conjugation rules U P U^dag with signs.

    Single-qubit gates map letters, CNOT maps (control, target) pairs.
    """
    table = {kind: dict(rules) for kind, rules in _FORWARD_1Q.items()}
    for kind in table:
        table[kind]["I"] = (1, "I")
    table["CNOT"] = dict(_FORWARD_CNOT)
    return table


def _1q_arrays_from(rules: dict[str, tuple[int, str]]) -> tuple[np.ndarray, np.ndarray]:
    newl = np.zeros(4, dtype=np.int64)
    sign = np.ones(4)
    for letter, (s, out) in rules.items():
        newl[_CODE_BY_LETTER[letter]] = _CODE_BY_LETTER[out]
        sign[_CODE_BY_LETTER[letter]] = s
    return newl, sign


def _invert_1q(newl: np.ndarray, sign: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inv_l = np.zeros(4, dtype=np.int64)
    inv_s = np.ones(4)
    for l in range(4):
        inv_l[newl[l]] = l
        inv_s[newl[l]] = sign[l]
    return inv_l, inv_s


def _compose_1q(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Table applying a then b."""
    al, asg = a
    bl, bsg = b
    return bl[al], asg * bsg[al]


def _build_backward_tables():
    """Heisenberg-direction (U^dag P U) letter/sign tables for all fixed gates
    and for the quarter-rotation powers of RZ and RX."""
    fixed = {}
    for kind, rules in _FORWARD_1Q.items():
        fwd = _1q_arrays_from({**rules, "I": (1, "I")})
        fixed[kind] = _invert_1q(*fwd)
    identity = (np.arange(4, dtype=np.int64), np.ones(4))
    rz_pow = [identity]
    rx_pow = [identity]
    for _ in range(3):
        rz_pow.append(_compose_1q(rz_pow[-1], fixed["S"]))
        rx_pow.append(_compose_1q(rx_pow[-1], fixed["P"]))
    # CNOT is self-inverse: backward == forward.
    newc = np.zeros(16, dtype=np.int64)
    newt = np.zeros(16, dtype=np.int64)
    csign = np.ones(16)
    for pair, (s, out) in _FORWARD_CNOT.items():
        idx = (_CODE_BY_LETTER[pair[0]] << 2) | _CODE_BY_LETTER[pair[1]]
        newc[idx] = _CODE_BY_LETTER[out[0]]
        newt[idx] = _CODE_BY_LETTER[out[1]]
        csign[idx] = s
    return fixed, rz_pow, rx_pow, (newc, newt, csign)

_BACKWARD_1Q, _RZ_POWER, _RX_POWER, _BACKWARD_CNOT = _build_backward_tables()

_CNOT_DELTA_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _cnot_delta_tables(control: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-(control, target) additive code updates: indexing by the packed
    (control letter, target letter) pair applies the conjugation in one
    gather instead of four shifts."""
    key = (control, target)
    cached = _CNOT_DELTA_CACHE.get(key)
    if cached is None:
        newc, newt, sign = _BACKWARD_CNOT
        idx = np.arange(16)
        lc, lt = idx >> 2, idx & 3
        delta = ((newc - lc) << (2 * control)) + ((newt - lt) << (2 * target))
        cached = (delta.astype(np.int64), sign)
        _CNOT_DELTA_CACHE[key] = cached
    return cached


# ---------------------------------------------------------------------------
# Pauli frontier
# ---------------------------------------------------------------------------


def letters_to_code(letters: str) -> int:
    code = 0
    for q, letter in enumerate(letters):
        code |= _CODE_BY_LETTER[letter] << (2 * q)
    return code


def code_to_letters(code: int, qubits: int) -> str:
    return "".join(_LETTER_BY_CODE[(code >> (2 * q)) & 3] for q in range(qubits))


@dataclass
class PauliFrontier:
    """A weighted set of Pauli strings, packed 2 bits per qubit.

    Term count never exceeds ``max_terms``; after full propagation through a
    circuit with N non-Clifford gates it is bounded by 2^N per input term.
    Duplicate codes may coexist between merges (evaluation is linear, so
    correctness is unaffected); merges run when the term list has doubled
    since the last one, keeping both small- and large-frontier cases cheap.
    """

    qubits: int
    codes: np.ndarray
    coeffs: np.ndarray
    max_terms: int = DEFAULT_MAX_TERMS
    _merge_floor: int = 0

    @staticmethod
    def from_observable(
        obs: Observable, qubits: int, max_terms: int = DEFAULT_MAX_TERMS
    ) -> "PauliFrontier":
        if qubits > 31:
            raise CapacityError(f"Pauli packing supports at most 31 qubits, got {qubits}")
        merged = obs.merged()
        codes = np.array([letters_to_code(t.letters) for t in merged.terms], dtype=np.int64)
        coeffs = np.array([t.coefficient for t in merged.terms])
        return PauliFrontier(qubits, codes, coeffs, max_terms)

    def __len__(self) -> int:
        return len(self.codes)

    def merge(self):
        if len(self.codes) == 0:
            return
        uniq, inverse = np.unique(self.codes, return_inverse=True)
        summed = np.zeros(len(uniq))
        np.add.at(summed, inverse, self.coeffs)
        keep = np.abs(summed) > PRUNE_TOL
        self.codes = uniq[keep]
        self.coeffs = summed[keep]
        self._merge_floor = len(self.codes)

    def _set_letters(self, shift: int, new_letters: np.ndarray):
        old = (self.codes >> shift) & 3
        self.codes = self.codes - (old << shift) + (new_letters << shift)

    def apply_fixed_backward(self, kind: str, qubit: int):
        newl, sign = _BACKWARD_1Q[kind]
        shift = 2 * qubit
        l = (self.codes >> shift) & 3
        self._set_letters(shift, newl[l])
        self.coeffs = self.coeffs * sign[l]

    def apply_cnot_backward(self, control: int, target: int):
        delta, sign = _cnot_delta_tables(control, target)
        sc, st = 2 * control, 2 * target
        idx = (((self.codes >> sc) & 3) << 2) | ((self.codes >> st) & 3)
        self.codes = self.codes + delta[idx]
        self.coeffs = self.coeffs * sign[idx]

    def apply_rotation_power_backward(self, kind: str, qubit: int, power: int):
        table = _RZ_POWER[power] if kind == "RZ" else _RX_POWER[power]
        newl, sign = table
        shift = 2 * qubit
        l = (self.codes >> shift) & 3
        self._set_letters(shift, newl[l])
        self.coeffs = self.coeffs * sign[l]

    def apply_rotation_backward(self, kind: str, qubit: int, angle: float):
        """Branch a generic rotation: cos(a) * original +/- sin(a) * flipped.

        For RZ the letters with an X component branch (X -> X,-Y; Y -> Y,+X);
        for RX the letters with a Z component branch (Z -> Z,+Y; Y -> Y,-Z).
        Sign conventions fixed by agreement with the statevector oracle.
        """
        shift = 2 * qubit
        l = (self.codes >> shift) & 3
        if kind == "RZ":
            branch = (l & 1).astype(bool)
            flip = 2 << shift
            sin_sign = np.where(l == 1, -1.0, 1.0)
        else:
            branch = (l & 2).astype(bool)
            flip = 1 << shift
            sin_sign = np.where(l == 2, 1.0, -1.0)
        if not branch.any():
            return
        c, s = math.cos(angle), math.sin(angle)
        keep_codes = self.codes[~branch]
        keep_coeffs = self.coeffs[~branch]
        bcodes = self.codes[branch]
        bcoeffs = self.coeffs[branch]
        bsign = sin_sign[branch]
        self.codes = np.concatenate([keep_codes, bcodes, bcodes ^ flip])
        self.coeffs = np.concatenate([keep_coeffs, c * bcoeffs, s * bsign * bcoeffs])
        if len(self.codes) > 2 * self._merge_floor + 64:
            self.merge()

    def apply_gate_backward(self, gate: Gate, gate_index: int | None = None):
        if gate.kind == "CNOT":
            self.apply_cnot_backward(gate.qubits[0], gate.qubits[1])
        elif gate.kind in ("RZ", "RX"):
            if is_clifford(gate):
                self.apply_rotation_power_backward(
                    gate.kind, gate.qubits[0], clifford_power(gate)
                )
            else:
                self.apply_rotation_backward(gate.kind, gate.qubits[0], gate.angle)
                if len(self.codes) > self.max_terms:
                    self.merge()
                    if len(self.codes) > self.max_terms:
                        raise CapacityError(
                            f"Pauli frontier exceeded {self.max_terms} terms at "
                            f"gate index {gate_index}"
                        )
        else:
            self.apply_fixed_backward(gate.kind, gate.qubits[0])

    def evaluate(self, init: StateSpec) -> float:
        """Expectation of the frontier against a product initial state.

        For |0..0> only {I,Z}-strings contribute; for |+..+> only {I,X}.
        Rotated product states are handled by conjugating through the
        preparation gates first.
        """
        frontier = self
        if init.kind == "product_rotations":
            frontier = PauliFrontier(
                self.qubits, self.codes.copy(), self.coeffs.copy(), self.max_terms
            )
            for gate in reversed(preparation_gates(init)):
                frontier.apply_gate_backward(gate)
        if len(frontier.codes) == 0:
            return 0.0
        x_mask = ((1 << (2 * frontier.qubits)) - 1) // 3  # 0b0101...01
        if init.kind == "all_plus":
            keep = (frontier.codes & (2 * x_mask)) == 0
        else:
            keep = (frontier.codes & x_mask) == 0
        return float(frontier.coeffs[keep].sum())


def propagate_observable(
    circuit: Circuit,
    obs: Observable,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> PauliFrontier:
    """Conjugate the observable backward through the whole circuit."""
    frontier = PauliFrontier.from_observable(obs, circuit.qubits, max_terms)
    for index in range(len(circuit.gates) - 1, -1, -1):
        frontier.apply_gate_backward(circuit.gates[index], index)
    return frontier


def pauli_propagation_expectation(
    circuit: Circuit,
    obs: Observable,
    init: StateSpec,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> float:
    """Heisenberg-picture expectation; exact, cost exponential only in the
    number of non-Clifford gates."""
    if init.qubits != circuit.qubits:
        raise ConfigError("initial state and circuit qubit counts differ")
    return propagate_observable(circuit, obs, max_terms).evaluate(init)
