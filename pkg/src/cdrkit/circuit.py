"""Circuits, observables, Clifford classification and substitution weights.

Gates are immutable values; rotation angles are canonicalized to [0, 2*pi)
on construction so Clifford detection and serialization are deterministic.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gates import gate_matrix, rz_matrix

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# Angle tolerance (radians) below which a rotation counts as a Clifford
# multiple of pi/2. Far below any physically meaningful angle resolution.
TAU_CLIFFORD = 1e-9

GATE_KINDS = ("H", "X", "Y", "Z", "S", "Sdag", "CNOT", "P", "RZ", "RX")
ROTATION_KINDS = ("RZ", "RX")
_TWO_QUBIT_KINDS = ("CNOT",)


def canonical_angle(angle: float) -> float:
    """Map an angle to [0, 2*pi)."""
    a = math.fmod(float(angle), TWO_PI)
    if a < 0.0:
        a += TWO_PI
    if a >= TWO_PI:  # fmod roundoff at the boundary
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class Gate:
    """One gate: a kind, its qubit indices, and an angle for RZ/RX.

    CNOT qubits are ordered (control, target).
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        expected = 2 if self.kind in _TWO_QUBIT_KINDS else 1
        if len(self.qubits) != expected:
            raise ConfigError(
                f"gate {self.kind} expects {expected} qubit(s), got {self.qubits}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ConfigError(f"gate {self.kind} has repeated qubits {self.qubits}")
        if self.kind in ROTATION_KINDS:
            if self.angle is None:
                raise ConfigError(f"gate {self.kind} requires an angle")
            object.__setattr__(self, "angle", canonical_angle(self.angle))
        elif self.angle is not None:
            raise ConfigError(f"gate {self.kind} takes no angle")

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.angle)


@functools.lru_cache(maxsize=65536)
def is_clifford(gate: Gate) -> bool:
    """True for the fixed gates; for RZ/RX, true iff the angle is a
    multiple of pi/2 within TAU_CLIFFORD."""
    if gate.kind not in ROTATION_KINDS:
        return True
    r = math.fmod(gate.angle, HALF_PI)
    return min(r, HALF_PI - r) <= TAU_CLIFFORD


def clifford_power(gate: Gate) -> int:
    """For a Clifford rotation, the integer k with angle = k*pi/2 (mod 2*pi)."""
    return int(round(gate.angle / HALF_PI)) % 4


@dataclass(frozen=True)
class Circuit:
    qubits: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        if self.qubits < 1:
            raise ConfigError(f"circuit needs at least one qubit, got {self.qubits}")
        object.__setattr__(self, "gates", tuple(self.gates))
        for i, gate in enumerate(self.gates):
            for q in gate.qubits:
                if not 0 <= q < self.qubits:
                    raise ConfigError(
                        f"gates[{i}]: qubit index {q} out of range for "
                        f"{self.qubits}-qubit circuit"
                    )

    def with_gates(self, gates) -> "Circuit":
        return Circuit(self.qubits, tuple(gates))

    def _with_gates_unchecked(self, gates) -> "Circuit":
        """Skip re-validation; for internal gate substitution where indices
        are known valid."""
        out = object.__new__(Circuit)
        object.__setattr__(out, "qubits", self.qubits)
        object.__setattr__(out, "gates", tuple(gates))
        return out


def non_clifford_count(circuit: Circuit) -> int:
    return sum(1 for g in circuit.gates if not is_clifford(g))


def rotation_positions(circuit: Circuit) -> list[int]:
    """Gate indices of the non-Clifford rotations (the substitutable ones)."""
    return [i for i, g in enumerate(circuit.gates) if not is_clifford(g)]


def clifford_substitution_weights(
    angle: float, sigma: float, norm: str = "frobenius"
) -> tuple[np.ndarray, np.ndarray]:
    """Weights for replacing a rotation by its n-th quarter-rotation power.

    For each n in {0,1,2,3} the weight is exp(-d^2 / sigma^2) with
    d = || R(angle) - R(n*pi/2) || on the 2x2 matrices, global phase kept.
    The distance is identical for Z- and X-axis rotations. Returns
    (unnormalized weights, normalized probabilities).
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    target = rz_matrix(angle)
    weights = np.empty(4)
    for n in range(4):
        diff = target - rz_matrix(n * HALF_PI)
        if norm == "frobenius":
            d = np.linalg.norm(diff)
        elif norm == "operator":
            d = np.linalg.norm(diff, ord=2)
        else:
            raise ConfigError(f"unknown matrix norm {norm!r}")
        weights[n] = math.exp(-(d * d) / (sigma * sigma))
    return weights, weights / weights.sum()


def substituted_gate(gate: Gate, power: int) -> Gate:
    """The Clifford replacement of a rotation: same axis, angle power*pi/2."""
    if gate.kind not in ROTATION_KINDS:
        raise ConfigError(f"only RZ/RX gates can be substituted, got {gate.kind}")
    return Gate(gate.kind, gate.qubits, (power % 4) * HALF_PI)


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

_LETTERS = "IXYZ"


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    letters: str

    def __post_init__(self):
        if any(c not in _LETTERS for c in self.letters):
            raise ConfigError(f"invalid Pauli letters {self.letters!r}")
        object.__setattr__(self, "coefficient", float(self.coefficient))


@dataclass(frozen=True)
class Observable:
    terms: tuple[PauliTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        lengths = {len(t.letters) for t in self.terms}
        if len(lengths) > 1:
            raise ConfigError(f"terms act on inconsistent qubit counts {lengths}")

    @property
    def qubits(self) -> int:
        return len(self.terms[0].letters) if self.terms else 0

    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms])

    def combine(self, term_values) -> float:
        """Linear recombination sum_i c_i * <P_i>."""
        return float(np.dot(self.coefficients(), np.asarray(term_values, dtype=float)))

    def merged(self) -> "Observable":
        """Merge duplicate letter strings and drop zero coefficients."""
        acc: dict[str, float] = {}
        for t in self.terms:
            acc[t.letters] = acc.get(t.letters, 0.0) + t.coefficient
        return Observable(
            tuple(PauliTerm(c, s) for s, c in acc.items() if c != 0.0)
        )


def measurement_groups(obs: Observable) -> list[list[int]]:
    """Partition term indices into simultaneously measurable groups.

    Two terms share a measurement setting iff their non-identity letters
    agree on every qubit (first-fit greedy). Used for shot accounting.
    """
    groups: list[list[int]] = []
    settings: list[list[str]] = []
    for idx, term in enumerate(obs.terms):
        placed = False
        for gi, setting in enumerate(settings):
            ok = True
            for q, letter in enumerate(term.letters):
                if letter != "I" and setting[q] != "I" and setting[q] != letter:
                    ok = False
                    break
            if ok:
                groups[gi].append(idx)
                for q, letter in enumerate(term.letters):
                    if letter != "I":
                        setting[q] = letter
                placed = True
                break
        if not placed:
            groups.append([idx])
            settings.append(list(term.letters))
    return groups


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize(circuit: Circuit) -> str:
    """Circuit -> JSON text. Round-trips exactly through deserialize."""
    gates = []
    for g in circuit.gates:
        entry: dict = {"kind": g.kind, "qubits": list(g.qubits)}
        if g.angle is not None:
            entry["angle"] = g.angle
        gates.append(entry)
    return json.dumps({"qubits": circuit.qubits, "gates": gates}, indent=1)


def deserialize(text: str) -> Circuit:
    """JSON text -> Circuit, with field-path diagnostics on malformed input."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"circuit parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError("circuit file must be a JSON object")
    unknown = set(data) - {"qubits", "gates"}
    if unknown:
        raise ConfigError(f"unknown circuit fields {sorted(unknown)}")
    qubits = data.get("qubits")
    if not isinstance(qubits, int) or qubits < 1:
        raise ConfigError(f"qubits: expected positive integer, got {qubits!r}")
    raw_gates = data.get("gates", [])
    if not isinstance(raw_gates, list):
        raise ConfigError("gates: expected a list")
    gates = []
    for i, entry in enumerate(raw_gates):
        where = f"gates[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        unknown = set(entry) - {"kind", "qubits", "angle"}
        if unknown:
            raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
        kind = entry.get("kind")
        if kind not in GATE_KINDS:
            raise ConfigError(f"{where}.kind: unknown gate kind {kind!r}")
        qs = entry.get("qubits")
        if not isinstance(qs, list) or not all(isinstance(q, int) for q in qs):
            raise ConfigError(f"{where}.qubits: expected a list of integers")
        for j, q in enumerate(qs):
            if not 0 <= q < qubits:
                raise ConfigError(
                    f"{where}.qubits[{j}]: index {q} out of range for Q={qubits}"
                )
        angle = entry.get("angle")
        if angle is not None and not isinstance(angle, (int, float)):
            raise ConfigError(f"{where}.angle: expected a number, got {angle!r}")
        try:
            gates.append(Gate(kind, tuple(qs), angle))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return Circuit(qubits, tuple(gates))


def serialize_observable(obs: Observable) -> str:
    return json.dumps(
        {"terms": [{"coeff": t.coefficient, "paulis": t.letters} for t in obs.terms]},
        indent=1,
    )


def deserialize_observable(text: str, qubits: int | None = None) -> Observable:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"observable parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict) or "terms" not in data:
        raise ConfigError("observable file must be an object with a 'terms' list")
    terms = []
    for i, entry in enumerate(data["terms"]):
        where = f"terms[{i}]"
        if not isinstance(entry, dict) or set(entry) - {"coeff", "paulis"}:
            raise ConfigError(f"{where}: expected object with coeff and paulis")
        coeff = entry.get("coeff")
        paulis = entry.get("paulis")
        if not isinstance(coeff, (int, float)):
            raise ConfigError(f"{where}.coeff: expected a number")
        if not isinstance(paulis, str):
            raise ConfigError(f"{where}.paulis: expected a string")
        if qubits is not None and len(paulis) != qubits:
            raise ConfigError(
                f"{where}.paulis: length {len(paulis)} != qubit count {qubits}"
            )
        try:
            terms.append(PauliTerm(coeff, paulis))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return Observable(tuple(terms))
