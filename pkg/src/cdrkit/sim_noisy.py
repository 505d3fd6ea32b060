"""Noisy expectation values.

Channel model: a local depolarizing channel follows every single-qubit gate
(probability p1) and every CNOT (p2, two-qubit depolarizing), optionally
followed by amplitude damping (rate gamma_ad) on the touched qubits. A
global depolarizing channel of strength p_global can additionally be applied
m_global times at evenly spaced gate positions, which reproduces the closed
form X_noisy = (1-p)^m X_exact + (1-(1-p)^m) Tr(X)/d for any placement.

Three routes compute the same numbers and are cross-checked in tests:

* ``density_matrix_expectation`` -- reference route, cost 4^Q;
* ``noisy_pauli_propagation_expectation`` -- Heisenberg propagation with
  channel adjoints folded into the Pauli frontier (fast when the circuit is
  near-Clifford or Q is moderate);
* ``trajectory_expectation`` -- Monte Carlo unraveling over statevectors,
  unbiased for the density-matrix value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .circuit import Circuit, Gate, Observable
from .errors import CapacityError, ConfigError
from .sim_exact import (
    DEFAULT_MAX_TERMS,
    DEFAULT_Q_MAX_STATEVECTOR,
    PauliFrontier,
    StateSpec,
    _apply_1q,
    _apply_cnot,
    _term_index_tables,
    preparation_gates,
)

DEFAULT_Q_MAX_DENSITY = 8


@dataclass(frozen=True)
class NoiseModel:
    """Channel parameters; all probabilities are per gate application.

    ``scale_c`` multiplies every probability/rate (the noise-stretching knob
    used for zero-noise extrapolation); ``mix_alpha`` convexly mixes each
    channel with the identity channel, which for probabilistic Pauli channels
    equals multiplying the error probabilities by alpha.
    """

    p1: float = 0.0
    p2: float = 0.0
    gamma_ad: float = 0.0
    p_global: float = 0.0
    m_global: int = 0
    scale_c: float = 1.0
    mix_alpha: float = 1.0

    def __post_init__(self):
        for name in ("p1", "p2", "gamma_ad", "p_global"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.m_global < 0:
            raise ConfigError(f"m_global must be >= 0, got {self.m_global}")
        if self.scale_c < 0:
            raise ConfigError(f"scale_c must be >= 0, got {self.scale_c}")
        if not 0.0 <= self.mix_alpha <= 1.0:
            raise ConfigError(f"mix_alpha must be in [0, 1], got {self.mix_alpha}")
        for name in ("p1", "p2", "p_global", "gamma_ad"):
            eff = getattr(self, name) * self.scale_c
            if eff > 1.0 + 1e-12:
                raise ConfigError(
                    f"scaled probability {name} * scale_c = {eff} exceeds 1"
                )

    # Effective per-application parameters after scaling and mixing.
    @property
    def eff_p1(self) -> float:
        return self.p1 * self.scale_c * self.mix_alpha

    @property
    def eff_p2(self) -> float:
        return self.p2 * self.scale_c * self.mix_alpha

    @property
    def eff_p_global(self) -> float:
        return self.p_global * self.scale_c * self.mix_alpha

    @property
    def eff_gamma(self) -> float:
        return self.gamma_ad * self.scale_c

    def is_noiseless(self) -> bool:
        return (
            self.eff_p1 == 0.0
            and self.eff_p2 == 0.0
            and (self.eff_gamma == 0.0 or self.mix_alpha == 0.0)
            and (self.eff_p_global == 0.0 or self.m_global == 0)
        )


def scale_noise(model: NoiseModel, c: float) -> NoiseModel:
    """Multiply all channel probabilities/rates by c (compounds with any
    previous scaling). Raises if a scaled probability would exceed 1."""
    if c < 0:
        raise ConfigError(f"noise scale must be >= 0, got {c}")
    return replace(model, scale_c=model.scale_c * c)


def mix_noise(model: NoiseModel, alpha: float) -> NoiseModel:
    """Convex combination of each channel with the identity channel."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"mix weight must be in [0, 1], got {alpha}")
    return replace(model, mix_alpha=model.mix_alpha * alpha)


def global_channel_positions(n_gates: int, m: int) -> list[int]:
    """Gate indices (0-based, 'apply after this gate') for the m global
    channel applications, evenly spaced and including one after the final
    gate. For an empty circuit all m applications coincide."""
    if m <= 0:
        return []
    if n_gates == 0:
        return [-1] * m
    return [math.ceil((k + 1) * n_gates / m) - 1 for k in range(m)]


# ---------------------------------------------------------------------------
# Density-matrix route
# ---------------------------------------------------------------------------


def _sel(n_axes: int, axes: tuple[int, ...], bits: tuple[int, ...]) -> tuple:
    out: list = [slice(None)] * n_axes
    for ax, b in zip(axes, bits):
        out[ax] = b
    return tuple(out)


def _depolarize_1q(rho: np.ndarray, q: int, n_qubits: int, p: float):
    n_axes = 2 * n_qubits
    a = rho.reshape((2,) * n_axes)
    axes = (q, n_qubits + q)
    tr = np.asarray(a[_sel(n_axes, axes, (0, 0))] + a[_sel(n_axes, axes, (1, 1))])
    rho *= 1.0 - 4.0 * p / 3.0
    tr *= 2.0 * p / 3.0
    a[_sel(n_axes, axes, (0, 0))] += tr
    a[_sel(n_axes, axes, (1, 1))] += tr


def _depolarize_2q(rho: np.ndarray, qa: int, qb: int, n_qubits: int, p: float):
    n_axes = 2 * n_qubits
    a = rho.reshape((2,) * n_axes)
    axes = (qa, n_qubits + qa, qb, n_qubits + qb)
    tr = np.asarray(sum(
        a[_sel(n_axes, axes, (i, i, j, j))] for i in (0, 1) for j in (0, 1)
    ))
    rho *= 1.0 - 16.0 * p / 15.0
    tr *= 4.0 * p / 15.0
    for i in (0, 1):
        for j in (0, 1):
            a[_sel(n_axes, axes, (i, i, j, j))] += tr


def _amplitude_damp(rho: np.ndarray, q: int, n_qubits: int, gamma: float, alpha: float):
    n_axes = 2 * n_qubits
    a = rho.reshape((2,) * n_axes)
    axes = (q, n_qubits + q)
    s = math.sqrt(1.0 - gamma)
    excited = np.array(a[_sel(n_axes, axes, (1, 1))], copy=True)
    off = 1.0 - alpha + alpha * s
    a[_sel(n_axes, axes, (1, 0))] *= off
    a[_sel(n_axes, axes, (0, 1))] *= off
    a[_sel(n_axes, axes, (1, 1))] *= 1.0 - alpha * gamma
    a[_sel(n_axes, axes, (0, 0))] += (alpha * gamma) * excited


def _depolarize_global(rho: np.ndarray, n_qubits: int, p: float):
    dim = 1 << n_qubits
    mat = rho.reshape(dim, dim)
    tr = np.trace(mat)
    rho *= 1.0 - p
    mat[np.diag_indices(dim)] += p * tr / dim


def _apply_gate_dm(rho: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    n_axes = 2 * n_qubits
    if gate.kind == "CNOT":
        ctl, tgt = gate.qubits
        rho = _apply_cnot(rho, ctl, tgt, n_axes)
        rho = _apply_cnot(rho, n_qubits + ctl, n_qubits + tgt, n_axes)
        return rho
    mat = gate.matrix()
    rho = _apply_1q(rho, mat, gate.qubits[0], n_axes)
    rho = _apply_1q(rho, mat.conj(), n_qubits + gate.qubits[0], n_axes)
    return rho


def _apply_gate_noise_dm(rho: np.ndarray, gate: Gate, n_qubits: int, noise: NoiseModel):
    if gate.kind == "CNOT":
        if noise.eff_p2 > 0:
            _depolarize_2q(rho, gate.qubits[0], gate.qubits[1], n_qubits, noise.eff_p2)
        if noise.eff_gamma > 0 and noise.mix_alpha > 0:
            for q in gate.qubits:
                _amplitude_damp(rho, q, n_qubits, noise.eff_gamma, noise.mix_alpha)
    else:
        if noise.eff_p1 > 0:
            _depolarize_1q(rho, gate.qubits[0], n_qubits, noise.eff_p1)
        if noise.eff_gamma > 0 and noise.mix_alpha > 0:
            _amplitude_damp(rho, gate.qubits[0], n_qubits, noise.eff_gamma, noise.mix_alpha)


def run_density_matrix(
    circuit: Circuit,
    init: StateSpec,
    noise: NoiseModel,
    q_max: int = DEFAULT_Q_MAX_DENSITY,
) -> np.ndarray:
    """Evolve |init><init| through the circuit with noise channels; returns
    the final density matrix as a (2^Q, 2^Q) array."""
    n = circuit.qubits
    if n > q_max:
        raise CapacityError(f"density-matrix simulation capped at {q_max} qubits, got {n}")
    if init.qubits != n:
        raise ConfigError("initial state and circuit qubit counts differ")
    dim = 1 << n
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    for gate in preparation_gates(init):  # state prep is noiseless
        from .sim_exact import apply_gate_statevector

        psi = apply_gate_statevector(psi, gate, n)
    rho = np.outer(psi, psi.conj()).reshape(-1)

    positions = global_channel_positions(len(circuit.gates), noise.m_global)
    p_glob = noise.eff_p_global
    for _ in [k for k in positions if k == -1]:
        _depolarize_global(rho, n, p_glob)
    for i, gate in enumerate(circuit.gates):
        rho = _apply_gate_dm(rho, gate, n)
        _apply_gate_noise_dm(rho, gate, n, noise)
        for _ in [k for k in positions if k == i]:
            _depolarize_global(rho, n, p_glob)
    return rho.reshape(dim, dim)


def dm_term_value(rho: np.ndarray, letters: str) -> float:
    """Tr(rho P) for one Pauli string.

    Tr(rho P) = sum_r rho[r, r^x] * P[r^x, r] with P's nonzero element
    P[a, a^x] = signs[a] * phase as tabulated by _term_index_tables.
    """
    xflip, signs, phase = _term_index_tables(letters)
    dim = rho.shape[0]
    idx = np.arange(dim)
    val = np.sum(rho[idx, idx ^ xflip] * signs[idx ^ xflip]) * phase
    return float(val.real)


def density_matrix_term_values(
    circuit: Circuit,
    obs: Observable,
    init: StateSpec,
    noise: NoiseModel,
    q_max: int = DEFAULT_Q_MAX_DENSITY,
) -> np.ndarray:
    rho = run_density_matrix(circuit, init, noise, q_max)
    return np.array([dm_term_value(rho, t.letters) for t in obs.terms])


def density_matrix_expectation(
    circuit: Circuit,
    obs: Observable,
    init: StateSpec,
    noise: NoiseModel,
    q_max: int = DEFAULT_Q_MAX_DENSITY,
) -> float:
    """Tr(rho X) after evolving through each gate followed by its channels."""
    values = density_matrix_term_values(circuit, obs, init, noise, q_max)
    return obs.combine(values)


# ---------------------------------------------------------------------------
# Heisenberg route with channel adjoints
# ---------------------------------------------------------------------------


def _depol_factor_table(factor: float) -> np.ndarray:
    return np.array([1.0, factor, factor, factor])


def _adjoint_depol_1q(frontier: PauliFrontier, q: int, table: np.ndarray):
    frontier.coeffs = frontier.coeffs * table[(frontier.codes >> (2 * q)) & 3]


def _adjoint_depol_2q(frontier: PauliFrontier, qa: int, qb: int, table: np.ndarray):
    pair = ((frontier.codes >> (2 * qa)) | (frontier.codes >> (2 * qb))) & 3
    frontier.coeffs = frontier.coeffs * table[pair]


def _adjoint_amplitude_damp(frontier: PauliFrontier, q: int, gamma: float, alpha: float):
    """Adjoint channel action: X,Y shrink by sqrt(1-gamma); Z maps to a
    combination of Z and I (mixed with identity by alpha)."""
    shift = 2 * q
    l = (frontier.codes >> shift) & 3
    f_xy = 1.0 - alpha + alpha * math.sqrt(1.0 - gamma)
    f_z = 1.0 - alpha + alpha * (1.0 - gamma)
    f_i = alpha * gamma
    xy = (l == 1) | (l == 3)
    frontier.coeffs = np.where(xy, frontier.coeffs * f_xy, frontier.coeffs)
    zmask = l == 2
    if zmask.any():
        new_codes = frontier.codes[zmask] - (2 << shift)  # Z -> I
        new_coeffs = frontier.coeffs[zmask] * f_i
        frontier.coeffs = np.where(zmask, frontier.coeffs * f_z, frontier.coeffs)
        frontier.codes = np.concatenate([frontier.codes, new_codes])
        frontier.coeffs = np.concatenate([frontier.coeffs, new_coeffs])
        frontier.merge()


def _adjoint_global(frontier: PauliFrontier, p: float):
    frontier.coeffs = np.where(frontier.codes != 0, frontier.coeffs * (1.0 - p), frontier.coeffs)


def noisy_propagate_observable(
    circuit: Circuit,
    obs: Observable,
    noise: NoiseModel,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> PauliFrontier:
    frontier = PauliFrontier.from_observable(obs, circuit.qubits, max_terms)
    positions = global_channel_positions(len(circuit.gates), noise.m_global)
    p_glob = noise.eff_p_global
    p1, p2 = noise.eff_p1, noise.eff_p2
    gamma, alpha = noise.eff_gamma, noise.mix_alpha
    damping = gamma > 0 and alpha > 0
    table1 = _depol_factor_table(1.0 - 4.0 * p1 / 3.0) if p1 > 0 else None
    table2 = _depol_factor_table(1.0 - 16.0 * p2 / 15.0) if p2 > 0 else None
    for i in range(len(circuit.gates) - 1, -1, -1):
        gate = circuit.gates[i]
        if positions:
            for _ in [k for k in positions if k == i]:
                _adjoint_global(frontier, p_glob)
        if gate.kind == "CNOT":
            if damping:
                for q in reversed(gate.qubits):
                    _adjoint_amplitude_damp(frontier, q, gamma, alpha)
            if table2 is not None:
                _adjoint_depol_2q(frontier, gate.qubits[0], gate.qubits[1], table2)
        else:
            if damping:
                _adjoint_amplitude_damp(frontier, gate.qubits[0], gamma, alpha)
            if table1 is not None:
                _adjoint_depol_1q(frontier, gate.qubits[0], table1)
        frontier.apply_gate_backward(gate, i)
    for _ in [k for k in positions if k == -1]:
        _adjoint_global(frontier, p_glob)
    return frontier


def noisy_pauli_propagation_expectation(
    circuit: Circuit,
    obs: Observable,
    init: StateSpec,
    noise: NoiseModel,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> float:
    """Same value as density_matrix_expectation, computed in the Heisenberg
    picture; preferred when the frontier stays small."""
    return noisy_propagate_observable(circuit, obs, noise, max_terms).evaluate(init)


# ---------------------------------------------------------------------------
# Trajectory route
# ---------------------------------------------------------------------------


def _batch_apply_1q(states: np.ndarray, mat: np.ndarray, q: int, n_qubits: int):
    n, dim = states.shape
    pre = 1 << q
    post = dim >> (q + 1)
    if post > 1:
        return np.matmul(mat, states.reshape(n * pre, 2, post)).reshape(n, dim)
    return np.matmul(states.reshape(n * pre, 2), mat.T).reshape(n, dim)


def _batch_apply_cnot(states: np.ndarray, ctl: int, tgt: int, n_qubits: int):
    n, dim = states.shape
    a = states.reshape((n,) + (2,) * n_qubits)
    sel: list = [slice(None)] * (n_qubits + 1)
    sel[1 + ctl] = 1
    sub = a[tuple(sel)]
    t_axis = tgt if tgt < ctl else tgt - 1
    lo: list = [slice(None)] * n_qubits
    hi: list = [slice(None)] * n_qubits
    lo[1 + t_axis] = 0
    hi[1 + t_axis] = 1
    tmp = sub[tuple(lo)].copy()
    sub[tuple(lo)] = sub[tuple(hi)]
    sub[tuple(hi)] = tmp
    return states


def _batch_apply_pauli_masked(states, mask, pauli: int, q: int, n_qubits: int):
    """Apply X (1), Z (2) or Y (3) on qubit q to the masked trajectories."""
    if not mask.any():
        return
    sub = states[mask]
    n, dim = sub.shape
    pre = 1 << q
    post = dim >> (q + 1)
    v = sub.reshape(n, pre, 2, post)
    if pauli == 1:  # X
        v = v[:, :, ::-1, :]
    elif pauli == 2:  # Z
        v = v.copy()
        v[:, :, 1, :] *= -1.0
    else:  # Y
        v = v[:, :, ::-1, :] * np.array([-1j, 1j]).reshape(1, 1, 2, 1)
    states[mask] = v.reshape(n, dim)


def trajectory_expectation(
    circuit: Circuit,
    obs: Observable,
    init: StateSpec,
    noise: NoiseModel,
    n_traj: int,
    rng_seed: int,
    q_max: int = DEFAULT_Q_MAX_STATEVECTOR,
) -> float:
    """Monte Carlo unraveling; converges to density_matrix_expectation as
    n_traj grows. Deterministic for a fixed seed."""
    n = circuit.qubits
    if n > q_max:
        raise CapacityError(f"trajectory simulation capped at {q_max} qubits, got {n}")
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    dim = 1 << n

    from .sim_exact import apply_gate_statevector

    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    for gate in preparation_gates(init):
        psi = apply_gate_statevector(psi, gate, n)
    states = np.broadcast_to(psi, (n_traj, dim)).copy()

    def insert_depol(qubits: tuple[int, ...], p: float):
        if p <= 0:
            return
        hit = rng.random(n_traj) < p
        if not hit.any():
            return
        if len(qubits) == 1:
            which = rng.integers(1, 4, n_traj)
            for pauli in (1, 2, 3):
                _batch_apply_pauli_masked(states, hit & (which == pauli), pauli, qubits[0], n)
        else:
            which = rng.integers(1, 16, n_traj)
            for pa in range(4):
                for pb in range(4):
                    code = pa * 4 + pb
                    if code == 0:
                        continue
                    mask = hit & (which == code)
                    if pa:
                        _batch_apply_pauli_masked(states, mask, pa, qubits[0], n)
                    if pb:
                        _batch_apply_pauli_masked(states, mask, pb, qubits[1], n)

    def insert_damping(q: int, gamma: float, alpha: float):
        active = rng.random(n_traj) < alpha
        if not active.any():
            return
        pre = 1 << q
        post = dim >> (q + 1)
        v = states.reshape(n_traj, pre, 2, post)
        pop1 = np.sum(np.abs(v[:, :, 1, :]) ** 2, axis=(1, 2))
        jump = active & (rng.random(n_traj) < gamma * pop1)
        stay = active & ~jump
        if jump.any():
            vj = v[jump]
            vj[:, :, 0, :] = vj[:, :, 1, :] * math.sqrt(gamma)
            vj[:, :, 1, :] = 0.0
            norms = np.sqrt(np.sum(np.abs(vj) ** 2, axis=(1, 2, 3)))
            states[jump] = (vj / norms[:, None, None, None]).reshape(-1, dim)
        if stay.any():
            vs = v[stay]
            vs[:, :, 1, :] *= math.sqrt(1.0 - gamma)
            norms = np.sqrt(np.sum(np.abs(vs) ** 2, axis=(1, 2, 3)))
            states[stay] = (vs / norms[:, None, None, None]).reshape(-1, dim)

    def insert_global(p: float):
        if p <= 0:
            return
        hit = rng.random(n_traj) < p
        basis = rng.integers(0, dim, n_traj)
        if hit.any():
            states[hit] = 0.0
            states[hit, basis[hit]] = 1.0

    positions = global_channel_positions(len(circuit.gates), noise.m_global)
    for _ in [k for k in positions if k == -1]:
        insert_global(noise.eff_p_global)
    for i, gate in enumerate(circuit.gates):
        if gate.kind == "CNOT":
            states = _batch_apply_cnot(states, gate.qubits[0], gate.qubits[1], n)
            insert_depol(gate.qubits, noise.eff_p2)
            if noise.eff_gamma > 0:
                for q in gate.qubits:
                    insert_damping(q, noise.eff_gamma, noise.mix_alpha)
        else:
            states = _batch_apply_1q(states, gate.matrix(), gate.qubits[0], n)
            insert_depol(gate.qubits, noise.eff_p1)
            if noise.eff_gamma > 0:
                insert_damping(gate.qubits[0], noise.eff_gamma, noise.mix_alpha)
        for _ in [k for k in positions if k == i]:
            insert_global(noise.eff_p_global)

    total = 0.0
    for term in obs.terms:
        xflip, signs, phase = _term_index_tables(term.letters)
        idx = np.arange(dim)
        weights = signs * phase
        vals = np.einsum("td,td->t", states.conj(), weights * states[:, idx ^ xflip])
        total += term.coefficient * float(vals.real.mean())
    return total


# ---------------------------------------------------------------------------
# Finite shots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShotSpec:
    """Shots per observable term (per measurement setting) and the seed that
    makes the sampling reproducible."""

    shots_per_term: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.shots_per_term < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots_per_term}")


def sampled_expectation(exact_value: float, shots: int, rng) -> float:
    """Mean of `shots` independent +/-1 draws with the given mean.

    ``rng`` is either an integer seed or a numpy Generator (shared by
    pipelines so a master seed determines the full sampling sequence).
    """
    if shots < 1:
        raise ConfigError(f"shots must be >= 1, got {shots}")
    if abs(exact_value) > 1.0 + 1e-9:
        raise ConfigError(f"single-Pauli expectation {exact_value} outside [-1, 1]")
    v = min(1.0, max(-1.0, exact_value))
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(np.random.SeedSequence(int(rng)))
    ones = rng.binomial(shots, 0.5 * (1.0 + v))
    return 2.0 * ones / shots - 1.0
