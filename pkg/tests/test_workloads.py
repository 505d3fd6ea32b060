import math

import numpy as np
import pytest

from cdrkit.circuit import non_clifford_count
from cdrkit.errors import ConfigError
from cdrkit.gates import HADAMARD, circuit_unitary, pauli_string_matrix
from cdrkit.sim_exact import StateSpec, statevector_expectation
from cdrkit.workloads import (
    IsingSpec,
    QAOAParams,
    QPESpec,
    binned_ground_truth,
    build_qaoa_circuit,
    build_qpe_circuits,
    exact_series,
    ising_ground_energy,
    ising_observable,
    optimize_qaoa,
    qaoa_layer_exponentials,
    qpe_ancilla_observable,
    qpe_initial_state,
    qpe_relative_error,
    random_qaoa_params,
    spectral_decomposition,
)


def test_ising_observable_structure():
    obs = ising_observable(IsingSpec(2, 2.0))
    assert {(t.coefficient, t.letters) for t in obs.terms} == {
        (-2.0, "XI"),
        (-2.0, "IX"),
        (-1.0, "ZZ"),
    }
    obs = ising_observable(IsingSpec(9, 1.3))
    assert len(obs.terms) == 2 * 9 - 1
    assert all(t.coefficient < 0 for t in obs.terms)


@pytest.mark.parametrize("qubits", [4, 8, 16, 32, 64])
@pytest.mark.parametrize("layers", [1, 2, 3, 4])
def test_qaoa_gate_counts(qubits, layers):
    rng = np.random.default_rng(qubits * 10 + layers)
    circuit = build_qaoa_circuit(IsingSpec(qubits, 2.0), random_qaoa_params(layers, rng))
    rz = sum(1 for g in circuit.gates if g.kind == "RZ")
    cnot = sum(1 for g in circuit.gates if g.kind == "CNOT")
    assert rz == (2 * qubits - 1) * layers
    assert cnot == (2 * qubits - 2) * layers
    assert non_clifford_count(circuit) == (2 * qubits - 1) * layers


@pytest.mark.parametrize("qubits", [2, 3, 4])
def test_qaoa_builder_matches_matrix_exponential(qubits):
    """Builder unitary equals the layer exponentials up to global phase."""
    rng = np.random.default_rng(qubits)
    spec = IsingSpec(qubits, 2.0)
    params = random_qaoa_params(2, rng)
    built = circuit_unitary(build_qaoa_circuit(spec, params))
    hadamards = np.array([[1.0]])
    for _ in range(qubits):
        hadamards = np.kron(hadamards, HADAMARD)
    exact = qaoa_layer_exponentials(spec, params) @ hadamards
    overlap = np.trace(built.conj().T @ exact) / (1 << qubits)
    assert abs(abs(overlap) - 1.0) < 1e-12
    phase = overlap / abs(overlap)
    assert np.abs(built * phase - exact).max() < 1e-9


def test_qaoa_zero_layers_energy():
    spec = IsingSpec(5, 2.0)
    circuit = build_qaoa_circuit(spec, QAOAParams((), ()))
    energy = statevector_expectation(circuit, ising_observable(spec), StateSpec.all_zero(5))
    assert energy == pytest.approx(-2.0 * 5, abs=1e-12)


def test_qaoa_zero_angles_energy():
    spec = IsingSpec(4, 2.0)
    circuit = build_qaoa_circuit(spec, QAOAParams((0.0, 0.0), (0.0, 0.0)))
    energy = statevector_expectation(circuit, ising_observable(spec), StateSpec.all_zero(4))
    assert energy == pytest.approx(-2.0 * 4, abs=1e-10)


@pytest.mark.parametrize("qubits", [2, 5, 8, 11])
def test_ground_energy_vs_dense(qubits):
    spec = IsingSpec(qubits, 2.0)
    dense_h = sum(
        t.coefficient * pauli_string_matrix(t.letters) for t in ising_observable(spec).terms
    )
    dense = float(np.linalg.eigvalsh(dense_h)[0])
    assert ising_ground_energy(spec) == pytest.approx(dense, abs=1e-9)


def test_ground_energy_paramagnetic_limit():
    spec = IsingSpec(10, 50.0)
    assert ising_ground_energy(spec) / 10 == pytest.approx(-50.0, rel=1e-3)


def test_ground_energy_scale_at_g2():
    assert ising_ground_energy(IsingSpec(64, 2.0)) / 64 == pytest.approx(-2.1, abs=0.05)


def test_optimizer_reaches_grid_optimum():
    spec = IsingSpec(2, 2.0)
    obs = ising_observable(spec)

    def exact_energy(params):
        return statevector_expectation(
            build_qaoa_circuit(spec, params), obs, StateSpec.all_zero(2)
        )

    best = math.inf
    for beta in np.linspace(0, math.pi, 41):
        for gamma in np.linspace(0, math.pi, 41):
            best = min(best, exact_energy(QAOAParams((beta,), (gamma,))))
    rng = np.random.default_rng(0)
    found = min(
        optimize_qaoa(spec, 1, random_qaoa_params(1, rng), exact_energy, 400).energy
        for _ in range(6)
    )
    assert found <= best + 1e-3


def test_optimizer_deterministic():
    spec = IsingSpec(3, 2.0)
    obs = ising_observable(spec)

    def energy(params):
        return statevector_expectation(
            build_qaoa_circuit(spec, params), obs, StateSpec.all_zero(3)
        )

    start = QAOAParams((0.3,), (0.8,))
    a = optimize_qaoa(spec, 1, start, energy, 200)
    b = optimize_qaoa(spec, 1, start, energy, 200)
    assert a.params == b.params and a.energy == b.energy


# ---------------------------------------------------------------------------
# Phase estimation
# ---------------------------------------------------------------------------


def fresh_qpe(seed=42):
    return QPESpec().with_random_state(np.random.default_rng(seed))


def test_qpe_defaults():
    spec = QPESpec()
    assert spec.system_qubits == 3
    assert spec.times == tuple(range(1, 137))
    assert np.allclose(spec.bin_centers, np.linspace(-0.5, 0.5, 9))
    assert spec.bin_halfwidth == pytest.approx(0.0625)


def test_qpe_non_clifford_budget():
    spec = fresh_qpe()
    creal, cimag = build_qpe_circuits(spec, 7)
    assert non_clifford_count(creal) == 12
    assert non_clifford_count(cimag) == 12
    rz = sum(1 for g in creal.gates if g.kind == "RZ")
    rx = sum(1 for g in creal.gates if g.kind == "RX")
    assert (rz, rx) == (9, 3)


def test_qpe_series_matches_eigendecomposition():
    spec = fresh_qpe()
    obs = qpe_ancilla_observable(spec)
    init = qpe_initial_state(spec)
    reference = exact_series(spec)
    for t in (1, 3, 17, 136):
        creal, cimag = build_qpe_circuits(spec, t)
        value = complex(
            statevector_expectation(creal, obs, init),
            statevector_expectation(cimag, obs, init),
        )
        assert abs(value - reference[spec.times.index(t)]) < 1e-10
        assert abs(value) <= 1.0 + 1e-9


def test_qpe_eigenstate_series():
    spec = QPESpec(input_state_angles=(0.0,) * 6)  # |000>, eigenvalue 1/2
    obs = qpe_ancilla_observable(spec)
    init = qpe_initial_state(spec)
    for t in (1, 5, 12):
        creal, cimag = build_qpe_circuits(spec, t)
        value = complex(
            statevector_expectation(creal, obs, init),
            statevector_expectation(cimag, obs, init),
        )
        assert abs(value - np.exp(-0.5j * t)) < 1e-10


def test_qpe_time_grid_guard():
    spec = fresh_qpe()
    with pytest.raises(ConfigError):
        build_qpe_circuits(spec, 500)


def test_spectral_decomposition_model_class():
    spec = fresh_qpe()
    tgrid = np.array(spec.times, dtype=float)
    for k in (0, 4, 8):
        series = np.exp(-1j * spec.bin_centers[k] * tgrid)
        q = spectral_decomposition(series, spec)
        expected = np.zeros(9)
        expected[k] = 1.0
        assert np.abs(q - expected).max() < 1e-8
    series = 0.5 * np.exp(-1j * spec.bin_centers[2] * tgrid) + 0.5 * np.exp(
        -1j * spec.bin_centers[6] * tgrid
    )
    q = spectral_decomposition(series, spec)
    assert q[2] == pytest.approx(0.5, abs=1e-8)
    assert q[6] == pytest.approx(0.5, abs=1e-8)


def test_spectral_decomposition_true_spectrum():
    """Eigenvalues 1/2 and -1/6: the mass concentrates in the containing
    bins and sums to ~1 even though -1/6 is off the bin-center grid."""
    for seed in (42, 7, 99):
        spec = fresh_qpe(seed)
        q = spectral_decomposition(exact_series(spec), spec)
        truth = binned_ground_truth(spec)
        assert q.sum() == pytest.approx(1.0, abs=0.02)
        assert qpe_relative_error(q, truth) < 0.1
        # bin 8 holds 1/2; bin 3 (-0.125) holds -1/6
        assert q[8] == pytest.approx(truth[8], abs=0.03)
        assert q[3] == pytest.approx(truth[3], abs=0.05)


def test_qpe_relative_error_metric():
    assert qpe_relative_error([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert qpe_relative_error([0.0, 0.0], [0.5, 0.5]) == 1.0
    with pytest.raises(ConfigError):
        qpe_relative_error([0.1], [0.1, 0.2])
    with pytest.raises(ConfigError):
        qpe_relative_error([0.1, 0.2], [0.0, 0.0])


def test_hamiltonian_must_be_z_type():
    from cdrkit.circuit import Observable, PauliTerm

    with pytest.raises(ConfigError):
        QPESpec(hamiltonian=Observable((PauliTerm(1.0, "XZI"),)))


def test_maxcut_hamiltonian_spectrum():
    from cdrkit.workloads import hamiltonian_eigensystem

    evals, _ = hamiltonian_eigensystem(QPESpec(input_state_angles=(0.0,) * 6))
    values, counts = np.unique(np.round(evals, 12), return_counts=True)
    assert np.allclose(values, [-1.0 / 6.0, 0.5])
    assert list(counts) == [6, 2]
