import numpy as np
import pytest

from cdrkit.circuit import Circuit, Observable, PauliTerm
from cdrkit.errors import CapacityError, ConfigError
from cdrkit.sim_exact import StateSpec, pauli_propagation_expectation
from cdrkit.sim_noisy import (
    NoiseModel,
    density_matrix_expectation,
    global_channel_positions,
    mix_noise,
    noisy_pauli_propagation_expectation,
    run_density_matrix,
    sampled_expectation,
    scale_noise,
    trajectory_expectation,
)

from conftest import random_circuit, random_observable


def an_observable_with_identity(q, rng):
    obs = random_observable(q, 2, rng)
    terms = tuple(t for t in obs.terms if t.letters != "I" * q)
    return Observable(terms + (PauliTerm(0.7, "I" * q),))


def test_noise_model_validation():
    with pytest.raises(ConfigError):
        NoiseModel(p1=1.5)
    with pytest.raises(ConfigError):
        NoiseModel(p1=0.6, scale_c=2.0)
    with pytest.raises(ConfigError):
        NoiseModel(mix_alpha=1.2)
    assert NoiseModel().is_noiseless()
    assert NoiseModel(p1=0.1, mix_alpha=0.0).eff_p1 == 0.0


def test_scale_and_mix():
    model = NoiseModel(p1=0.01, p2=0.02, p_global=0.05, m_global=2)
    assert scale_noise(model, 1.0) == model
    scaled = scale_noise(model, 1.5)
    assert scaled.eff_p1 == pytest.approx(0.015)
    assert scale_noise(scaled, 2.0).eff_p1 == pytest.approx(0.03)  # compounds
    assert scale_noise(model, 0.0).is_noiseless()
    mixed = mix_noise(model, 0.25)
    assert mixed.eff_p1 == pytest.approx(0.0025)
    assert mix_noise(model, 0.0).is_noiseless()
    with pytest.raises(ConfigError):
        scale_noise(NoiseModel(p2=0.6), 2.0)
    with pytest.raises(ConfigError):
        mix_noise(model, -0.1)


def test_noiseless_dm_matches_exact(rng):
    for _ in range(25):
        q = int(rng.integers(2, 5))
        circuit = random_circuit(q, int(rng.integers(5, 30)), rng)
        obs = random_observable(q, 2, rng)
        exact = pauli_propagation_expectation(circuit, obs, StateSpec.all_zero(q))
        noisy = density_matrix_expectation(circuit, obs, StateSpec.all_zero(q), NoiseModel())
        assert noisy == pytest.approx(exact, abs=1e-10)


def test_global_depolarizing_closed_form(rng):
    """X_noisy = (1-p)^m X_exact + (1-(1-p)^m) Tr(X)/d for any placement."""
    for p, m in [(0.01, 1), (0.05, 5), (0.1, 20), (0.3, 3)]:
        q = 3
        circuit = random_circuit(q, 15, rng, max_non_clifford=4)
        obs = an_observable_with_identity(q, rng)
        trace_x = 0.7 * (1 << q)
        exact = pauli_propagation_expectation(circuit, obs, StateSpec.all_zero(q))
        noisy = density_matrix_expectation(
            circuit, obs, StateSpec.all_zero(q), NoiseModel(p_global=p, m_global=m)
        )
        expected = (1 - p) ** m * exact + (1 - (1 - p) ** m) * trace_x / (1 << q)
        assert noisy == pytest.approx(expected, abs=1e-10)


def test_maximal_global_depolarizing(rng):
    circuit = random_circuit(3, 10, rng)
    obs = random_observable(3, 2, rng)  # traceless terms almost surely
    obs = Observable(tuple(t for t in obs.terms if "I" * 3 != t.letters))
    noisy = density_matrix_expectation(
        circuit, obs, StateSpec.all_zero(3), NoiseModel(p_global=1.0, m_global=1)
    )
    assert noisy == pytest.approx(0.0, abs=1e-12)


def test_dm_trace_preserved_and_positive(rng):
    for _ in range(10):
        q = int(rng.integers(2, 4))
        circuit = random_circuit(q, 20, rng)
        noise = NoiseModel(
            p1=float(rng.uniform(0, 0.05)),
            p2=float(rng.uniform(0, 0.08)),
            gamma_ad=float(rng.uniform(0, 0.05)),
            p_global=float(rng.uniform(0, 0.1)),
            m_global=2,
        )
        rho = run_density_matrix(circuit, StateSpec.all_zero(q), noise)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        assert abs(np.trace(rho).imag) < 1e-12
        eigs = np.linalg.eigvalsh(rho)
        assert eigs.min() >= -1e-10


def test_dm_capacity():
    with pytest.raises(CapacityError):
        run_density_matrix(Circuit(9, ()), StateSpec.all_zero(9), NoiseModel())


def test_noisy_propagation_matches_dm(rng):
    """The two noisy routes are independent implementations; they must agree
    to floating point on every channel type."""
    worst = 0.0
    for _ in range(40):
        q = int(rng.integers(2, 5))
        circuit = random_circuit(q, int(rng.integers(5, 30)), rng)
        obs = an_observable_with_identity(q, rng)
        noise = NoiseModel(
            p1=float(rng.uniform(0, 0.05)),
            p2=float(rng.uniform(0, 0.08)),
            gamma_ad=float(rng.uniform(0, 0.06)),
            p_global=float(rng.uniform(0, 0.1)),
            m_global=int(rng.integers(0, 4)),
            mix_alpha=float(rng.uniform(0.3, 1.0)),
        )
        init = StateSpec.all_plus(q) if rng.integers(2) else StateSpec.all_zero(q)
        dm = density_matrix_expectation(circuit, obs, init, noise)
        npp = noisy_pauli_propagation_expectation(circuit, obs, init, noise)
        worst = max(worst, abs(dm - npp))
    assert worst < 1e-12


def test_global_positions_placement():
    assert global_channel_positions(10, 0) == []
    assert global_channel_positions(10, 1) == [9]  # after the final gate
    assert global_channel_positions(10, 2) == [4, 9]
    assert global_channel_positions(0, 3) == [-1, -1, -1]
    assert global_channel_positions(3, 5)[-1] == 2


def test_trajectory_exact_when_noiseless(rng):
    q = 3
    circuit = random_circuit(q, 12, rng)
    obs = random_observable(q, 2, rng)
    exact = pauli_propagation_expectation(circuit, obs, StateSpec.all_zero(q))
    traj = trajectory_expectation(circuit, obs, StateSpec.all_zero(q), NoiseModel(), 3, 7)
    assert traj == pytest.approx(exact, abs=1e-12)


def test_trajectory_deterministic(rng):
    circuit = random_circuit(3, 12, rng)
    obs = random_observable(3, 2, rng)
    noise = NoiseModel(p1=0.02, p2=0.05, gamma_ad=0.01)
    a = trajectory_expectation(circuit, obs, StateSpec.all_zero(3), noise, 500, 123)
    b = trajectory_expectation(circuit, obs, StateSpec.all_zero(3), noise, 500, 123)
    assert a == b
    c = trajectory_expectation(circuit, obs, StateSpec.all_zero(3), noise, 500, 124)
    assert a != c


def test_trajectory_converges_to_dm(rng):
    """Unbiasedness: the trajectory mean lands within 5 standard errors."""
    q = 3
    circuit = random_circuit(q, 15, rng)
    obs = Observable((PauliTerm(1.0, "ZIZ"), PauliTerm(0.5, "XXI")))
    noise = NoiseModel(p1=0.02, p2=0.05, gamma_ad=0.02, p_global=0.03, m_global=2)
    dm = density_matrix_expectation(circuit, obs, StateSpec.all_zero(q), noise)
    n_traj = 60_000
    traj = trajectory_expectation(circuit, obs, StateSpec.all_zero(q), noise, n_traj, 99)
    # term values are bounded by sum |c|, so this bound is conservative
    stderr = 1.5 / np.sqrt(n_traj)
    assert abs(traj - dm) < 5 * stderr


def test_trajectory_coverage_many_instances(rng):
    """Confidence-interval style check over independent instances."""
    hits = 0
    total = 25
    for k in range(total):
        q = 2
        circuit = random_circuit(q, 10, rng)
        obs = Observable((PauliTerm(1.0, "ZZ"),))
        noise = NoiseModel(p1=0.05, p2=0.1)
        dm = density_matrix_expectation(circuit, obs, StateSpec.all_zero(q), noise)
        n = 4000
        traj = trajectory_expectation(circuit, obs, StateSpec.all_zero(q), noise, n, 1000 + k)
        if abs(traj - dm) < 3.5 / np.sqrt(n):
            hits += 1
    assert hits >= total - 2


def test_sampled_expectation():
    rng = np.random.default_rng(0)
    assert sampled_expectation(1.0, 64, rng) == 1.0
    assert sampled_expectation(-1.0, 64, rng) == -1.0
    vals = [sampled_expectation(0.0, 16384, np.random.default_rng(k)) for k in range(50)]
    assert max(abs(v) for v in vals) < 5 / np.sqrt(16384)
    # deterministic given seed
    assert sampled_expectation(0.37, 1000, 5) == sampled_expectation(0.37, 1000, 5)
    with pytest.raises(ConfigError):
        sampled_expectation(1.2, 100, 0)
    # within roundoff tolerance just outside [-1, 1] is accepted
    assert abs(sampled_expectation(1.0 + 5e-10, 100, 0)) <= 1.0


def test_sampled_expectation_converges():
    rng = np.random.default_rng(3)
    big = sampled_expectation(0.4321, 10_000_000, rng)
    assert big == pytest.approx(0.4321, abs=5e-4)
