"""Experiment pipelines: optimize -> chain -> train -> fit -> correct ->
report, with machine-readable result files.

Determinism contract: a (config, seed) pair produces byte-identical result
files regardless of worker count. Every stochastic choice derives from the
master seed through fixed spawn keys; results merge by instance index, never
by completion order. Wall-clock times go to timings.json, which is excluded
from the contract.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .circuit import Circuit, Observable, PauliTerm, measurement_groups
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, DiagnosticError
from .regression import (
    FitResult,
    fit_constant,
    fit_linear,
    predict,
    zne_fit_suite,
)
from .sim_exact import StateSpec, pauli_propagation_expectation
from .sim_noisy import (
    NoiseModel,
    noisy_pauli_propagation_expectation,
    sampled_expectation,
    scale_noise,
)
from .trainingset import (
    ChainConfig,
    ChainContext,
    TrainingEvaluators,
    autocorrelation_length,
    build_training_set,
    run_chain,
)
from .workloads import (
    IsingSpec,
    QPESpec,
    binned_ground_truth,
    build_qaoa_circuit,
    build_qpe_circuits,
    ising_observable,
    optimize_qaoa,
    qpe_ancilla_observable,
    qpe_initial_state,
    qpe_relative_error,
    random_qaoa_params,
    spectral_decomposition,
)

RESULTS_JSON = "results.json"
RESULTS_CSV = "results.csv"
SUMMARY_JSON = "summary.json"
CONFIG_JSON = "config.json"
TIMINGS_JSON = "timings.json"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write(path: Path, text: str):
    path.write_text(text)


def _seed_for(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


def _rng_for(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=key))


def _rel_error(value: float, reference: float) -> float:
    return abs(value - reference) / abs(reference)


def _fit_dict(fit: FitResult) -> dict:
    return fit.to_dict()


# ---------------------------------------------------------------------------
# QAOA-family pipeline
# ---------------------------------------------------------------------------


def _qaoa_observable(cfg: ExperimentConfig) -> tuple[IsingSpec, Observable]:
    wl = cfg.workload
    spec = IsingSpec(wl.qubits, wl.g)
    return spec, ising_observable(spec)


def _term_evaluators(obs: Observable, init: StateSpec, noise: NoiseModel, max_terms: int):
    # bare Pauli expectations; coefficients recombine after per-term work
    singles = [Observable((PauliTerm(1.0, t.letters),)) for t in obs.terms]

    def exact_terms(circ: Circuit) -> np.ndarray:
        return np.array(
            [pauli_propagation_expectation(circ, o, init, max_terms) for o in singles]
        )

    def noisy_terms_raw(circ: Circuit) -> np.ndarray:
        return np.array(
            [
                noisy_pauli_propagation_expectation(circ, o, init, noise, max_terms)
                for o in singles
            ]
        )

    return exact_terms, noisy_terms_raw


def _sample_terms(values: np.ndarray, shots: int | None, rng) -> np.ndarray:
    if shots is None:
        return values
    return np.array([sampled_expectation(float(v), shots, rng) for v in values])


def _fit_term(x_noisy: np.ndarray, x_exact: np.ndarray) -> tuple[FitResult, bool]:
    """Linear fit with the documented constant-ansatz fallback on degenerate
    noisy values. Returns (fit, fell_back)."""
    try:
        return fit_linear(x_noisy, x_exact), False
    except DiagnosticError:
        return fit_constant(x_exact), True


def _build_training_set_robust(circuit, chain_cfg, evaluators):
    """Training set with a recorded fallback: a chain whose autocovariance
    diagnostics degenerate (frozen or near-frozen chain) is re-run with unit
    thinning instead of aborting the whole experiment."""
    from dataclasses import replace

    try:
        return build_training_set(circuit, chain_cfg, evaluators), False
    except DiagnosticError:
        fallback_cfg = replace(chain_cfg, thinning=1, burn_in=0)
        return build_training_set(circuit, fallback_cfg, evaluators), True


def _corrected_energy(
    obs: Observable, fits: list[FitResult], noisy_terms: np.ndarray
) -> tuple[float, float]:
    """Recombine per-term corrections; the bar is the coefficient-weighted
    sum of term bars (covers the energy whenever every term is covered)."""
    coeffs = obs.coefficients()
    corrected = 0.0
    bar = 0.0
    for c, fit, x in zip(coeffs, fits, noisy_terms):
        value, term_bar = predict(fit, float(x))
        corrected += c * value
        bar += abs(c) * term_bar
    return corrected, bar


def qaoa_instance_record(raw_config: dict, index: int) -> dict:
    """Full per-instance pipeline for qaoa-cdr / zne-baseline."""
    cfg = parse_config(raw_config)
    spec, obs = _qaoa_observable(cfg)
    init = StateSpec.all_zero(spec.qubits)
    noise = cfg.noise
    max_terms = cfg.capacities.max_terms
    shots = cfg.shots_per_term
    exact_terms_of, noisy_raw_of = _term_evaluators(obs, init, noise, max_terms)
    coeffs = obs.coefficients()
    n_groups = len(measurement_groups(obs))

    init_rng = _rng_for(cfg.seed, 0, index)
    shot_rng = _rng_for(cfg.seed, 1, index)

    initial = random_qaoa_params(cfg.workload.layers, init_rng)
    if cfg.optimizer.evaluator == "exact":
        energy_fn = lambda p: pauli_propagation_expectation(
            build_qaoa_circuit(spec, p), obs, init, max_terms
        )
    else:
        energy_fn = lambda p: noisy_pauli_propagation_expectation(
            build_qaoa_circuit(spec, p), obs, init, noise, max_terms
        )
    outcome = optimize_qaoa(
        spec, cfg.workload.layers, initial, energy_fn, cfg.optimizer.max_evals
    )
    circuit = build_qaoa_circuit(spec, outcome.params)

    exact_terms = exact_terms_of(circuit)
    exact_energy = float(coeffs @ exact_terms)
    noisy_terms = _sample_terms(noisy_raw_of(circuit), shots, shot_rng)
    noisy_energy = float(coeffs @ noisy_terms)

    record = {
        "instance": index,
        "initial_params": {"betas": list(initial.betas), "gammas": list(initial.gammas)},
        "optimized_params": {
            "betas": list(outcome.params.betas),
            "gammas": list(outcome.params.gammas),
        },
        "optimizer": {
            "evaluations": outcome.evaluations,
            "converged": outcome.converged,
            "objective": outcome.energy,
        },
        "exact_energy": exact_energy,
        "noisy_energy": noisy_energy,
        "exact_terms": [float(v) for v in exact_terms],
        "noisy_terms": [float(v) for v in noisy_terms],
        "relative_error_noisy": _rel_error(noisy_energy, exact_energy),
        "shot_accounting": {
            "shots_per_term": shots,
            "measurement_settings": n_groups,
            "shots_per_circuit": None if shots is None else shots * n_groups,
        },
    }

    if cfg.zne is not None:
        points = []
        for c in cfg.zne.scales:
            scaled = scale_noise(noise, c)
            _, raw_of = _term_evaluators(obs, init, scaled, max_terms)
            terms_c = _sample_terms(raw_of(circuit), shots, shot_rng)
            points.append((float(c), float(coeffs @ terms_c)))
        fits = zne_fit_suite(points, cfg.zne.fits)
        record["zne_points"] = [[c, v] for c, v in points]
        record["zne"] = {
            kind: {
                "zero_noise_value": fit.zero_noise_value,
                "uncertainty": fit.uncertainty,
                "relative_error": _rel_error(fit.zero_noise_value, exact_energy),
                **({"fallback_from": fit.fallback_from} if fit.fallback_from else {}),
            }
            for kind, fit in fits.items()
        }

    if cfg.chain is not None and cfg.kind != "zne-baseline":
        record["cdr"] = {}
        for n_idx, n_keep in enumerate(cfg.chain.n_non_clifford):
            train_rng = _rng_for(cfg.seed, 3, index, n_idx)
            evaluators = TrainingEvaluators(
                exact_terms=exact_terms_of,
                noisy_terms=lambda c: _sample_terms(noisy_raw_of(c), shots, train_rng),
                scalar_exact=lambda c: pauli_propagation_expectation(
                    c, obs, init, max_terms
                )
                / spec.qubits,
            )
            chain_cfg = ChainConfig(
                n_non_clifford=n_keep,
                likelihood=cfg.chain.likelihood(),
                chain_length=cfg.chain.chain_length,
                n_pairs=cfg.chain.n_pairs,
                sigma=cfg.chain.sigma,
                burn_in=cfg.chain.burn_in,
                training_count=cfg.chain.training_count,
                n_init=cfg.chain.n_init,
                hastings=cfg.chain.hastings,
                thinning=cfg.chain.thinning,
                rng_seed=_seed_for(cfg.seed, 2, index, n_idx),
            )
            tset, chain_fallback = _build_training_set_robust(
                circuit, chain_cfg, evaluators
            )

            fits = []
            fallbacks = 0
            const_fits = []
            for t in range(len(obs.terms)):
                fit, fell_back = _fit_term(tset.x_noisy[:, t], tset.x_exact[:, t])
                fits.append(fit)
                fallbacks += int(fell_back)
                const_fits.append(fit_constant(tset.x_exact[:, t]))
            cdr_energy, cdr_bar = _corrected_energy(obs, fits, noisy_terms)
            const_energy, const_bar = _corrected_energy(obs, const_fits, noisy_terms)

            total_shots = (
                None
                if shots is None
                else shots * n_groups * (cfg.chain.training_count + 1)
            )
            record["cdr"][str(n_keep)] = {
                "corrected_energy": cdr_energy,
                "error_bar": cdr_bar,
                "relative_error": _rel_error(cdr_energy, exact_energy),
                "covered": bool(abs(cdr_energy - exact_energy) <= cdr_bar),
                "constant_energy": const_energy,
                "constant_error_bar": const_bar,
                "constant_relative_error": _rel_error(const_energy, exact_energy),
                "linear_fit_fallbacks": fallbacks,
                "fits": [_fit_dict(f) for f in fits],
                "constant_fits": [_fit_dict(f) for f in const_fits],
                "training": dict(tset.provenance),
                "chain_fallback": chain_fallback,
                "shot_total_training": total_shots,
            }
    return record


def _aggregate_qaoa(records: list[dict], cfg: ExperimentConfig) -> dict:
    agg: dict = {
        "mean_relative_error_noisy": float(
            np.mean([r["relative_error_noisy"] for r in records])
        ),
        "max_relative_error_noisy": float(
            np.max([r["relative_error_noisy"] for r in records])
        ),
    }
    if cfg.chain is not None and cfg.kind != "zne-baseline":
        agg["cdr"] = {}
        for n_keep in cfg.chain.n_non_clifford:
            key = str(n_keep)
            rel = [r["cdr"][key]["relative_error"] for r in records]
            rel_c = [r["cdr"][key]["constant_relative_error"] for r in records]
            agg["cdr"][key] = {
                "mean_relative_error": float(np.mean(rel)),
                "max_relative_error": float(np.max(rel)),
                "mean_constant_relative_error": float(np.mean(rel_c)),
                "max_constant_relative_error": float(np.max(rel_c)),
                "coverage": float(
                    np.mean([r["cdr"][key]["covered"] for r in records])
                ),
            }
    if cfg.zne is not None and records and "zne" in records[0]:
        agg["zne"] = {
            kind: {
                "mean_relative_error": float(
                    np.mean([r["zne"][kind]["relative_error"] for r in records])
                ),
                "max_relative_error": float(
                    np.max([r["zne"][kind]["relative_error"] for r in records])
                ),
            }
            for kind in records[0]["zne"]
        }
    return agg


def _qaoa_csv(records: list[dict], cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    n_values = list(cfg.chain.n_non_clifford) if (
        cfg.chain is not None and cfg.kind != "zne-baseline"
    ) else [None]
    zne_kinds = list(cfg.zne.fits) if cfg.zne is not None else []
    header = [
        "instance", "n_non_clifford", "exact_energy", "noisy_energy",
        "rel_noisy", "cdr_energy", "cdr_bar", "rel_cdr", "constant_energy",
        "rel_constant", "autocorrelation_length", "burn_in", "acceptance_rate",
        "shot_total_training",
    ] + [f"zne_{k}" for k in zne_kinds]
    writer.writerow(header)
    for r in records:
        for n_keep in n_values:
            row = [r["instance"], n_keep, repr(r["exact_energy"]),
                   repr(r["noisy_energy"]), repr(r["relative_error_noisy"])]
            if n_keep is None:
                row += [""] * 9
            else:
                block = r["cdr"][str(n_keep)]
                row += [
                    repr(block["corrected_energy"]), repr(block["error_bar"]),
                    repr(block["relative_error"]), repr(block["constant_energy"]),
                    repr(block["constant_relative_error"]),
                    block["training"]["autocorrelation_length"],
                    block["training"]["burn_in"],
                    repr(block["training"]["acceptance_rate"]),
                    block["shot_total_training"],
                ]
            row += [repr(r["zne"][k]["zero_noise_value"]) for k in zne_kinds]
            writer.writerow(row)
    return out.getvalue()


def _qaoa_plot_files(records: list[dict], cfg: ExperimentConfig, out_dir: Path):
    if cfg.chain is None or cfg.kind == "zne-baseline":
        return
    lines = ["# n_non_clifford mean_rel_noisy mean_rel_cdr max_rel_noisy max_rel_cdr"]
    for n_keep in cfg.chain.n_non_clifford:
        key = str(n_keep)
        rel = [r["cdr"][key]["relative_error"] for r in records]
        noisy = [r["relative_error_noisy"] for r in records]
        lines.append(
            f"{n_keep} {np.mean(noisy)!r} {np.mean(rel)!r} {np.max(noisy)!r} {np.max(rel)!r}"
        )
    _write(out_dir / "fig-error-vs-n.dat", "\n".join(lines) + "\n")

    n_last = str(cfg.chain.n_non_clifford[-1])
    lines = ["# instance exact noisy cdr cdr_bar"]
    for r in records:
        block = r["cdr"][n_last]
        lines.append(
            f"{r['instance']} {r['exact_energy']!r} {r['noisy_energy']!r} "
            f"{block['corrected_energy']!r} {block['error_bar']!r}"
        )
    _write(out_dir / "fig-energy-instances.dat", "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# QPE pipeline
# ---------------------------------------------------------------------------


def _qpe_spec(cfg: ExperimentConfig, index: int) -> QPESpec:
    wl = cfg.workload
    base = QPESpec(times=wl.times) if wl.bin_centers is None else QPESpec(
        times=wl.times, bin_centers=wl.bin_centers
    )
    state_rng = _rng_for(cfg.seed, 0, index)
    return base.with_random_state(state_rng)


def qpe_instance_record(raw_config: dict, index: int) -> dict:
    """Per-input-state QPE mitigation: one training chain per time point,
    correcting both quadratures with the same selected circuits."""
    cfg = parse_config(raw_config)
    spec = _qpe_spec(cfg, index)
    obs = qpe_ancilla_observable(spec)
    init = qpe_initial_state(spec)
    noise = cfg.noise
    shots = cfg.shots_per_term
    max_terms = cfg.capacities.max_terms
    shot_rng = _rng_for(cfg.seed, 1, index)
    n_keep = cfg.chain.n_non_clifford[0]

    series = {"exact": [], "noisy": [], "corrected": []}
    bars = []
    chain_stats = []
    chain_evaluations = 0

    for t in spec.times:
        creal, cimag = build_qpe_circuits(spec, t)
        exact_re = pauli_propagation_expectation(creal, obs, init, max_terms)
        exact_im = pauli_propagation_expectation(cimag, obs, init, max_terms)
        noisy_re_raw = noisy_pauli_propagation_expectation(creal, obs, init, noise, max_terms)
        noisy_im_raw = noisy_pauli_propagation_expectation(cimag, obs, init, noise, max_terms)
        noisy_re = float(_sample_terms(np.array([noisy_re_raw]), shots, shot_rng)[0])
        noisy_im = float(_sample_terms(np.array([noisy_im_raw]), shots, shot_rng)[0])

        train_rng = _rng_for(cfg.seed, 3, index, t)

        def noisy_single(circ: Circuit) -> float:
            raw = noisy_pauli_propagation_expectation(circ, obs, init, noise, max_terms)
            return float(_sample_terms(np.array([raw]), shots, train_rng)[0])

        evaluators = TrainingEvaluators(
            exact_terms=lambda c: np.array(
                [pauli_propagation_expectation(c, obs, init, max_terms)]
            ),
            noisy_terms=lambda c: np.array([noisy_single(c)]),
            scalar_noisy=noisy_single,
            noisy_scalar_is_single_term=True,
        )
        chain_cfg = ChainConfig(
            n_non_clifford=n_keep,
            likelihood=cfg.chain.likelihood(center=noisy_re),
            chain_length=cfg.chain.chain_length,
            n_pairs=cfg.chain.n_pairs,
            sigma=cfg.chain.sigma,
            burn_in=cfg.chain.burn_in,
            training_count=cfg.chain.training_count,
            n_init=cfg.chain.n_init,
            hastings=cfg.chain.hastings,
            thinning=cfg.chain.thinning,
            rng_seed=_seed_for(cfg.seed, 2, index, t),
        )
        tset, chain_fallback = _build_training_set_robust(creal, chain_cfg, evaluators)
        fit_re, _ = _fit_term(tset.x_noisy[:, 0], tset.x_exact[:, 0])
        corr_re, bar_re = predict(fit_re, noisy_re)

        ctx_imag = ChainContext(cimag, chain_cfg)
        x_noisy_im = []
        x_exact_im = []
        for state in tset.states:
            circ_im = state.realized_circuit(ctx_imag)
            x_exact_im.append(pauli_propagation_expectation(circ_im, obs, init, max_terms))
            x_noisy_im.append(noisy_single(circ_im))
        fit_im, _ = _fit_term(np.array(x_noisy_im), np.array(x_exact_im))
        corr_im, bar_im = predict(fit_im, noisy_im)

        series["exact"].append((float(exact_re), float(exact_im)))
        series["noisy"].append((noisy_re, noisy_im))
        series["corrected"].append((float(corr_re), float(corr_im)))
        bars.append((float(bar_re), float(bar_im)))
        chain_stats.append({**tset.provenance, "fallback": chain_fallback})
        chain_evaluations += tset.provenance["likelihood_evaluations"]

    def complex_series(name):
        return np.array([re + 1j * im for re, im in series[name]])

    wl = cfg.workload
    q_exact = spectral_decomposition(complex_series("exact"), spec, wl.estimator_subdiv)
    q_noisy = spectral_decomposition(complex_series("noisy"), spec, wl.estimator_subdiv)
    q_corr = spectral_decomposition(complex_series("corrected"), spec, wl.estimator_subdiv)
    q_truth = binned_ground_truth(spec)

    return {
        "instance": index,
        "input_state_angles": list(spec.input_state_angles),
        "series": {
            "exact": [[re, im] for re, im in series["exact"]],
            "noisy": [[re, im] for re, im in series["noisy"]],
            "corrected": [[re, im] for re, im in series["corrected"]],
            "error_bars": [[a, b] for a, b in bars],
        },
        "q_exact_estimate": [float(v) for v in q_exact],
        "q_noisy_estimate": [float(v) for v in q_noisy],
        "q_corrected_estimate": [float(v) for v in q_corr],
        "q_ground_truth": [float(v) for v in q_truth],
        "relative_error_noisy": qpe_relative_error(q_noisy, q_exact),
        "relative_error_corrected": qpe_relative_error(q_corr, q_exact),
        "estimator_baseline_error": qpe_relative_error(q_exact, q_truth),
        "chain": {
            "mean_autocorrelation_length": float(
                np.mean([s["autocorrelation_length"] for s in chain_stats])
            ),
            "mean_acceptance_rate": float(
                np.mean([s["acceptance_rate"] for s in chain_stats])
            ),
            "likelihood_evaluations": chain_evaluations,
        },
        "shot_accounting": {
            "shots_per_term": shots,
            "per_time_training_total": None
            if shots is None
            else 2 * shots * (cfg.chain.training_count + 1),
            "chain_exploration_total": None
            if shots is None
            else shots * chain_evaluations,
        },
    }


def _aggregate_qpe(records: list[dict]) -> dict:
    noisy = [r["relative_error_noisy"] for r in records]
    corr = [r["relative_error_corrected"] for r in records]
    return {
        "mean_relative_error_noisy": float(np.mean(noisy)),
        "mean_relative_error_corrected": float(np.mean(corr)),
        "max_relative_error_noisy": float(np.max(noisy)),
        "max_relative_error_corrected": float(np.max(corr)),
        "mean_estimator_baseline_error": float(
            np.mean([r["estimator_baseline_error"] for r in records])
        ),
    }


def _qpe_csv(records: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(
        ["instance", "rel_noisy", "rel_corrected", "estimator_baseline",
         "mean_autocorrelation_length", "mean_acceptance_rate"]
    )
    for r in records:
        writer.writerow([
            r["instance"], repr(r["relative_error_noisy"]),
            repr(r["relative_error_corrected"]), repr(r["estimator_baseline_error"]),
            repr(r["chain"]["mean_autocorrelation_length"]),
            repr(r["chain"]["mean_acceptance_rate"]),
        ])
    return out.getvalue()


def _qpe_plot_files(records: list[dict], out_dir: Path):
    ordered = sorted(records, key=lambda r: r["relative_error_corrected"])
    lines = ["# rank instance rel_noisy rel_corrected"]
    for rank, r in enumerate(ordered):
        lines.append(
            f"{rank} {r['instance']} {r['relative_error_noisy']!r} "
            f"{r['relative_error_corrected']!r}"
        )
    _write(out_dir / "fig-qpe-errors.dat", "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Depolarizing validation and chain diagnostics
# ---------------------------------------------------------------------------


def _near_clifford_variants(circuit: Circuit, count: int, rng) -> list[Circuit]:
    from .circuit import rotation_positions, substituted_gate, clifford_substitution_weights

    positions = rotation_positions(circuit)
    variants = []
    for _ in range(count):
        gates = list(circuit.gates)
        n_keep = len(positions) // 2
        keep = set(rng.choice(len(positions), n_keep, replace=False).tolist())
        for k, pos in enumerate(positions):
            if k not in keep:
                _, probs = clifford_substitution_weights(circuit.gates[pos].angle, 0.5)
                gates[pos] = substituted_gate(circuit.gates[pos], int(rng.choice(4, p=probs)))
        variants.append(circuit.with_gates(gates))
    return variants


def run_depolarizing_validation(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Fit the linear ansatz on exactly-evaluated global-depolarizing data
    and compare with the closed-form coefficients."""
    from .regression import analytic_depolarizing_coefficients
    from .sim_noisy import density_matrix_term_values

    wl = cfg.workload
    spec = IsingSpec(wl.qubits)
    # identity component makes the intercept nonzero
    obs = Observable(
        ising_observable(spec).terms + (PauliTerm(0.5, "I" * wl.qubits),)
    )
    init = StateSpec.all_zero(wl.qubits)
    coeffs = obs.coefficients()
    dim = 1 << wl.qubits
    trace_x = 0.5 * dim

    rng = _rng_for(cfg.seed, 0)
    params = random_qaoa_params(2, rng)
    target = build_qaoa_circuit(spec, params)
    variants = _near_clifford_variants(target, wl.n_train, rng)

    def exact_value(circ):
        return float(
            coeffs @ np.array([
                pauli_propagation_expectation(
                    circ, Observable((PauliTerm(1.0, t.letters),)), init
                )
                for t in obs.terms
            ])
        )

    rows = []
    worst = 0.0
    for p_err in wl.p_err:
        for m in wl.m:
            noise = NoiseModel(p_global=p_err, m_global=m)

            def noisy_value(circ):
                return float(
                    coeffs @ density_matrix_term_values(
                        circ, obs, init, noise, cfg.capacities.q_max_density
                    )
                )

            x_exact = np.array([exact_value(c) for c in variants])
            x_noisy = np.array([noisy_value(c) for c in variants])
            fit = fit_linear(x_noisy, x_exact)
            a1, a2 = analytic_depolarizing_coefficients(p_err, m, trace_x, dim)
            corrected, _ = predict(fit, noisy_value(target))
            target_err = abs(corrected - exact_value(target))
            dev = max(abs(fit.a1 - a1), abs(fit.a2 - a2))
            worst = max(worst, dev, target_err)
            rows.append({
                "p_err": p_err, "m": m,
                "a1_fit": fit.a1, "a1_analytic": a1,
                "a2_fit": fit.a2, "a2_analytic": a2,
                "max_coefficient_deviation": dev,
                "corrected_target_error": target_err,
                "residual_cost": fit.cost,
            })

    records = {"grid": rows}
    summary = {
        "kind": cfg.kind,
        "max_deviation": worst,
        "grid_points": len(rows),
        "n_train": wl.n_train,
    }
    _write_outputs(cfg, out_dir, records, summary, csv_text=_depol_csv(rows))
    return summary


def _depol_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow([
        "p_err", "m", "a1_fit", "a1_analytic", "a2_fit", "a2_analytic",
        "max_coefficient_deviation", "corrected_target_error",
    ])
    for r in rows:
        writer.writerow([
            repr(r["p_err"]), r["m"], repr(r["a1_fit"]), repr(r["a1_analytic"]),
            repr(r["a2_fit"]), repr(r["a2_analytic"]),
            repr(r["max_coefficient_deviation"]), repr(r["corrected_target_error"]),
        ])
    return out.getvalue()


def run_mcmc_diagnostics(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run one chain on a QAOA instance and report its mixing statistics."""
    spec, obs = _qaoa_observable(cfg)
    init = StateSpec.all_zero(spec.qubits)
    max_terms = cfg.capacities.max_terms
    init_rng = _rng_for(cfg.seed, 0, 0)
    params = random_qaoa_params(cfg.workload.layers, init_rng)
    circuit = build_qaoa_circuit(spec, params)

    chain_cfg = ChainConfig(
        n_non_clifford=cfg.chain.n_non_clifford[0],
        likelihood=cfg.chain.likelihood(),
        chain_length=cfg.chain.chain_length,
        n_pairs=cfg.chain.n_pairs,
        sigma=cfg.chain.sigma,
        burn_in=cfg.chain.burn_in,
        training_count=cfg.chain.training_count,
        n_init=cfg.chain.n_init,
        hastings=cfg.chain.hastings,
        rng_seed=_seed_for(cfg.seed, 2, 0, 0),
    )
    ctx = ChainContext(circuit, chain_cfg)
    rng = np.random.default_rng(np.random.SeedSequence(chain_cfg.rng_seed))
    cache: dict = {}

    def value_of(state):
        key = (state.kept, state.powers)
        if key not in cache:
            cache[key] = pauli_propagation_expectation(
                state.realized_circuit(ctx), obs, init, max_terms
            ) / spec.qubits
        return cache[key]

    def log_likelihood(state):
        return chain_cfg.likelihood.log_value(value_of(state))

    record = run_chain(ctx, rng, log_likelihood, value_of, chain_cfg.chain_length)
    angles = [s.angle_vector(ctx) for s in record.states]
    try:
        xi = autocorrelation_length(angles, 0)
        xi_error = None
    except DiagnosticError as exc:
        xi, xi_error = None, str(exc)

    trace = io.StringIO()
    writer = csv.writer(trace)
    writer.writerow(["step", "value"])
    for i, v in enumerate(record.values):
        writer.writerow([i, repr(v)])
    _write(out_dir / "chain-trace.csv", trace.getvalue())

    summary = {
        "kind": cfg.kind,
        "acceptance_rate": record.acceptance_rate,
        "autocorrelation_length": xi,
        "autocorrelation_error": xi_error,
        "chain_length": len(record.states),
        "distinct_states": len(cache),
        "n_non_clifford": chain_cfg.n_non_clifford,
    }
    _write_outputs(cfg, out_dir, {"chain": summary}, summary, csv_text=None)
    return summary


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def _run_instances(task, raw: dict, count: int, workers: int) -> list[dict]:
    if workers <= 1:
        return [task(raw, i) for i in range(count)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, raw, i) for i in range(count)]
        return [f.result() for f in futures]  # index order, not completion order


def _write_outputs(cfg, out_dir: Path, records: dict, summary: dict, csv_text):
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / CONFIG_JSON, _dumps(cfg.raw))
    _write(out_dir / RESULTS_JSON, _dumps(records))
    _write(out_dir / SUMMARY_JSON, _dumps(summary))
    if csv_text is not None:
        _write(out_dir / RESULTS_CSV, csv_text)


def run_experiment(cfg: ExperimentConfig, out_dir, workers: int = 1) -> dict:
    """Execute a validated config; writes result files and returns the
    summary dict. Idempotent given (config, seed)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    if cfg.kind in ("qaoa-cdr", "zne-baseline"):
        count = cfg.workload.instances
        records = _run_instances(qaoa_instance_record, cfg.raw, count, workers)
        aggregates = _aggregate_qaoa(records, cfg)
        payload = {
            "kind": cfg.kind,
            "seed": cfg.seed,
            "instances": records,
            "aggregates": aggregates,
        }
        summary = {"kind": cfg.kind, "instances": count, **aggregates}
        _write_outputs(cfg, out_dir, payload, summary, _qaoa_csv(records, cfg))
        _qaoa_plot_files(records, cfg, out_dir)
    elif cfg.kind == "qpe-cdr":
        count = cfg.workload.instances
        records = _run_instances(qpe_instance_record, cfg.raw, count, workers)
        aggregates = _aggregate_qpe(records)
        payload = {
            "kind": cfg.kind,
            "seed": cfg.seed,
            "instances": records,
            "aggregates": aggregates,
        }
        summary = {"kind": cfg.kind, "instances": count, **aggregates}
        _write_outputs(cfg, out_dir, payload, summary, _qpe_csv(records))
        _qpe_plot_files(records, out_dir)
    elif cfg.kind == "depolarizing-validation":
        summary = run_depolarizing_validation(cfg, out_dir)
    elif cfg.kind == "mcmc-diagnostics":
        summary = run_mcmc_diagnostics(cfg, out_dir)
    else:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    _write(out_dir / TIMINGS_JSON, _dumps({"wall_time_seconds": time.time() - started}))
    return summary


# ---------------------------------------------------------------------------
# Cross-run comparison
# ---------------------------------------------------------------------------


def _method_columns(payload: dict) -> dict[str, list[float]]:
    """Per-instance relative errors keyed by method name."""
    records = payload.get("instances", [])
    columns: dict[str, list[float]] = {}
    if not records:
        raise ConfigError("results file contains no instances")
    if "relative_error_corrected" in records[0]:  # qpe-cdr
        columns["noisy"] = [r["relative_error_noisy"] for r in records]
        columns["cdr"] = [r["relative_error_corrected"] for r in records]
        return columns
    columns["noisy"] = [r["relative_error_noisy"] for r in records]
    for key in sorted(records[0].get("cdr", {}), key=int):
        columns[f"cdr[N={key}]"] = [r["cdr"][key]["relative_error"] for r in records]
        columns[f"constant[N={key}]"] = [
            r["cdr"][key]["constant_relative_error"] for r in records
        ]
    for kind in records[0].get("zne", {}):
        columns[f"zne:{kind}"] = [r["zne"][kind]["relative_error"] for r in records]
    return columns


def compare_runs(result_dirs, out_path=None) -> dict:
    """Align per-instance relative errors across runs; returns and optionally
    writes a method x run table of mean/max errors."""
    tables = {}
    n_instances = None
    for d in result_dirs:
        path = Path(d) / RESULTS_JSON
        if not path.exists():
            raise ConfigError(f"{path}: missing results file")
        payload = json.loads(path.read_text())
        columns = _method_columns(payload)
        count = len(next(iter(columns.values())))
        if n_instances is None:
            n_instances = count
        elif count != n_instances:
            raise ConfigError(
                f"{d}: instance count {count} does not match {n_instances}"
            )
        tables[str(d)] = columns

    comparison = {
        run: {
            method: {
                "mean_relative_error": float(np.mean(vals)),
                "max_relative_error": float(np.max(vals)),
            }
            for method, vals in columns.items()
        }
        for run, columns in tables.items()
    }
    if out_path is not None:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["run", "method", "mean_relative_error", "max_relative_error"])
        for run, methods in comparison.items():
            for method, vals in methods.items():
                writer.writerow([
                    run, method, repr(vals["mean_relative_error"]),
                    repr(vals["max_relative_error"]),
                ])
        _write(Path(out_path), out.getvalue())
    return comparison
