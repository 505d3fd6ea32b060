import json

import pytest

from cdrkit.cli import main
from cdrkit.config import parse_config
from cdrkit.errors import ConfigError
from cdrkit.experiments import compare_runs, run_experiment


def minimal_qaoa_config(**overrides):
    cfg = {
        "schema": 1,
        "kind": "qaoa-cdr",
        "seed": 5,
        "workload": {"qubits": 4, "layers": 1, "g": 2.0, "instances": 2},
        "noise": {"p1": 1e-3, "p2": 1e-2},
        "chain": {
            "n_non_clifford": 3,
            "likelihood": {"kind": "gaussian_target", "center": -2.1, "width": 0.5},
            "chain_length": 60,
            "training_count": 10,
            "n_init": 10,
            "n_pairs": 1,
        },
        "shots": {"per_term": 1024},
        "optimizer": {"max_evals": 60},
        "zne": {"scales": [1.0, 1.25, 1.5, 2.0]},
    }
    cfg.update(overrides)
    return cfg


def test_parse_round_trip():
    cfg = parse_config(minimal_qaoa_config())
    assert cfg.kind == "qaoa-cdr"
    assert cfg.workload.qubits == 4
    assert cfg.chain.n_non_clifford == (3,)
    assert cfg.shots_per_term == 1024
    assert cfg.zne.scales == (1.0, 1.25, 1.5, 2.0)


def test_unknown_fields_rejected():
    with pytest.raises(ConfigError, match="unknown fields.*bogus"):
        parse_config(minimal_qaoa_config(bogus=1))
    raw = minimal_qaoa_config()
    raw["workload"]["bogus"] = 2
    with pytest.raises(ConfigError, match="workload.*bogus"):
        parse_config(raw)


def test_schema_version_checked():
    with pytest.raises(ConfigError, match="schema"):
        parse_config(minimal_qaoa_config(schema=3))


def test_field_path_in_errors():
    raw = minimal_qaoa_config()
    raw["chain"]["likelihood"]["kind"] = "nope"
    with pytest.raises(ConfigError, match="chain.likelihood.kind"):
        parse_config(raw)
    raw = minimal_qaoa_config()
    raw["noise"]["p1"] = 2.0
    with pytest.raises(ConfigError, match="p1"):
        parse_config(raw)


def test_chain_required_for_cdr():
    raw = minimal_qaoa_config()
    del raw["chain"]
    with pytest.raises(ConfigError, match="chain"):
        parse_config(raw)


def test_duplicate_n_rejected():
    raw = minimal_qaoa_config()
    raw["chain"]["n_non_clifford"] = [4, 4]
    with pytest.raises(ConfigError, match="distinct"):
        parse_config(raw)


def test_depolarizing_validation_run(tmp_path):
    raw = {
        "schema": 1,
        "kind": "depolarizing-validation",
        "seed": 3,
        "workload": {"qubits": 3, "p_err": [0.01, 0.1], "m": [1, 5], "n_train": 6},
    }
    summary = run_experiment(parse_config(raw), tmp_path / "out")
    assert summary["max_deviation"] < 1e-9
    assert (tmp_path / "out" / "results.csv").exists()
    rows = json.loads((tmp_path / "out" / "results.json").read_text())["grid"]
    assert len(rows) == 4


def test_mcmc_diagnostics_run(tmp_path):
    raw = {
        "schema": 1,
        "kind": "mcmc-diagnostics",
        "seed": 3,
        "workload": {"qubits": 4, "layers": 1, "instances": 1},
        "chain": {
            "n_non_clifford": 3,
            "likelihood": {"kind": "gaussian_target", "center": -2.1, "width": 0.5},
            "chain_length": 100,
            "n_init": 10,
            "n_pairs": 1,
        },
    }
    summary = run_experiment(parse_config(raw), tmp_path / "out")
    assert 0.0 <= summary["acceptance_rate"] <= 1.0
    assert (tmp_path / "out" / "chain-trace.csv").exists()


def test_small_qaoa_run_and_compare(tmp_path):
    cfg = parse_config(minimal_qaoa_config())
    summary = run_experiment(cfg, tmp_path / "a")
    assert summary["instances"] == 2
    assert "cdr" in summary
    run_experiment(cfg, tmp_path / "b")  # identical re-run
    table = compare_runs([tmp_path / "a", tmp_path / "b"], tmp_path / "cmp.csv")
    runs = list(table)
    assert table[runs[0]] == table[runs[1]]  # identical columns
    assert "cdr[N=3]" in table[runs[0]]
    assert (tmp_path / "cmp.csv").exists()
    with pytest.raises(ConfigError, match="missing results"):
        compare_runs([tmp_path / "nowhere"])
    # mismatched instance counts are rejected
    cfg2 = parse_config(minimal_qaoa_config(workload={
        "qubits": 4, "layers": 1, "g": 2.0, "instances": 1,
    }))
    run_experiment(cfg2, tmp_path / "c")
    with pytest.raises(ConfigError, match="does not match"):
        compare_runs([tmp_path / "a", tmp_path / "c"])


def test_determinism_across_workers(tmp_path):
    """Criterion: same config and seed give byte-identical result files,
    independent of worker count."""
    cfg = parse_config(minimal_qaoa_config())
    run_experiment(cfg, tmp_path / "w1", workers=1)
    run_experiment(cfg, tmp_path / "w2", workers=2)
    run_experiment(cfg, tmp_path / "w1b", workers=1)
    for name in ("results.json", "results.csv", "summary.json", "config.json",
                 "fig-error-vs-n.dat", "fig-energy-instances.dat"):
        a = (tmp_path / "w1" / name).read_bytes()
        b = (tmp_path / "w2" / name).read_bytes()
        c = (tmp_path / "w1b" / name).read_bytes()
        assert a == b == c, name


def test_cli_validate_and_run(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "schema": 1,
        "kind": "depolarizing-validation",
        "seed": 1,
        "workload": {"qubits": 3, "p_err": [0.05], "m": [2], "n_train": 5},
    }))
    assert main(["validate", str(path)]) == 0
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "max_deviation" in out
    assert main(["compare", str(tmp_path / "out")]) == 2  # wrong results shape


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["validate", str(bad)]) == 2
    missing_field = tmp_path / "m.json"
    missing_field.write_text(json.dumps({"schema": 1}))
    assert main(["validate", str(missing_field)]) == 2
    # capacity error: statevector limit exceeded via tiny cap
    cap = tmp_path / "cap.json"
    cfg = minimal_qaoa_config()
    cfg["capacities"] = {"q_max_statevector": 14, "q_max_density": 8, "max_terms": 1}
    cap.write_text(json.dumps(cfg))
    assert main(["run", str(cap), "--out", str(tmp_path / "o")]) == 3


def test_cli_seed_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "schema": 1,
        "kind": "depolarizing-validation",
        "seed": 1,
        "workload": {"qubits": 3, "p_err": [0.05], "m": [2], "n_train": 5},
    }))
    assert main(["run", str(path), "--seed", "9", "--out", str(tmp_path / "s9")]) == 0
    echoed = json.loads((tmp_path / "s9" / "config.json").read_text())
    assert echoed["seed"] == 9


def test_shipped_example_configs_validate():
    from pathlib import Path

    from cdrkit.config import load_config

    config_dir = Path(__file__).resolve().parent.parent / "examples-configs"
    paths = sorted(config_dir.glob("*.json"))
    assert len(paths) >= 5
    for path in paths:
        load_config(path)
