"""Experiment configuration: strict JSON schema (versioned, unknown fields
rejected) parsed into typed settings objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .sim_noisy import NoiseModel
from .trainingset import LIKELIHOOD_KINDS, LikelihoodSpec
from .regression import ZNE_FIT_KINDS

EXPERIMENT_KINDS = (
    "qaoa-cdr",
    "qpe-cdr",
    "zne-baseline",
    "mcmc-diagnostics",
    "depolarizing-validation",
)

SCHEMA_VERSION = 1


class _Section:
    """Path-aware strict reader over one JSON object."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def get(self, key, types, default=None, required=False, check=None):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.path}.{key}: missing required field")
            return default
        value = self.data[key]
        if types is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, types) or isinstance(value, bool) and types is not bool:
            raise ConfigError(
                f"{self.path}.{key}: expected {getattr(types, '__name__', types)}, "
                f"got {type(value).__name__}"
            )
        if check is not None and not check(value):
            raise ConfigError(f"{self.path}.{key}: invalid value {value!r}")
        return value

    def section(self, key, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.path}.{key}: missing required section")
            return None
        return _Section(self.data[key], f"{self.path}.{key}")

    def number_list(self, key, default=None, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.path}.{key}: missing required field")
            return default
        value = self.data[key]
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{self.path}.{key}: expected a list of numbers")
        return value

    def finish(self):
        unknown = set(self.data) - self.seen
        if unknown:
            raise ConfigError(f"{self.path}: unknown fields {sorted(unknown)}")


@dataclass(frozen=True)
class ChainSettings:
    n_non_clifford: tuple[int, ...]  # one chain per value
    likelihood_kind: str
    likelihood_center: float | None  # None: filled per target (noisy_proximity)
    likelihood_width: float
    chain_length: int
    n_pairs: int
    sigma: float
    burn_in: int | None
    training_count: int
    n_init: int
    hastings: bool
    thinning: int | None

    def likelihood(self, center: float | None = None) -> LikelihoodSpec:
        c = self.likelihood_center if center is None else center
        return LikelihoodSpec(self.likelihood_kind, c if c is not None else 0.0,
                              self.likelihood_width)


@dataclass(frozen=True)
class QAOAWorkload:
    qubits: int
    layers: int
    g: float
    instances: int


@dataclass(frozen=True)
class QPEWorkload:
    times: tuple[int, ...]
    bin_centers: tuple[float, ...] | None  # None = default grid
    instances: int
    estimator_subdiv: int


@dataclass(frozen=True)
class DepolValidationWorkload:
    qubits: int
    p_err: tuple[float, ...]
    m: tuple[int, ...]
    n_train: int


@dataclass(frozen=True)
class OptimizerSettings:
    max_evals: int = 400
    evaluator: str = "noisy"  # "noisy" | "exact"


@dataclass(frozen=True)
class ZNESettings:
    scales: tuple[float, ...] = (1.0, 1.1, 1.25, 1.5)
    fits: tuple[str, ...] = ZNE_FIT_KINDS


@dataclass(frozen=True)
class Capacities:
    q_max_statevector: int = 14
    q_max_density: int = 8
    max_terms: int = 2_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    workload: object
    noise: NoiseModel
    chain: ChainSettings | None
    shots_per_term: int | None
    optimizer: OptimizerSettings
    zne: ZNESettings | None
    capacities: Capacities
    raw: dict = field(repr=False, default_factory=dict)


def _parse_noise(sec: _Section | None) -> NoiseModel:
    if sec is None:
        return NoiseModel()
    model = NoiseModel(
        p1=sec.get("p1", float, 0.0),
        p2=sec.get("p2", float, 0.0),
        gamma_ad=sec.get("gamma_ad", float, 0.0),
        p_global=sec.get("p_global", float, 0.0),
        m_global=sec.get("m_global", int, 0),
        scale_c=sec.get("scale_c", float, 1.0),
        mix_alpha=sec.get("mix_alpha", float, 1.0),
    )
    sec.finish()
    return model


def _parse_chain(sec: _Section | None, kind: str) -> ChainSettings | None:
    if sec is None:
        return None
    raw_n = sec.data.get("n_non_clifford")
    sec.seen.add("n_non_clifford")
    if isinstance(raw_n, int) and not isinstance(raw_n, bool):
        n_values = (raw_n,)
    elif isinstance(raw_n, list) and raw_n and all(
        isinstance(v, int) and not isinstance(v, bool) for v in raw_n
    ):
        n_values = tuple(raw_n)
    else:
        raise ConfigError(
            f"{sec.path}.n_non_clifford: expected an integer or list of integers"
        )
    if len(set(n_values)) != len(n_values):
        raise ConfigError(f"{sec.path}.n_non_clifford: values must be distinct")
    like = sec.section("likelihood", required=True)
    lk = like.get("kind", str, required=True, check=lambda v: v in LIKELIHOOD_KINDS)
    center = like.get("center", float, None)
    width = like.get("width", float, 0.05, check=lambda v: v > 0)
    like.finish()
    if lk != "noisy_proximity" and center is None:
        raise ConfigError(f"{like.path}.center: required for likelihood {lk!r}")
    burn_in = sec.get("burn_in", int, None, check=lambda v: v >= 0)
    settings = ChainSettings(
        n_non_clifford=n_values,
        likelihood_kind=lk,
        likelihood_center=center,
        likelihood_width=width,
        chain_length=sec.get("chain_length", int, 600, check=lambda v: v >= 2),
        n_pairs=sec.get("n_pairs", int, 5, check=lambda v: v >= 1),
        sigma=sec.get("sigma", float, 0.5, check=lambda v: v > 0),
        burn_in=burn_in,
        training_count=sec.get("training_count", int, 70, check=lambda v: v >= 1),
        n_init=sec.get("n_init", int, 200, check=lambda v: v >= 1),
        hastings=sec.get("hastings", bool, False),
        thinning=sec.get("thinning", int, None, check=lambda v: v >= 1),
    )
    sec.finish()
    if kind == "qpe-cdr" and lk != "noisy_proximity" and center is None:
        raise ConfigError("qpe-cdr requires a likelihood center or noisy_proximity")
    return settings


def _parse_workload(sec: _Section, kind: str):
    if kind in ("qaoa-cdr", "zne-baseline", "mcmc-diagnostics"):
        wl = QAOAWorkload(
            qubits=sec.get("qubits", int, required=True, check=lambda v: v >= 2),
            layers=sec.get("layers", int, required=True, check=lambda v: v >= 0),
            g=sec.get("g", float, 2.0),
            instances=sec.get("instances", int, 1, check=lambda v: v >= 1),
        )
    elif kind == "qpe-cdr":
        times = sec.number_list("times", default=list(range(1, 137)))
        if not all(isinstance(t, int) and t >= 1 for t in times):
            raise ConfigError(f"{sec.path}.times: expected positive integers")
        centers = sec.number_list("bin_centers", default=None)
        wl = QPEWorkload(
            times=tuple(times),
            bin_centers=tuple(float(c) for c in centers) if centers else None,
            instances=sec.get("instances", int, 1, check=lambda v: v >= 1),
            estimator_subdiv=sec.get("estimator_subdiv", int, 16, check=lambda v: v >= 2),
        )
    elif kind == "depolarizing-validation":
        wl = DepolValidationWorkload(
            qubits=sec.get("qubits", int, 4, check=lambda v: v >= 2),
            p_err=tuple(sec.number_list("p_err", default=[0.01, 0.05, 0.1])),
            m=tuple(int(v) for v in sec.number_list("m", default=[1, 5, 20])),
            n_train=sec.get("n_train", int, 10, check=lambda v: v >= 3),
        )
    else:
        raise ConfigError(f"unsupported workload for kind {kind!r}")
    sec.finish()
    return wl


def parse_config(data: dict) -> ExperimentConfig:
    top = _Section(data, "config")
    schema = top.get("schema", int, required=True)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"config.schema: unsupported version {schema}")
    kind = top.get("kind", str, required=True, check=lambda v: v in EXPERIMENT_KINDS)
    seed = top.get("seed", int, 0)
    workload = _parse_workload(top.section("workload", required=True), kind)
    noise = _parse_noise(top.section("noise"))
    chain = _parse_chain(top.section("chain"), kind)
    if kind in ("qaoa-cdr", "qpe-cdr", "mcmc-diagnostics") and chain is None:
        raise ConfigError(f"config.chain: required for kind {kind!r}")

    shots_sec = top.section("shots")
    shots = None
    if shots_sec is not None:
        shots = shots_sec.get("per_term", int, required=True, check=lambda v: v >= 1)
        shots_sec.finish()

    opt_sec = top.section("optimizer")
    if opt_sec is None:
        optimizer = OptimizerSettings()
    else:
        optimizer = OptimizerSettings(
            max_evals=opt_sec.get("max_evals", int, 400, check=lambda v: v >= 10),
            evaluator=opt_sec.get(
                "evaluator", str, "noisy", check=lambda v: v in ("noisy", "exact")
            ),
        )
        opt_sec.finish()

    zne_sec = top.section("zne")
    zne = None
    if zne_sec is not None:
        scales = tuple(zne_sec.number_list("scales", default=[1.0, 1.1, 1.25, 1.5]))
        if len(set(scales)) != len(scales) or any(s < 0 for s in scales):
            raise ConfigError(f"{zne_sec.path}.scales: need distinct nonnegative values")
        fits = zne_sec.data.get("fits", list(ZNE_FIT_KINDS))
        zne_sec.seen.add("fits")
        if not isinstance(fits, list) or not all(f in ZNE_FIT_KINDS for f in fits):
            raise ConfigError(f"{zne_sec.path}.fits: expected a list from {ZNE_FIT_KINDS}")
        zne = ZNESettings(scales=scales, fits=tuple(fits))
        zne_sec.finish()
    elif kind == "zne-baseline":
        zne = ZNESettings()

    cap_sec = top.section("capacities")
    if cap_sec is None:
        capacities = Capacities()
    else:
        capacities = Capacities(
            q_max_statevector=cap_sec.get("q_max_statevector", int, 14),
            q_max_density=cap_sec.get("q_max_density", int, 8),
            max_terms=cap_sec.get("max_terms", int, 2_000_000),
        )
        cap_sec.finish()

    top.finish()
    return ExperimentConfig(
        kind=kind,
        seed=seed,
        workload=workload,
        noise=noise,
        chain=chain,
        shots_per_term=shots,
        optimizer=optimizer,
        zne=zne,
        capacities=capacities,
        raw=data,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): "
            f"{exc.msg}"
        ) from exc
    return parse_config(data)
