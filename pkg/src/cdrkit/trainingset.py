"""Near-Clifford training sets via Markov-chain sampling.

A chain state keeps N of the base circuit's non-Clifford rotations and
replaces every other one with a quarter-rotation power (RZ -> S^n,
RX -> P^n), n drawn with weight exp(-d^2/sigma^2) where d is the matrix
distance between the original rotation and the replacement. An update swaps
the roles of n_pairs (cliffordized, kept) position pairs, so N is invariant
along the chain; proposals are accepted by a Metropolis rule on a likelihood
of the circuit's observable value.

Two acceptance modes exist. The default (``hastings=False``) accepts on the
bare likelihood ratio; its stationary law is L times the substitution-weight
measure over powers, and it mixes quickly for any sigma. ``hastings=True``
adds the proposal correction for the asymmetric power re-draw, making the
stationary law exactly proportional to L -- but with sharply peaked weights
(small sigma) that chain is provably slow: re-drawing an improbable old
power is required to reverse a move, so acceptance collapses. Use it only
with weights flat enough to mix (verified by the transition-matrix tests).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .circuit import (
    Circuit,
    clifford_substitution_weights,
    non_clifford_count,
    rotation_positions,
    substituted_gate,
)
from .errors import ConfigError, DiagnosticError

LIKELIHOOD_KINDS = ("gaussian_target", "monotone_exp", "noisy_proximity")


@dataclass(frozen=True)
class LikelihoodSpec:
    """Chain acceptance likelihood.

    gaussian_target: L ~ exp(-(x - center)^2 / width^2) on exact values;
    monotone_exp:    L ~ exp(-x / width) on exact values;
    noisy_proximity: L ~ exp(-(x - center)^2 / width^2) on noisy values,
                     center being the target circuit's own noisy value.
    """

    kind: str
    center: float = 0.0
    width: float = 0.05

    def __post_init__(self):
        if self.kind not in LIKELIHOOD_KINDS:
            raise ConfigError(f"unknown likelihood kind {self.kind!r}")
        if self.width <= 0:
            raise ConfigError(f"likelihood width must be positive, got {self.width}")

    @property
    def source(self) -> str:
        """Which simulator feeds the likelihood."""
        return "noisy" if self.kind == "noisy_proximity" else "exact"

    def log_value(self, x: float) -> float:
        if self.kind == "monotone_exp":
            return -x / self.width
        d = x - self.center
        return -(d * d) / (self.width * self.width)


@dataclass(frozen=True)
class ChainConfig:
    n_non_clifford: int
    likelihood: LikelihoodSpec
    chain_length: int = 600
    n_pairs: int = 5
    sigma: float = 0.5
    burn_in: int | None = None  # None = auto
    training_count: int = 70
    n_init: int = 200
    hastings: bool = False
    thinning: int | None = None  # None = autocorrelation length; int = fixed
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_non_clifford < 0:
            raise ConfigError("n_non_clifford must be >= 0")
        if self.n_pairs < 1:
            raise ConfigError("n_pairs must be >= 1")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.chain_length < 2:
            raise ConfigError("chain_length must be >= 2")
        if self.training_count < 1:
            raise ConfigError("training_count must be >= 1")
        if self.n_init < 1:
            raise ConfigError("n_init must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.thinning is not None and self.thinning < 1:
            raise ConfigError("thinning must be >= 1")


class ChainContext:
    """Immutable per-chain data: substitutable positions and their
    precomputed replacement-power distributions."""

    def __init__(self, base: Circuit, cfg: ChainConfig):
        self.base = base
        self.cfg = cfg
        self.positions = rotation_positions(base)
        total = len(self.positions)
        if cfg.n_non_clifford > total:
            raise ConfigError(
                f"requested {cfg.n_non_clifford} kept rotations but the "
                f"circuit has only {total} non-Clifford gates"
            )
        self.angles = np.array([base.gates[i].angle for i in self.positions])
        probs = np.empty((total, 4))
        for k, pos in enumerate(self.positions):
            _, probs[k] = clifford_substitution_weights(
                base.gates[pos].angle, cfg.sigma
            )
        self.probs = probs
        self.cum_probs = np.cumsum(probs, axis=1)
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(probs)
        self.sub_gates = [
            tuple(substituted_gate(base.gates[pos], n) for n in range(4))
            for pos in self.positions
        ]


@dataclass(frozen=True)
class NearCliffordState:
    """kept[k] marks rotation k as retained non-Clifford; powers[k] holds the
    quarter-rotation exponent used where kept[k] is False. Powers at kept
    positions are canonicalized to 0 so equal physical circuits compare
    equal."""

    kept: tuple[bool, ...]
    powers: tuple[int, ...]

    def __post_init__(self):
        if len(self.kept) != len(self.powers):
            raise ConfigError("kept/powers length mismatch")
        object.__setattr__(
            self,
            "powers",
            tuple(0 if k else int(p) % 4 for k, p in zip(self.kept, self.powers)),
        )

    def realized_circuit(self, ctx: ChainContext) -> Circuit:
        gates = list(ctx.base.gates)
        for k, pos in enumerate(ctx.positions):
            if not self.kept[k]:
                gates[pos] = ctx.sub_gates[k][self.powers[k]]
        return ctx.base._with_gates_unchecked(gates)

    def angle_vector(self, ctx: ChainContext) -> np.ndarray:
        out = ctx.angles.copy()
        for k in range(len(out)):
            if not self.kept[k]:
                out[k] = (self.powers[k] % 4) * (0.5 * math.pi)
        return out


def _draw_powers(ctx: ChainContext, indices, rng: np.random.Generator) -> list[int]:
    # inverse-CDF draw against precomputed cumulative weights
    return [
        int(np.searchsorted(ctx.cum_probs[k], rng.random() * ctx.cum_probs[k, 3]))
        for k in indices
    ]


def initial_projection(
    ctx: ChainContext,
    rng: np.random.Generator,
    log_likelihood: Callable[[NearCliffordState], float],
) -> tuple[NearCliffordState, float]:
    """Best of n_init random projections: keep N uniformly chosen rotations,
    cliffordize the rest with weight-sampled powers, rank by likelihood."""
    cfg = ctx.cfg
    total = len(ctx.positions)
    best: tuple[NearCliffordState, float] | None = None
    for _ in range(cfg.n_init):
        kept = np.zeros(total, dtype=bool)
        if cfg.n_non_clifford:
            kept[rng.choice(total, size=cfg.n_non_clifford, replace=False)] = True
        powers = np.zeros(total, dtype=int)
        cliff = np.nonzero(~kept)[0]
        for k, power in zip(cliff, _draw_powers(ctx, cliff, rng)):
            powers[k] = power
        state = NearCliffordState(tuple(bool(b) for b in kept), tuple(int(p) for p in powers))
        logl = log_likelihood(state)
        if best is None or logl > best[1]:
            best = (state, logl)
    return best


def mcmc_step(
    state: NearCliffordState,
    logl: float,
    ctx: ChainContext,
    rng: np.random.Generator,
    log_likelihood: Callable[[NearCliffordState], float],
) -> tuple[NearCliffordState, float, bool]:
    """One pair-swap proposal plus Metropolis-Hastings accept/reject.

    Picks up to n_pairs disjoint (cliffordized, kept) pairs; each swap
    restores the cliffordized rotation to its original angle and replaces
    the kept one by a freshly drawn power. Rejected proposals return the
    old state, which the caller re-records.
    """
    cfg = ctx.cfg
    kept = np.array(state.kept, dtype=bool)
    cliff_idx = np.nonzero(~kept)[0]
    kept_idx = np.nonzero(kept)[0]
    n_swap = min(cfg.n_pairs, len(cliff_idx), len(kept_idx))
    if n_swap == 0:
        return state, logl, False
    restore = rng.choice(len(cliff_idx), size=n_swap, replace=False)
    demote = rng.choice(len(kept_idx), size=n_swap, replace=False)
    restore = cliff_idx[restore]
    demote = kept_idx[demote]
    new_kept = kept.copy()
    new_kept[restore] = True
    new_kept[demote] = False
    new_powers = np.array(state.powers, dtype=int)
    drawn = _draw_powers(ctx, demote, rng)
    new_powers[demote] = drawn
    candidate = NearCliffordState(
        tuple(bool(b) for b in new_kept), tuple(int(p) for p in new_powers)
    )
    cand_logl = log_likelihood(candidate)
    log_accept = cand_logl - logl
    if cfg.hastings:
        # reverse move must re-draw the powers the restored positions had
        log_accept += float(
            sum(ctx.log_probs[k, state.powers[k]] for k in restore)
            - sum(ctx.log_probs[k, p] for k, p in zip(demote, drawn))
        )
    if log_accept >= 0 or rng.random() < math.exp(log_accept):
        return candidate, cand_logl, True
    return state, logl, False


def autocorrelation_length(chain_angles, i0: int = 0) -> int:
    """Smallest lag at which the normalized angle-vector autocovariance
    drops to <= 1/10.

    chain_angles: sequence of equal-length angle vectors (one per chain
    element). Raises DiagnosticError for degenerate chains or when the
    threshold is never reached.
    """
    arr = np.asarray(chain_angles, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if i0 < 0 or i0 >= len(arr) - 1:
        raise ConfigError(f"burn-in {i0} leaves no usable chain elements")
    arr = arr[i0:]
    n = len(arr)
    centered = arr - arr.mean(axis=0)
    dots = np.einsum("ij,ij->i", centered, centered)
    # relative threshold: constant chains leave only mean-subtraction dust
    scale = max(float(np.mean(arr * arr)), 1.0)
    if float(dots.sum()) <= n * scale * 1e-24:
        raise DiagnosticError(
            "degenerate chain: zero angle-vector variance (all elements equal)"
        )
    smallest = math.inf
    for lag in range(1, n - 1):
        den = float(dots[: n - lag].sum())
        if den <= 0.0:
            raise DiagnosticError(
                "degenerate chain: zero angle-vector variance in the scanned window"
            )
        num = float(np.einsum("ij,ij->", centered[: n - lag], centered[lag:]))
        ratio = num / den
        smallest = min(smallest, ratio)
        if ratio <= 0.1:
            return lag
    raise DiagnosticError(
        f"chain too short to reach autocovariance 1/10; smallest ratio "
        f"attained was {smallest:.4f}"
    )


@dataclass
class ChainRecord:
    states: list[NearCliffordState]
    values: list[float]  # scalar observable fed to the likelihood
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        moves = len(self.states) - 1
        return self.accepted / moves if moves else 0.0


def run_chain(
    ctx: ChainContext,
    rng: np.random.Generator,
    log_likelihood: Callable[[NearCliffordState], float],
    value_of: Callable[[NearCliffordState], float],
    length: int,
    start: tuple[NearCliffordState, float] | None = None,
) -> ChainRecord:
    if start is None:
        state, logl = initial_projection(ctx, rng, log_likelihood)
    else:
        state, logl = start
    record = ChainRecord([state], [value_of(state)], 0)
    extend_chain(record, ctx, rng, log_likelihood, value_of, length, logl)
    return record


def extend_chain(
    record: ChainRecord,
    ctx: ChainContext,
    rng: np.random.Generator,
    log_likelihood: Callable[[NearCliffordState], float],
    value_of: Callable[[NearCliffordState], float],
    target_length: int,
    logl: float | None = None,
) -> float:
    state = record.states[-1]
    if logl is None:
        logl = log_likelihood(state)
    while len(record.states) < target_length:
        state, logl, ok = mcmc_step(state, logl, ctx, rng, log_likelihood)
        record.states.append(state)
        record.values.append(record.values[-1] if not ok else value_of(state))
        record.accepted += int(ok)
    return logl


# ---------------------------------------------------------------------------
# Training-set assembly
# ---------------------------------------------------------------------------


@dataclass
class TrainingEvaluators:
    """Simulator callables used to build a training set.

    exact_terms / noisy_terms: Circuit -> per-observable-term values (the
    noisy one applies the shot model). scalar_exact / scalar_noisy: Circuit
    -> the scalar the likelihood acts on (an energy density, a single term,
    ...). When the likelihood runs on noisy values and the observable has a
    single term, the chain's recorded values are reused as the training
    x_noisy so the same simulated measurement record serves both purposes.
    """

    exact_terms: Callable[[Circuit], np.ndarray]
    noisy_terms: Callable[[Circuit], np.ndarray]
    scalar_exact: Callable[[Circuit], float] | None = None
    scalar_noisy: Callable[[Circuit], float] | None = None
    noisy_scalar_is_single_term: bool = False


@dataclass
class TrainingSet:
    circuits: list[Circuit]
    states: list[NearCliffordState]  # substitution patterns behind circuits
    x_noisy: np.ndarray  # shape (count, n_terms)
    x_exact: np.ndarray  # shape (count, n_terms)
    chain_indices: list[int]
    provenance: dict

    def __len__(self) -> int:
        return len(self.circuits)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["chain_index", "term_id", "x_noisy", "x_exact"])
            for row, idx in enumerate(self.chain_indices):
                for term in range(self.x_noisy.shape[1]):
                    writer.writerow(
                        [idx, term, repr(self.x_noisy[row, term]), repr(self.x_exact[row, term])]
                    )

    def write_provenance(self, path):
        with open(path, "w") as fh:
            json.dump(self.provenance, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _burn_in_auto(
    cfg: ChainConfig, record: ChainRecord, xi0: int
) -> int:
    """Zero burn-in when the start already sits where the chain settles
    (within two likelihood widths of the second-half running mean);
    otherwise discard 70 autocorrelation lengths."""
    values = np.asarray(record.values)
    running_target = float(values[len(values) // 2 :].mean())
    if abs(values[0] - running_target) <= 2.0 * cfg.likelihood.width:
        return 0
    return 70 * xi0


def build_training_set(
    base: Circuit,
    cfg: ChainConfig,
    evaluators: TrainingEvaluators,
) -> TrainingSet:
    """Run the chain, thin it by its autocorrelation length, and evaluate
    exact and noisy observable terms for the selected circuits. The same
    selection corrects every observable term."""
    ctx = ChainContext(base, cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))

    like = cfg.likelihood
    if like.source == "exact":
        scalar = evaluators.scalar_exact
    else:
        scalar = evaluators.scalar_noisy
    if scalar is None:
        raise ConfigError(
            f"likelihood {like.kind!r} needs a {like.source} scalar evaluator"
        )

    cache: dict[tuple, float] = {}

    def value_of(state: NearCliffordState) -> float:
        key = (state.kept, state.powers)
        if key not in cache:
            cache[key] = float(scalar(state.realized_circuit(ctx)))
        return cache[key]

    def log_likelihood(state: NearCliffordState) -> float:
        return like.log_value(value_of(state))

    record = run_chain(ctx, rng, log_likelihood, value_of, cfg.chain_length)

    def angles():
        return [s.angle_vector(ctx) for s in record.states]

    if cfg.thinning is not None:
        xi = cfg.thinning
        i0 = cfg.burn_in if cfg.burn_in is not None else 0
    else:
        xi0 = autocorrelation_length(angles(), 0)
        i0 = cfg.burn_in if cfg.burn_in is not None else _burn_in_auto(cfg, record, xi0)
        if i0:
            # keep a measurable tail beyond the discarded prefix
            extend_chain(
                record, ctx, rng, log_likelihood, value_of,
                i0 + max(cfg.chain_length, 20 * xi0),
            )
            xi = autocorrelation_length(angles(), i0)
        else:
            xi = xi0

    needed = i0 + (cfg.training_count - 1) * xi + 1
    if needed > len(record.states):
        extend_chain(record, ctx, rng, log_likelihood, value_of, needed)
    indices = [i0 + k * xi for k in range(cfg.training_count)]

    circuits = []
    selected_states = []
    x_noisy = []
    x_exact = []
    reuse = (
        like.source == "noisy"
        and evaluators.noisy_scalar_is_single_term
    )
    for idx in indices:
        state = record.states[idx]
        circ = state.realized_circuit(ctx)
        circuits.append(circ)
        selected_states.append(state)
        x_exact.append(np.asarray(evaluators.exact_terms(circ), dtype=float))
        if reuse:
            x_noisy.append(np.array([record.values[idx]]))
        else:
            x_noisy.append(np.asarray(evaluators.noisy_terms(circ), dtype=float))

    for circ in circuits:
        if non_clifford_count(circ) != cfg.n_non_clifford:
            raise DiagnosticError(
                "internal invariant violated: selected circuit has wrong "
                "non-Clifford count"
            )

    return TrainingSet(
        circuits=circuits,
        states=selected_states,
        x_noisy=np.array(x_noisy),
        x_exact=np.array(x_exact),
        chain_indices=indices,
        provenance={
            "autocorrelation_length": xi,
            "thinning_forced": cfg.thinning is not None,
            "burn_in": i0,
            "seed": cfg.rng_seed,
            "acceptance_rate": record.acceptance_rate,
            "chain_length": len(record.states),
            "likelihood_evaluations": len(cache),
            "n_non_clifford": cfg.n_non_clifford,
            "training_count": cfg.training_count,
            "likelihood": {
                "kind": like.kind,
                "center": like.center,
                "width": like.width,
            },
        },
    )
