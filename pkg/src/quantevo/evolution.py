"""Sensitivity ranking and gradient-free neuroevolution fine-tuning.

Fine-tuning runs one layer at a time, least sensitive first. Each
iteration mutates every survivor once by adding a Bernoulli-masked step
vector (integer multiples of the layer's LSB), pools survivors with
mutants, and keeps the best population_size candidates. The unmutated
best always survives, so best fitness is non-decreasing, exactly.

Reproducibility contract: per-candidate RNG streams are derived as
hash(seed, layer, iteration, candidate), so evaluation parallelism can
never change results.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, EvaluationError
from .metrics import EvalFn
from .netgraph import Model, set_layer_weights
from .quantizer import QuantScheme, derive_scheme, quantize
from .tensor_ops import Tensor

__all__ = [
    "MutationConfig",
    "Candidate",
    "RankEntry",
    "SensitivityRanking",
    "IterationRecord",
    "spawn_rng",
    "sample_mask",
    "sample_steps",
    "apply_mutation",
    "mutate",
    "sensitivity_rank",
    "finetune_layer",
    "finetune_model",
]

# +-1 carries 40% each, +-2 carries 10% each.
DEFAULT_STEP_VALUES = (-1, 1, -2, 2)
DEFAULT_STEP_PROBS = (0.4, 0.4, 0.1, 0.1)


@dataclass(frozen=True)
class MutationConfig:
    """Knobs of the fine-tuner; defaults follow the reported experiments."""

    p: float = 0.02
    step_values: tuple[int, ...] = DEFAULT_STEP_VALUES
    step_probs: tuple[float, ...] = DEFAULT_STEP_PROBS
    population_size: int = 32
    iterations: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"mutation probability must be in (0, 1), got {self.p}")
        if len(self.step_values) != len(self.step_probs):
            raise ConfigError("step_values and step_probs must have equal length")
        if abs(sum(self.step_probs) - 1.0) > 1e-12:
            raise ConfigError(f"step_probs must sum to 1, got {sum(self.step_probs)}")
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")


@dataclass
class Candidate:
    """One grid-constrained weight tensor with its fitness, if scored."""

    weights: Tensor
    fitness: Optional[float] = None


class RankEntry(NamedTuple):
    layer: str
    metric: float


@dataclass(frozen=True)
class SensitivityRanking:
    """Layers ordered least-sensitive first (highest solo-quantized metric)."""

    entries: tuple[RankEntry, ...]

    def layer_names(self) -> list[str]:
        return [e.layer for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


class IterationRecord(NamedTuple):
    iteration: int
    best_fitness: float
    mean_fitness: float


def spawn_rng(seed: int, *context) -> np.random.Generator:
    """Independent stream keyed by the root seed and a context tuple.

    SHA-256 over the stringified key gives a platform-independent
    derivation, so streams do not depend on scheduling or call order.
    """
    material = "|".join([str(seed), *map(str, context)]).encode()
    digest = hashlib.sha256(material).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def sample_mask(shape: tuple[int, ...], p: float, rng: np.random.Generator) -> Tensor:
    """Binary tensor, each element 1 with probability p."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"mask probability must be in (0, 1), got {p}")
    return Tensor((rng.random(shape) < p).astype(np.float64))


def sample_steps(shape: tuple[int, ...], config: MutationConfig, rng: np.random.Generator) -> Tensor:
    """Elementwise draws from step_values with step_probs."""
    values = np.array(config.step_values, dtype=np.float64)
    steps = rng.choice(values, size=shape, p=np.array(config.step_probs))
    return Tensor(steps)


def apply_mutation(weights: Tensor, mask: Tensor, steps: Tensor, scheme: QuantScheme) -> Tensor:
    """w + mask * (steps * sigma), saturating each code at the bit range.

    Arithmetic runs in code space (w / sigma), where everything is an
    exact small integer, so grid closure holds bit-exactly.
    """
    codes = weights.data * 2.0**scheme.frac_bits
    codes = codes + mask.data * steps.data
    codes = np.clip(codes, scheme.code_min, scheme.code_max)
    # +0.0 keeps -0.0 out of the grid so serialized bytes stay canonical
    return Tensor(codes * scheme.sigma + 0.0)


def mutate(c: Candidate, scheme: QuantScheme, config: MutationConfig, rng: np.random.Generator) -> Candidate:
    """Fresh candidate with a masked step applied; the input is unchanged.

    Draw order is fixed (mask, then steps) and part of the
    reproducibility contract.
    """
    mask = sample_mask(c.weights.shape, config.p, rng)
    steps = sample_steps(c.weights.shape, config, rng)
    return Candidate(apply_mutation(c.weights, mask, steps, scheme))


def sensitivity_rank(model: Model, evaluator: EvalFn, bits: int = 4) -> SensitivityRanking:
    """Score each weighted layer by the model metric with only that layer
    quantized to `bits`; order least-sensitive (highest metric) first,
    ties broken by original layer order."""
    weighted = model.weighted_layers()
    if not weighted:
        raise ConfigError("model has no weighted layers to rank")
    scores: list[RankEntry] = []
    for layer in weighted:
        scheme = derive_scheme(layer.weights, bits)
        solo = set_layer_weights(model, layer.name, quantize(layer.weights, scheme).weights)
        try:
            metric = float(evaluator(solo))
        except Exception as exc:
            raise EvaluationError(f"evaluator failed on solo-quantized layer '{layer.name}'") from exc
        scores.append(RankEntry(layer.name, metric))
    # Stable sort: equal metrics keep original layer order.
    ordered = sorted(scores, key=lambda e: -e.metric)
    return SensitivityRanking(tuple(ordered))


def _validate_on_grid(weights: Tensor, scheme: QuantScheme, layer_name: str) -> None:
    codes = weights.data * 2.0**scheme.frac_bits
    if not np.array_equal(codes, np.round(codes)):
        raise ConfigError(f"layer '{layer_name}' weights are not on the scheme grid")
    if codes.min() < scheme.code_min or codes.max() > scheme.code_max:
        raise ConfigError(f"layer '{layer_name}' weights exceed the scheme's code range")


def finetune_layer(
    model: Model,
    layer_name: str,
    scheme: QuantScheme,
    config: MutationConfig,
    evaluator: EvalFn,
    *,
    workers: int = 1,
) -> tuple[Tensor, list[IterationRecord]]:
    """Neuroevolution over one layer's quantized weights.

    The population starts as population_size copies of the layer. Each
    iteration mutates every survivor once, scores the mutants by
    inserting them into the model, pools survivors with mutants, and
    truncates to the best population_size. Returns the best weights and
    one record per iteration.
    """
    base = model.layer(layer_name).weights
    _validate_on_grid(base, scheme, layer_name)
    if config.iterations == 0:
        return base, []

    base_fitness = float(evaluator(model))
    population = [Candidate(base, base_fitness) for _ in range(config.population_size)]
    history: list[IterationRecord] = []

    def score(j: int, iteration: int) -> Candidate:
        rng = spawn_rng(config.seed, layer_name, iteration, j)
        child = mutate(population[j], scheme, config, rng)
        child.fitness = float(evaluator(set_layer_weights(model, layer_name, child.weights)))
        return child

    for iteration in range(config.iterations):
        indices = range(config.population_size)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                mutants = list(pool.map(lambda j: score(j, iteration), indices))
        else:
            mutants = [score(j, iteration) for j in indices]
        pool_all = population + mutants
        # Stable descending sort: on ties, earlier insertion (survivors
        # before mutants) wins, which keeps elitism exact.
        pool_all.sort(key=lambda c: -c.fitness)
        population = pool_all[: config.population_size]
        fits = [c.fitness for c in population]
        history.append(IterationRecord(iteration, fits[0], float(np.mean(fits))))
    return population[0].weights, history


def finetune_model(
    model: Model,
    ranking: SensitivityRanking,
    schemes: dict[str, QuantScheme],
    config: MutationConfig,
    evaluator: EvalFn,
    max_drop: Optional[float] = None,
    reference_metric: Optional[float] = None,
    *,
    workers: int = 1,
) -> tuple[Model, dict[str, list[IterationRecord]]]:
    """Fine-tune layers in ranking order, committing each result.

    With max_drop set, stops before a layer once the current metric is
    already within max_drop of reference_metric.
    """
    if max_drop is not None and reference_metric is None:
        raise ConfigError("max_drop needs reference_metric to measure the drop against")
    missing = [e.layer for e in ranking.entries if e.layer not in schemes]
    if missing:
        raise ConfigError(f"ranking covers layers without schemes: {missing}")
    histories: dict[str, list[IterationRecord]] = {}
    current = model
    for entry in ranking.entries:
        if max_drop is not None:
            if float(evaluator(current)) >= reference_metric - max_drop:
                break
        best, history = finetune_layer(
            current, entry.layer, schemes[entry.layer], config, evaluator, workers=workers
        )
        current = set_layer_weights(current, entry.layer, best)
        histories[entry.layer] = history
    return current, histories
