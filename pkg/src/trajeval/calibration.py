"""Rank-guided calibration of the composite trajectory score.

The composite score is a weighted mean of normalized metric channels; when an
episode carries a collision or failure flag every channel is divided by the
corresponding penalty divisor before aggregation.  A real-valued genetic
algorithm with tournament selection searches the weight/divisor vector that
minimizes the mean absolute difference between expert ranks and the ranks
induced by the composite score.  Because rank loss is scale-free, calibrated
scores are finally mapped onto the human scoring distribution by z-score
alignment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, canonical_json
from .errors import ValidationError
from .kinematics import KinematicSummary
from .metrics import average_ranks

CHANNELS = ("vel_smoothness", "acc_smoothness", "speed_moderation", "path_efficiency")
PARAM_NAMES = CHANNELS + ("lambda_coll", "lambda_fail")

DEFAULT_BOUNDS = {
    "vel_smoothness": (0.0, 10.0),
    "acc_smoothness": (0.0, 10.0),
    "speed_moderation": (0.0, 10.0),
    "path_efficiency": (0.0, 10.0),
    "lambda_coll": (1.0, 10.0),
    "lambda_fail": (1.0, 10.0),
}

# Uniform blend width for the BLX crossover of two real-valued parents.
BLEND_ALPHA = 0.5

THETA_VERSION = "theta/1"


@dataclass(frozen=True)
class EpisodeFeatures:
    """Raw inputs to channel normalization for one episode."""

    summary: KinematicSummary
    duration_s: float
    collision: bool
    failure: bool


@dataclass(frozen=True)
class MetricChannels:
    """Normalized per-episode channel values in [0, 10] plus violation flags."""

    values: dict[str, float]
    collision: bool
    failure: bool

    def __post_init__(self):
        for name, v in self.values.items():
            if not (0.0 <= v <= 10.0):
                raise ValidationError(f"channel {name}={v} outside [0, 10]")


@dataclass(frozen=True)
class ParamVector:
    """Channel weights plus the collision/failure penalty divisors."""

    weights: dict[str, float]
    lambda_coll: float
    lambda_fail: float

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValidationError("weights must be nonnegative")
        if sum(self.weights.values()) <= 0:
            raise ValidationError("weight sum must be positive")
        # A divisor below 1 would reward violations.
        if self.lambda_coll < 1.0 or self.lambda_fail < 1.0:
            raise ValidationError("penalty divisors must be >= 1")

    def as_array(self, names=PARAM_NAMES) -> np.ndarray:
        vals = dict(self.weights, lambda_coll=self.lambda_coll, lambda_fail=self.lambda_fail)
        return np.array([vals[n] for n in names], dtype=float)

    @classmethod
    def from_array(cls, vec, names=PARAM_NAMES) -> "ParamVector":
        d = dict(zip(names, (float(x) for x in vec)))
        lam_c = d.pop("lambda_coll")
        lam_f = d.pop("lambda_fail")
        return cls(weights=d, lambda_coll=lam_c, lambda_fail=lam_f)


@dataclass(frozen=True)
class ScoreStats:
    """Population mean and standard deviation of a score distribution."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValidationError("std must be nonnegative")

    @classmethod
    def of(cls, values) -> "ScoreStats":
        v = np.asarray(values, dtype=float)
        return cls(mean=float(v.mean()), std=float(v.std()))


@dataclass(frozen=True)
class GaConfig:
    population: int = 64
    generations: int = 200
    tournament_k: int = 3
    crossover_rate: float = 0.9
    # Per-parameter Gaussian mutation sigma, as a fraction of that
    # parameter's bound range.
    mutation_sigma: float = 0.05
    seed: int = 0
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __post_init__(self):
        if self.population < 2:
            raise ValidationError("population must be >= 2")
        if not 1 <= self.tournament_k <= self.population:
            raise ValidationError("tournament_k must be in [1, population]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValidationError("crossover_rate must be a probability")
        if self.mutation_sigma <= 0:
            raise ValidationError("mutation_sigma must be positive")
        if self.generations < 0:
            raise ValidationError("generations must be nonnegative")
        for name in PARAM_NAMES:
            lo, hi = self.bounds.get(name, (None, None))
            if lo is None or not lo < hi:
                raise ValidationError(f"missing or empty bounds for {name}")


def _scale(u: float, lo: float, hi: float, invert: bool) -> float:
    if hi == lo:
        return 10.0
    t = (u - lo) / (hi - lo)
    return 10.0 * (1.0 - t) if invert else 10.0 * t


def normalize_channels(items, basis=None) -> list[MetricChannels]:
    """Map raw episode features onto [0, 10] channels, min-max over a basis.

    Smoothness and speed channels invert (lower variance / slower mean motion
    scores higher); efficiency uses inverse duration so faster completions
    score higher.  A channel that is constant over the basis maps to 10
    everywhere.  ``basis`` defaults to ``items`` itself.
    """
    items = list(items)
    if not items:
        raise ValidationError("no episodes to normalize")
    basis = items if basis is None else list(basis)
    if not basis:
        raise ValidationError("empty normalization basis")
    for f in items + basis:
        if f.duration_s <= 0:
            raise ValidationError("duration must be positive for the efficiency channel")

    u_v = [f.summary.u_v for f in basis]
    u_a = [f.summary.u_a for f in basis]
    mu_v = [f.summary.mu_v for f in basis]
    inv_dur = [1.0 / f.duration_s for f in basis]
    ranges = {
        "vel_smoothness": (min(u_v), max(u_v)),
        "acc_smoothness": (min(u_a), max(u_a)),
        "speed_moderation": (min(mu_v), max(mu_v)),
        "path_efficiency": (min(inv_dur), max(inv_dur)),
    }

    out = []
    for f in items:
        raw = {
            "vel_smoothness": (f.summary.u_v, True),
            "acc_smoothness": (f.summary.u_a, True),
            "speed_moderation": (f.summary.mu_v, True),
            "path_efficiency": (1.0 / f.duration_s, False),
        }
        values = {
            name: _scale(u, *ranges[name], invert=invert)
            for name, (u, invert) in raw.items()
        }
        out.append(MetricChannels(values=values, collision=f.collision, failure=f.failure))
    return out


def raw_score(channels: MetricChannels, theta: ParamVector) -> float:
    """Weighted mean of channels, each divided by the active penalty divisors.

    Collision and failure divisors compound when both flags are set.
    """
    if set(theta.weights) != set(channels.values):
        raise ValidationError("weight channels do not match metric channels")
    divisor = 1.0
    if channels.collision:
        divisor *= theta.lambda_coll
    if channels.failure:
        divisor *= theta.lambda_fail
    wsum = sum(theta.weights.values())
    num = sum(w * (channels.values[name] / divisor) for name, w in theta.weights.items())
    return num / wsum


def descending_ranks(scores) -> np.ndarray:
    """Rank 1 for the highest score; tied scores share their average rank."""
    s = np.asarray(scores, dtype=float)
    return average_ranks(-s)


def rank_loss(human_ranks, raw_scores) -> float:
    """Mean absolute difference between expert ranks and score-induced ranks."""
    h = np.asarray(human_ranks, dtype=float)
    s = np.asarray(raw_scores, dtype=float)
    if h.shape != s.shape or h.ndim != 1 or len(h) == 0:
        raise ValidationError("rank and score vectors must be 1-D and equal length")
    if sorted(h.tolist()) != list(range(1, len(h) + 1)):
        raise ValidationError("human ranks must be a permutation of 1..N")
    return float(np.mean(np.abs(h - descending_ranks(s))))


def _batch_matrices(batches):
    """Precompute per-batch channel matrices and penalty flags for fast loss."""
    prepared = []
    for channels_list, human in batches:
        if not channels_list:
            raise ValidationError("empty batch")
        h = np.asarray(human, dtype=float)
        if len(h) != len(channels_list):
            raise ValidationError("batch rank vector length mismatch")
        if sorted(h.tolist()) != list(range(1, len(h) + 1)):
            raise ValidationError("human ranks must be a permutation of 1..N")
        s = np.array([[c.values[name] for name in CHANNELS] for c in channels_list])
        coll = np.array([c.collision for c in channels_list])
        fail = np.array([c.failure for c in channels_list])
        prepared.append((s, coll, fail, h))
    return prepared


def _loss_of_vector(vec: np.ndarray, prepared) -> float:
    w = vec[:4]
    lam_c, lam_f = vec[4], vec[5]
    wsum = w.sum()
    if wsum <= 0:
        return float("inf")
    total = 0.0
    for s, coll, fail, h in prepared:
        div = np.where(coll, lam_c, 1.0) * np.where(fail, lam_f, 1.0)
        scores = (s @ w) / div / wsum
        total += float(np.mean(np.abs(h - descending_ranks(scores))))
    return total / len(prepared)


def batch_loss(batches, theta: ParamVector) -> float:
    """Mean over batches of the rank loss induced by ``theta``."""
    prepared = _batch_matrices(batches)
    return _loss_of_vector(theta.as_array(), prepared)


def ga_optimize(batches, cfg: GaConfig = GaConfig()) -> tuple[ParamVector, list[float]]:
    """Search the parameter vector minimizing mean rank loss over batches.

    Real-valued encoding over documented bounds, tournament selection, BLX
    blend crossover, per-gene Gaussian mutation, single-elite carryover.
    Returns the best individual ever evaluated and the best-so-far loss after
    the initial population and after each generation (length generations + 1).
    Deterministic for a fixed config seed.
    """
    batches = list(batches)
    if not batches:
        raise ValidationError("need at least one rank batch")
    prepared = _batch_matrices(batches)

    lo = np.array([cfg.bounds[n][0] for n in PARAM_NAMES])
    hi = np.array([cfg.bounds[n][1] for n in PARAM_NAMES])
    sigma = cfg.mutation_sigma * (hi - lo)
    rng = np.random.default_rng(cfg.seed)

    pop = rng.uniform(lo, hi, size=(cfg.population, len(PARAM_NAMES)))
    losses = np.array([_loss_of_vector(v, prepared) for v in pop])
    best_idx = int(np.argmin(losses))
    best_vec, best_loss = pop[best_idx].copy(), float(losses[best_idx])
    history = [best_loss]

    def tournament() -> np.ndarray:
        idx = rng.integers(0, cfg.population, size=cfg.tournament_k)
        return pop[idx[np.argmin(losses[idx])]]

    for _ in range(cfg.generations):
        children = [best_vec.copy()]  # elitism
        while len(children) < cfg.population:
            p1, p2 = tournament(), tournament()
            if rng.random() < cfg.crossover_rate:
                span = np.abs(p1 - p2)
                c_lo = np.minimum(p1, p2) - BLEND_ALPHA * span
                c_hi = np.maximum(p1, p2) + BLEND_ALPHA * span
                child = rng.uniform(c_lo, c_hi)
            else:
                child = p1.copy()
            child = child + rng.normal(0.0, sigma)
            children.append(np.clip(child, lo, hi))
        pop = np.array(children)
        losses = np.array([_loss_of_vector(v, prepared) for v in pop])
        gen_best = int(np.argmin(losses))
        if losses[gen_best] < best_loss:
            best_vec, best_loss = pop[gen_best].copy(), float(losses[gen_best])
        history.append(best_loss)

    return ParamVector.from_array(best_vec), history


def align_distribution(raw, human_stats: ScoreStats) -> np.ndarray:
    """Affine-map raw scores so their population stats match the human ones."""
    s = np.asarray(raw, dtype=float)
    if s.ndim != 1 or len(s) < 2:
        raise ValidationError("need at least 2 raw scores to align")
    centered = s - s.mean()
    centered -= centered.mean()  # second pass pins the mean to ~0 exactly
    sigma = float(centered.std())
    if sigma == 0.0:
        raise ValidationError("raw scores are constant: alignment undefined")
    return human_stats.mean + human_stats.std * centered / sigma


def save_theta(path, theta: ParamVector, ga_config: GaConfig | None = None,
               loss: float | None = None) -> None:
    """Persist a parameter vector (and optionally its search provenance)."""
    doc: dict = {
        "version": THETA_VERSION,
        "weights": {k: theta.weights[k] for k in sorted(theta.weights)},
        "lambda_coll": theta.lambda_coll,
        "lambda_fail": theta.lambda_fail,
    }
    if ga_config is not None:
        doc["ga_config"] = {
            "population": ga_config.population,
            "generations": ga_config.generations,
            "tournament_k": ga_config.tournament_k,
            "crossover_rate": ga_config.crossover_rate,
            "mutation_sigma": ga_config.mutation_sigma,
            "seed": ga_config.seed,
            "bounds": {k: list(v) for k, v in sorted(ga_config.bounds.items())},
        }
    if loss is not None:
        doc["loss"] = loss
    atomic_write_text(path, canonical_json(doc))


def load_theta(path) -> ParamVector:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"theta file parse error: {e}") from e
    if doc.get("version") != THETA_VERSION:
        raise ValidationError(f"unsupported theta version: {doc.get('version')!r}")
    return ParamVector(
        weights={k: float(v) for k, v in doc["weights"].items()},
        lambda_coll=float(doc["lambda_coll"]),
        lambda_fail=float(doc["lambda_fail"]),
    )
