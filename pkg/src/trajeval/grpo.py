"""Reward stack, group-normalized advantages, and the policy-gradient loop.

Rewards for a generated evaluation text combine a Gaussian score-closeness
kernel with exact-match terms for the success and source fields, weighted and
then mixed with a binary format reward.  Groups of sampled outputs are
standardized into advantages (mean baseline, population-std scaling), and the
surrogate objective weights sequence probability ratios by those advantages
minus a KL penalty against a frozen reference policy.  A tiny categorical
policy over the structured answer vocabulary stands in for the generative
model so the whole loop runs in milliseconds and is exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import OutputParseError, ValidationError
from .protocol import SOURCES, EvalOutput, GroundTruth, parse_output, serialize_output

# Finite stand-in for an infinite NLL when a target token has probability 0.
NLL_CAP = 1e9

SCORE_TOKENS = tuple(range(1, 11))
PLACEHOLDER_THINK = "checking pace, jitter, and completion"


@dataclass(frozen=True)
class RewardConfig:
    sigma: float = 1.0
    w_score: float = 0.4
    w_succ: float = 0.3
    w_src: float = 0.3
    gamma: float = 0.2
    epsilon: float = 1e-8
    beta: float = 0.01
    group_size: int = 8

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if min(self.w_score, self.w_succ, self.w_src) < 0:
            raise ValidationError("content weights must be nonnegative")
        if abs(self.w_score + self.w_succ + self.w_src - 1.0) > 1e-12:
            raise ValidationError("content weights must sum to 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.beta < 0:
            raise ValidationError("beta must be nonnegative")
        if self.group_size < 2:
            raise ValidationError("group size must be >= 2")


class ContentScores(NamedTuple):
    """The content-side reward terms before mixing with the format reward."""

    r_score: float
    r_succ: float
    r_src: float
    r_acc: float


@dataclass(frozen=True)
class RewardBreakdown:
    r_score: float
    r_succ: float
    r_src: float
    r_acc: float
    r_fmt: float
    r_total: float


@dataclass(frozen=True)
class RolloutGroup:
    """G sampled outputs with rewards, advantages, and log-prob triples."""

    outputs: tuple[str, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    logp_current: tuple[float, ...]
    logp_old: tuple[float, ...]
    logp_ref: tuple[float, ...]

    def __post_init__(self):
        g = len(self.outputs)
        for name in ("rewards", "advantages", "logp_current", "logp_old", "logp_ref"):
            if len(getattr(self, name)) != g:
                raise ValidationError(f"{name} length != group size {g}")


def score_reward(s: float, s_hat: float, sigma: float) -> float:
    """Gaussian closeness kernel exp(-(s - s_hat)^2 / (2 sigma^2)) in (0, 1]."""
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    return math.exp(-((s - s_hat) ** 2) / (2.0 * sigma * sigma))


def content_reward(gt: GroundTruth, pred: EvalOutput, cfg: RewardConfig) -> ContentScores:
    """Weighted sum of score closeness and the two exact-match indicators."""
    r_score = score_reward(gt.score, pred.score, cfg.sigma)
    r_succ = 1.0 if pred.success == gt.success else 0.0
    r_src = 1.0 if pred.source == gt.source else 0.0
    r_acc = cfg.w_score * r_score + cfg.w_succ * r_succ + cfg.w_src * r_src
    return ContentScores(r_score, r_succ, r_src, r_acc)


def total_reward(text: str, gt: GroundTruth, cfg: RewardConfig,
                 require_cot: bool = False) -> RewardBreakdown:
    """Mix content and format rewards; unparseable text earns nothing."""
    try:
        pred = parse_output(text, require_cot=require_cot)
    except OutputParseError:
        return RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    c = content_reward(gt, pred, cfg)
    r_total = (1.0 - cfg.gamma) * c.r_acc + cfg.gamma * 1.0
    return RewardBreakdown(c.r_score, c.r_succ, c.r_src, c.r_acc, 1.0, r_total)


def advantages(rewards, epsilon: float = 1e-8) -> np.ndarray:
    """Standardize rewards within their group: (R - mean) / (pop std + eps).

    Centering runs twice so the advantages sum to zero at machine precision;
    a constant group yields all zeros.
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise ValidationError("need a group of at least 2 rewards")
    centered = r - r.mean()
    centered -= centered.mean()
    return centered / (centered.std() + epsilon)


def kl_estimate(logp_current: float, logp_ref: float) -> float:
    """Nonnegative per-sequence KL estimator exp(r) - r - 1, r = ref - current."""
    if not (math.isfinite(logp_current) and math.isfinite(logp_ref)):
        raise ValidationError("log-probabilities must be finite")
    r = logp_ref - logp_current
    return math.exp(r) - r - 1.0


def grpo_objective(group: RolloutGroup, beta: float) -> float:
    """Group mean of ratio-weighted advantages minus the KL penalty."""
    total = 0.0
    for a, cur, old, ref in zip(group.advantages, group.logp_current,
                                group.logp_old, group.logp_ref):
        ratio = math.exp(cur - old)
        total += ratio * a - beta * kl_estimate(cur, ref)
    return total / len(group.outputs)


class NllResult(NamedTuple):
    value: float
    capped: bool


def sequence_nll(target_tokens, token_logps) -> NllResult:
    """Negative log-likelihood of a target sequence, -sum of token log-probs.

    A zero-probability token would make the sum infinite; the result is then
    capped at NLL_CAP with the flag set.
    """
    if len(target_tokens) != len(token_logps):
        raise ValidationError("token and log-prob lists differ in length")
    total = -float(np.sum(np.asarray(token_logps, dtype=float)))
    if not math.isfinite(total) or total > NLL_CAP:
        return NllResult(NLL_CAP, True)
    return NllResult(total, False)


# --- toy categorical policy --------------------------------------------------


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    return z - math.log(np.exp(z).sum())


@dataclass
class ToyPolicy:
    """Independent categorical heads over the structured answer fields.

    Emits canonical evaluator text for a sampled (score, success, source)
    triple; with CoT enabled the think block is a fixed placeholder so the
    format reward is exercised without any language modeling.
    """

    score_logits: np.ndarray
    success_logits: np.ndarray  # index 1 = success
    source_logits: np.ndarray  # indexed like SOURCES

    @classmethod
    def uniform(cls) -> "ToyPolicy":
        return cls(np.zeros(len(SCORE_TOKENS)), np.zeros(2), np.zeros(2))

    def __post_init__(self):
        self.score_logits = np.asarray(self.score_logits, dtype=float)
        self.success_logits = np.asarray(self.success_logits, dtype=float)
        self.source_logits = np.asarray(self.source_logits, dtype=float)
        for z in (self.score_logits, self.success_logits, self.source_logits):
            if not np.all(np.isfinite(z)):
                raise ValidationError("policy logits must be finite")
        if self.score_logits.shape != (len(SCORE_TOKENS),):
            raise ValidationError(f"score head needs {len(SCORE_TOKENS)} logits")
        if self.success_logits.shape != (2,) or self.source_logits.shape != (2,):
            raise ValidationError("success and source heads need 2 logits each")

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.score_logits.copy(), self.success_logits.copy(),
                         self.source_logits.copy())

    def sample(self, rng: np.random.Generator) -> tuple[int, bool, str]:
        score_idx = rng.choice(len(SCORE_TOKENS), p=np.exp(_log_softmax(self.score_logits)))
        succ_idx = rng.choice(2, p=np.exp(_log_softmax(self.success_logits)))
        src_idx = rng.choice(2, p=np.exp(_log_softmax(self.source_logits)))
        return SCORE_TOKENS[score_idx], bool(succ_idx), SOURCES[src_idx]

    def logp(self, score: int, success: bool, source: str) -> float:
        return float(
            _log_softmax(self.score_logits)[SCORE_TOKENS.index(score)]
            + _log_softmax(self.success_logits)[int(success)]
            + _log_softmax(self.source_logits)[SOURCES.index(source)]
        )

    @staticmethod
    def emit(score: int, success: bool, source: str, require_cot: bool) -> str:
        think = PLACEHOLDER_THINK if require_cot else None
        return serialize_output(EvalOutput(float(score), success, source, think=think))

    def as_dict(self) -> dict:
        return {
            "score_logits": self.score_logits.tolist(),
            "success_logits": self.success_logits.tolist(),
            "source_logits": self.source_logits.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyPolicy":
        return cls(np.array(d["score_logits"]), np.array(d["success_logits"]),
                   np.array(d["source_logits"]))


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    mean_reward: float
    r_score_mean: float
    r_succ_mean: float
    r_src_mean: float
    r_fmt_mean: float


TRACE_COLUMNS = ("iteration", "mean_reward", "r_score_mean", "r_succ_mean",
                 "r_src_mean", "r_fmt_mean")


def _rollout_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    # Per-rollout streams keyed by (run seed, iteration, rollout index), so a
    # concurrent implementation would sample identically.
    return np.random.default_rng(np.random.SeedSequence([seed, iteration, index]))


def grpo_train(policy: ToyPolicy, gt: GroundTruth, cfg: RewardConfig,
               iterations: int, learning_rate: float, seed: int,
               require_cot: bool = False) -> tuple[ToyPolicy, list[IterationStats]]:
    """Group-relative policy-gradient training of the toy policy.

    Each iteration snapshots the policy, samples a group, standardizes the
    rewards into advantages, and ascends the score-function gradient of the
    ratio-times-advantage surrogate with the KL penalty pulling toward the
    initial policy.  Deterministic for a fixed seed.
    """
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    if learning_rate <= 0:
        raise ValidationError("learning rate must be positive")

    current = policy.copy()
    ref = policy.copy()
    trace: list[IterationStats] = []
    g = cfg.group_size

    for it in range(iterations):
        old = current.copy()
        samples = []
        breakdowns = []
        for i in range(g):
            rng = _rollout_rng(seed, it, i)
            fields = current.sample(rng)
            samples.append(fields)
            breakdowns.append(total_reward(ToyPolicy.emit(*fields, require_cot),
                                           gt, cfg, require_cot=require_cot))
        rewards = np.array([b.r_total for b in breakdowns])
        adv = advantages(rewards, cfg.epsilon)

        grad_score = np.zeros_like(current.score_logits)
        grad_succ = np.zeros_like(current.success_logits)
        grad_src = np.zeros_like(current.source_logits)
        p_score = np.exp(_log_softmax(current.score_logits))
        p_succ = np.exp(_log_softmax(current.success_logits))
        p_src = np.exp(_log_softmax(current.source_logits))
        for (score, success, source), a in zip(samples, adv):
            cur = current.logp(score, success, source)
            ratio = math.exp(cur - old.logp(score, success, source))
            r = ref.logp(score, success, source) - cur
            # d/dlogp of [ratio * A - beta * (exp(r) - r - 1)]
            coeff = ratio * a + cfg.beta * (math.exp(r) - 1.0)
            one_score = np.zeros_like(p_score)
            one_score[SCORE_TOKENS.index(score)] = 1.0
            one_succ = np.zeros_like(p_succ)
            one_succ[int(success)] = 1.0
            one_src = np.zeros_like(p_src)
            one_src[SOURCES.index(source)] = 1.0
            grad_score += coeff * (one_score - p_score)
            grad_succ += coeff * (one_succ - p_succ)
            grad_src += coeff * (one_src - p_src)

        current.score_logits = current.score_logits + learning_rate * grad_score / g
        current.success_logits = current.success_logits + learning_rate * grad_succ / g
        current.source_logits = current.source_logits + learning_rate * grad_src / g

        trace.append(IterationStats(
            iteration=it,
            mean_reward=float(rewards.mean()),
            r_score_mean=float(np.mean([b.r_score for b in breakdowns])),
            r_succ_mean=float(np.mean([b.r_succ for b in breakdowns])),
            r_src_mean=float(np.mean([b.r_src for b in breakdowns])),
            r_fmt_mean=float(np.mean([b.r_fmt for b in breakdowns])),
        ))

    return current, trace
