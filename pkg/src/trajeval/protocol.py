"""The structured evaluator output language and a reference heuristic evaluator.

An evaluator answers with exactly three lines (score, success verdict, source
class), optionally prefixed by one think block holding free-text reasoning.
The grammar is anchored: anything before, between, or after the expected
parts is a parse failure, and the binary format reward pays 1 only for text
the parser accepts.  A deterministic heuristic evaluator implements the same
request/answer contract from kinematic statistics alone so the full pipeline
runs without any neural model, and the contract is also exposed as a
stdin/stdout subprocess protocol so an external evaluator can be swapped in.
"""

from __future__ import annotations

import base64
import io
import json
import math
import re
import subprocess
from dataclasses import dataclass

import numpy as np

from .aggregation import CompositeSequence
from .calibration import ParamVector, ScoreStats, raw_score
from .errors import OutputParseError, ValidationError
from .kinematics import (
    JointTrajectory,
    PhysicsPrompt,
    parse_physics_prompt,
    render_physics_prompt,
    summarize,
)

SOURCES = ("policy", "teleoperation")
REQUEST_VERSION = "eval-request/1"

_THINK_OPEN = "<think>"
_THINK_CLOSE = "</think>"
_SCORE_RE = re.compile(r"^\d+(\.\d+)?$")


def _check_score_and_source(score: float, source: str) -> None:
    if not math.isfinite(score) or not 1.0 <= score <= 10.0:
        raise ValidationError(f"score {score} outside [1, 10]")
    if source not in SOURCES:
        raise ValidationError(f"source must be one of {SOURCES}")


@dataclass(frozen=True)
class EvalOutput:
    """Structured evaluator answer: quality score, success, source, reasoning."""

    score: float
    success: bool
    source: str
    think: str | None = None

    def __post_init__(self):
        _check_score_and_source(self.score, self.source)
        if self.think is not None and (_THINK_OPEN in self.think or _THINK_CLOSE in self.think):
            raise ValidationError("think text must not nest think tags")


@dataclass(frozen=True)
class GroundTruth:
    score: float
    success: bool
    source: str

    def __post_init__(self):
        _check_score_and_source(self.score, self.source)


@dataclass(frozen=True)
class EvaluatorRequest:
    """Everything an evaluator sees: composites, physics text, task, CoT flag."""

    composites: CompositeSequence
    physics: PhysicsPrompt
    task_description: str
    require_cot: bool = False

    def __post_init__(self):
        if len(self.composites) == 0:
            raise ValidationError("request needs at least one composite")


def _format_score(x: float) -> str:
    # Shortest exact decimal: integral values drop the fraction, others use
    # the shortest round-tripping repr.
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def serialize_output(o: EvalOutput) -> str:
    body = (
        f"score: {_format_score(o.score)}\n"
        f"success: {'success' if o.success else 'failure'}\n"
        f"source: {o.source}"
    )
    if o.think is None:
        return body
    return f"{_THINK_OPEN}{o.think}{_THINK_CLOSE}\n{body}"


def parse_output(text: str, require_cot: bool = False) -> EvalOutput:
    """Parse canonical evaluator text; raises OutputParseError naming the
    first violated grammar rule."""
    if text.count(_THINK_OPEN) > 1 or text.count(_THINK_CLOSE) > 1:
        raise OutputParseError("multiple think blocks")

    think = None
    rest = text
    if text.startswith(_THINK_OPEN):
        close = text.find(_THINK_CLOSE)
        if close < 0:
            raise OutputParseError("unterminated think block")
        think = text[len(_THINK_OPEN) : close]
        rest = text[close + len(_THINK_CLOSE) :]
        if not rest.startswith("\n"):
            raise OutputParseError("missing newline after think block")
        rest = rest[1:]
    elif _THINK_OPEN in text or _THINK_CLOSE in text:
        raise OutputParseError("think block not at start")
    if require_cot and think is None:
        raise OutputParseError("missing think block")

    lines = rest.split("\n")
    fields = ("score", "success", "source")
    if len(lines) > 3:
        raise OutputParseError("trailing garbage")
    for i, name in enumerate(fields):
        if i >= len(lines) or not lines[i].startswith(f"{name}: "):
            raise OutputParseError(f"missing field: {name}")

    score_text = lines[0][len("score: ") :]
    if _SCORE_RE.match(score_text) is None:
        raise OutputParseError("malformed score")
    score = float(score_text)
    if not (1.0 <= score <= 10.0):
        raise OutputParseError("score out of range")

    success_text = lines[1][len("success: ") :]
    if success_text not in ("success", "failure"):
        raise OutputParseError("malformed success")
    source_text = lines[2][len("source: ") :]
    if source_text not in SOURCES:
        raise OutputParseError("malformed source")

    return EvalOutput(score=score, success=success_text == "success",
                      source=source_text, think=think)


def format_reward(text: str, require_cot: bool = False) -> float:
    """Binary structural reward: 1 iff the text parses, else 0."""
    try:
        parse_output(text, require_cot=require_cot)
        return 1.0
    except OutputParseError:
        return 0.0


# --- reference heuristic evaluator -----------------------------------------


@dataclass(frozen=True)
class ScoringContext:
    """Dataset-level statistics a single-episode evaluation needs.

    Channel min-max bounds and the raw-score distribution come from a basis
    set (normally the whole manifest scored under one parameter vector);
    source_threshold splits low-jitter teleoperation from high-jitter policy
    trajectories by their velocity-variance maximum.
    """

    channel_bounds: dict[str, tuple[float, float]]
    raw_stats: ScoreStats
    source_threshold: float


def fit_scoring_context(features, sources, theta: ParamVector) -> ScoringContext:
    """Fit normalization bounds, raw-score stats, and the source threshold.

    ``features`` are calibration.EpisodeFeatures for the basis episodes and
    ``sources`` their source labels.  The threshold is the midpoint between
    the mean velocity-variance maxima of the two source classes (falling back
    to the overall mean when only one class is present).
    """
    from .calibration import normalize_channels

    features = list(features)
    sources = list(sources)
    if len(features) != len(sources) or not features:
        raise ValidationError("features and sources must be nonempty and equal length")
    channels = normalize_channels(features)
    raws = np.array([raw_score(c, theta) for c in channels])

    u_v = np.array([f.summary.u_v for f in features])
    is_policy = np.array([s == "policy" for s in sources])
    if is_policy.any() and (~is_policy).any():
        threshold = (u_v[is_policy].mean() + u_v[~is_policy].mean()) / 2.0
    else:
        threshold = float(u_v.mean())

    bounds = {
        "vel_smoothness": (float(u_v.min()), float(u_v.max())),
        "acc_smoothness": (min(f.summary.u_a for f in features),
                           max(f.summary.u_a for f in features)),
        "speed_moderation": (min(f.summary.mu_v for f in features),
                             max(f.summary.mu_v for f in features)),
        "path_efficiency": (min(1.0 / f.duration_s for f in features),
                            max(1.0 / f.duration_s for f in features)),
    }
    return ScoringContext(channel_bounds=bounds, raw_stats=ScoreStats.of(raws),
                          source_threshold=float(threshold))


def _scale_with_bounds(u: float, lo: float, hi: float, invert: bool) -> float:
    if hi == lo:
        return 10.0
    t = (u - lo) / (hi - lo)
    t = min(max(t, 0.0), 1.0)  # out-of-basis episodes clamp to the basis range
    return 10.0 * (1.0 - t) if invert else 10.0 * t


def heuristic_evaluate(req: EvaluatorRequest, theta: ParamVector,
                       human_stats: ScoreStats, trajectory: JointTrajectory, *,
                       collision: bool, failure: bool, duration_s: float,
                       context: ScoringContext) -> EvalOutput:
    """Deterministic stand-in for a learned evaluator.

    Scores by aligning the penalized composite score to the human
    distribution (clamped to [1, 10]); declares success from the failure
    flag; attributes the source by comparing velocity jitter against the
    context threshold, high jitter reading as policy execution.
    """
    from .calibration import MetricChannels

    summary = summarize(trajectory)
    if duration_s <= 0:
        raise ValidationError("duration must be positive")
    values = {
        "vel_smoothness": _scale_with_bounds(
            summary.u_v, *context.channel_bounds["vel_smoothness"], invert=True),
        "acc_smoothness": _scale_with_bounds(
            summary.u_a, *context.channel_bounds["acc_smoothness"], invert=True),
        "speed_moderation": _scale_with_bounds(
            summary.mu_v, *context.channel_bounds["speed_moderation"], invert=True),
        "path_efficiency": _scale_with_bounds(
            1.0 / duration_s, *context.channel_bounds["path_efficiency"], invert=False),
    }
    channels = MetricChannels(values=values, collision=collision, failure=failure)
    raw = raw_score(channels, theta)
    if context.raw_stats.std == 0:
        raise ValidationError("degenerate raw-score basis: alignment undefined")
    aligned = human_stats.mean + human_stats.std * (
        (raw - context.raw_stats.mean) / context.raw_stats.std)
    score = min(max(aligned, 1.0), 10.0)

    is_policy = summary.u_v > context.source_threshold
    think = None
    if req.require_cot:
        think = (
            f"u_v={summary.u_v:.6f} u_a={summary.u_a:.6f} mu_v={summary.mu_v:.6f}; "
            f"jitter {'above' if is_policy else 'below'} {context.source_threshold:.6f} "
            f"points to {'policy execution' if is_policy else 'teleoperation'}; "
            f"run {'reaches the goal' if not failure else 'ends without completing the task'}"
        )
    return EvalOutput(
        score=float(score),
        success=not failure,
        source="policy" if is_policy else "teleoperation",
        think=think,
    )


def build_placeholder_request(trajectory: JointTrajectory, task_description: str,
                              require_cot: bool = False) -> EvaluatorRequest:
    """Request with the trajectory's physics prompt and a stub composite.

    The heuristic evaluator never reads pixels, so batch scoring of manifests
    without extracted frames uses a single black composite to satisfy the
    request contract.
    """
    stub = CompositeSequence(composites=(np.zeros((1, 1, 3), dtype=np.uint8),))
    return EvaluatorRequest(
        composites=stub,
        physics=render_physics_prompt(summarize(trajectory)),
        task_description=task_description,
        require_cot=require_cot,
    )


# --- subprocess protocol ----------------------------------------------------


def _encode_png(arr: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_png(text: str) -> np.ndarray:
    from PIL import Image

    with Image.open(io.BytesIO(base64.b64decode(text))) as im:
        return np.asarray(im.convert("RGB"))


def render_request(req: EvaluatorRequest) -> str:
    """Canonical request document written to an evaluator's stdin."""
    from ._util import canonical_json

    return canonical_json({
        "version": REQUEST_VERSION,
        "task_description": req.task_description,
        "physics": req.physics.text,
        "require_cot": req.require_cot,
        "composites_png_b64": [_encode_png(c) for c in req.composites.composites],
    })


def parse_request(text: str) -> EvaluatorRequest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"request parse error: {e}") from e
    if doc.get("version") != REQUEST_VERSION:
        raise ValidationError(f"unsupported request version: {doc.get('version')!r}")
    physics = PhysicsPrompt(doc["physics"])
    parse_physics_prompt(physics)  # reject malformed physics text early
    composites = CompositeSequence(
        composites=tuple(_decode_png(t) for t in doc["composites_png_b64"]))
    return EvaluatorRequest(
        composites=composites,
        physics=physics,
        task_description=doc["task_description"],
        require_cot=bool(doc["require_cot"]),
    )


class SubprocessEvaluator:
    """Run an external evaluator process per request.

    The child reads one canonical request document on stdin and answers with
    canonical EvalOutput text on stdout, which lets a neural evaluator plug
    into every pipeline stage without code changes here.
    """

    def __init__(self, argv: list[str], timeout_s: float = 60.0):
        self.argv = list(argv)
        self.timeout_s = timeout_s

    def evaluate(self, req: EvaluatorRequest) -> EvalOutput:
        proc = subprocess.run(
            self.argv, input=render_request(req), capture_output=True,
            text=True, timeout=self.timeout_s,
        )
        if proc.returncode != 0:
            raise ValidationError(
                f"evaluator exited with {proc.returncode}: {proc.stderr.strip()}")
        return parse_output(proc.stdout, require_cot=req.require_cot)
