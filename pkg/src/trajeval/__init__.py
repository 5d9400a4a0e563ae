"""Trustworthy evaluation tooling for robot manipulation trajectories.

Modules cover the full pipeline: dataset manifests and synthetic fixtures,
kinematic smoothness statistics, rank-guided calibration of a composite
quality score, spatio-temporal frame aggregation, the structured evaluation
protocol with a reference heuristic evaluator, the group-relative
policy-optimization reward stack on a toy policy, and the evaluation metric
suite.  ``python -m trajeval`` exposes each stage as a subcommand.
"""

from .aggregation import (
    CompositeSequence,
    FrameSequence,
    GridSpec,
    ablation_grids,
    select_keyframes,
    stitch,
)
from .calibration import (
    EpisodeFeatures,
    GaConfig,
    MetricChannels,
    ParamVector,
    ScoreStats,
    align_distribution,
    ga_optimize,
    normalize_channels,
    rank_loss,
    raw_score,
)
from .dataset import (
    Episode,
    LabelSet,
    Manifest,
    dataset_stats,
    generate_fixture,
    load_manifest,
    save_manifest,
)
from .errors import OutputParseError, ValidationError
from .grpo import (
    RewardBreakdown,
    RewardConfig,
    RolloutGroup,
    ToyPolicy,
    advantages,
    grpo_objective,
    grpo_train,
    kl_estimate,
    score_reward,
    sequence_nll,
    total_reward,
)
from .kinematics import (
    DerivativeSeries,
    JointTrajectory,
    KinematicSummary,
    PhysicsPrompt,
    compute_derivatives,
    parse_physics_prompt,
    render_physics_prompt,
    summarize,
)
from .metrics import MetricsReport, binary_metrics, relative_l2, srcc
from .protocol import (
    EvalOutput,
    EvaluatorRequest,
    GroundTruth,
    SubprocessEvaluator,
    format_reward,
    heuristic_evaluate,
    parse_output,
    serialize_output,
)

__version__ = "0.1.0"

__all__ = [
    "CompositeSequence", "FrameSequence", "GridSpec", "ablation_grids",
    "select_keyframes", "stitch",
    "EpisodeFeatures", "GaConfig", "MetricChannels", "ParamVector",
    "ScoreStats", "align_distribution", "ga_optimize", "normalize_channels",
    "rank_loss", "raw_score",
    "Episode", "LabelSet", "Manifest", "dataset_stats", "generate_fixture",
    "load_manifest", "save_manifest",
    "OutputParseError", "ValidationError",
    "RewardBreakdown", "RewardConfig", "RolloutGroup", "ToyPolicy",
    "advantages", "grpo_objective", "grpo_train", "kl_estimate",
    "score_reward", "sequence_nll", "total_reward",
    "DerivativeSeries", "JointTrajectory", "KinematicSummary", "PhysicsPrompt",
    "compute_derivatives", "parse_physics_prompt", "render_physics_prompt",
    "summarize",
    "MetricsReport", "binary_metrics", "relative_l2", "srcc",
    "EvalOutput", "EvaluatorRequest", "GroundTruth", "SubprocessEvaluator",
    "format_reward", "heuristic_evaluate", "parse_output", "serialize_output",
    "__version__",
]
