"""Episode schema, manifest I/O, dataset statistics, and synthetic fixtures.

A manifest is a canonical JSON document (version "eval-actions/1", key-sorted,
UTF-8) listing episodes; each episode references a headered trajectory CSV
("t,j0,...,j{J-1}", floats at 9 significant digits) and a per-view frame
directory of frame_%05d.png images.  Label fields are optional per episode;
pipelines that need one fail fast naming the episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, canonical_json
from .calibration import (
    EpisodeFeatures,
    ParamVector,
    descending_ranks,
    normalize_channels,
    raw_score,
)
from .errors import ValidationError
from .kinematics import JointTrajectory, summarize

MANIFEST_VERSION = "eval-actions/1"
VALID_DOF = (7, 14)
SOURCES = ("policy", "teleoperation")

FIXTURE_FPS = 10.0
FIXTURE_VIEWS = ("wrist", "head", "third_person")
FIXTURE_RANK_BATCH_SIZE = 10

# Known-good parameter vector used to plant expert ranks in fixtures, so
# calibration tests have a recoverable optimum with rank loss 0.
FIXTURE_THETA = ParamVector(
    weights={
        "vel_smoothness": 3.0,
        "acc_smoothness": 2.0,
        "speed_moderation": 1.0,
        "path_efficiency": 1.0,
    },
    lambda_coll=2.0,
    lambda_fail=3.0,
)

_FAMILY_COT = {
    "smooth": "steady approach with even pacing and a clean release",
    "jerky": "task completed but the arm jitters during transport",
    "failure": "grip slips near the target and the object is not placed",
}


@dataclass(frozen=True)
class LabelSet:
    """Optional supervision labels attached to one episode.

    eg_score: integer expert grade in [1, 10].
    rg_score: real calibrated score in [0, 10].
    cot_text: free-text reasoning behind the grade.
    expert_rank / rank_batch: position within one ranked annotation batch;
    ranks inside a batch must form a permutation of 1..N.
    """

    eg_score: int | None = None
    rg_score: float | None = None
    cot_text: str | None = None
    expert_rank: int | None = None
    rank_batch: str | None = None


@dataclass(frozen=True)
class Episode:
    id: str
    task_description: str
    dof: int
    trajectory_path: str
    frame_dir: str
    views: tuple[str, ...]
    success: bool
    source: str
    duration_s: float
    collision: bool = False
    labels: LabelSet = LabelSet()


@dataclass(frozen=True)
class Manifest:
    version: str
    episodes: tuple[Episode, ...]
    # Directory that relative episode paths resolve against; not serialized.
    root: Path | None = None


@dataclass(frozen=True)
class StatsReport:
    episode_count: int
    success_count: int
    success_rate: float
    # Expert-grade histogram over bins 1..10 plus episodes without a grade.
    score_hist: dict[int, int]
    unlabeled: int
    source_counts: dict[str, int]
    duration_total_s: float


def _validate_episode(ep: Episode, root: Path | None) -> None:
    where = f"episode {ep.id!r}"
    if ep.dof not in VALID_DOF:
        raise ValidationError(f"{where}: dof must be 7 or 14, got {ep.dof}")
    if ep.duration_s < 0:
        raise ValidationError(f"{where}: duration_s must be nonnegative")
    if ep.source not in SOURCES:
        raise ValidationError(f"{where}: source must be one of {SOURCES}")
    lab = ep.labels
    if lab.eg_score is not None and not 1 <= lab.eg_score <= 10:
        raise ValidationError(f"{where}: eg_score must lie in [1, 10]")
    if lab.rg_score is not None and not 0.0 <= lab.rg_score <= 10.0:
        raise ValidationError(f"{where}: rg_score must lie in [0, 10]")
    if (lab.expert_rank is None) != (lab.rank_batch is None):
        raise ValidationError(f"{where}: expert_rank and rank_batch go together")
    if lab.expert_rank is not None and lab.expert_rank < 1:
        raise ValidationError(f"{where}: expert_rank must be a positive integer")
    if root is not None:
        path = root / ep.trajectory_path
        if not path.is_file():
            raise ValidationError(f"{where}: trajectory file not found: {ep.trajectory_path}")
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header != trajectory_header(ep.dof):
            raise ValidationError(
                f"{where}: trajectory header {header!r} does not match dof {ep.dof}"
            )


def _validate_manifest(m: Manifest) -> None:
    seen: set[str] = set()
    for ep in m.episodes:
        if ep.id in seen:
            raise ValidationError(f"duplicate episode id {ep.id!r}")
        seen.add(ep.id)
        _validate_episode(ep, m.root)
    batches: dict[str, list[int]] = {}
    for ep in m.episodes:
        if ep.labels.rank_batch is not None:
            batches.setdefault(ep.labels.rank_batch, []).append(ep.labels.expert_rank)
    for batch, ranks in batches.items():
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise ValidationError(
                f"rank batch {batch!r}: ranks {sorted(ranks)} are not a permutation of 1..N"
            )


def _labels_to_dict(lab: LabelSet) -> dict:
    out = {}
    for key in ("eg_score", "rg_score", "cot_text", "expert_rank", "rank_batch"):
        value = getattr(lab, key)
        if value is not None:
            out[key] = value
    return out


def _episode_to_dict(ep: Episode) -> dict:
    return {
        "id": ep.id,
        "task_description": ep.task_description,
        "dof": ep.dof,
        "trajectory_path": ep.trajectory_path,
        "frame_dir": ep.frame_dir,
        "views": list(ep.views),
        "success": ep.success,
        "source": ep.source,
        "duration_s": ep.duration_s,
        "collision": ep.collision,
        "labels": _labels_to_dict(ep.labels),
    }


def _episode_from_dict(d: dict) -> Episode:
    try:
        lab = d.get("labels", {})
        return Episode(
            id=d["id"],
            task_description=d["task_description"],
            dof=int(d["dof"]),
            trajectory_path=d["trajectory_path"],
            frame_dir=d["frame_dir"],
            views=tuple(d["views"]),
            success=bool(d["success"]),
            source=d["source"],
            duration_s=float(d["duration_s"]),
            collision=bool(d.get("collision", False)),
            labels=LabelSet(
                eg_score=lab.get("eg_score"),
                rg_score=lab.get("rg_score"),
                cot_text=lab.get("cot_text"),
                expert_rank=lab.get("expert_rank"),
                rank_batch=lab.get("rank_batch"),
            ),
        )
    except KeyError as e:
        raise ValidationError(f"episode {d.get('id', '?')!r}: missing field {e.args[0]}") from e


def save_manifest(m: Manifest, path) -> None:
    doc = {
        "version": m.version,
        "episodes": [_episode_to_dict(ep) for ep in m.episodes],
    }
    atomic_write_text(path, canonical_json(doc))


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"manifest parse error: {e}") from e
    if doc.get("version") != MANIFEST_VERSION:
        raise ValidationError(f"unsupported manifest version: {doc.get('version')!r}")
    episodes = tuple(_episode_from_dict(d) for d in doc.get("episodes", []))
    m = Manifest(version=doc["version"], episodes=episodes, root=path.parent)
    _validate_manifest(m)
    return m


def trajectory_header(dof: int) -> str:
    return "t," + ",".join(f"j{j}" for j in range(dof))


def save_trajectory(path, data: np.ndarray) -> None:
    """Write a T x J matrix as a headered CSV, 9 significant digits."""
    q = np.asarray(data, dtype=float)
    lines = [trajectory_header(q.shape[1])]
    for t, row in enumerate(q):
        lines.append(f"{t}," + ",".join(f"{x:.9g}" for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_trajectory(manifest: Manifest, episode: Episode) -> JointTrajectory:
    if manifest.root is None:
        raise ValidationError("manifest has no root directory to resolve paths")
    path = manifest.root / episode.trajectory_path
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != trajectory_header(episode.dof):
            raise ValidationError(
                f"episode {episode.id!r}: trajectory header does not match dof {episode.dof}"
            )
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != episode.dof + 1:
                raise ValidationError(
                    f"episode {episode.id!r}: row width {len(parts) - 1} != dof "
                    f"{episode.dof} at line {lineno}"
                )
            rows.append([float(x) for x in parts[1:]])
    return JointTrajectory(np.array(rows))


def dataset_stats(m: Manifest) -> StatsReport:
    """Counting summary: grade histogram, success rate, source split, duration."""
    if not m.episodes:
        raise ValidationError("cannot summarize an empty manifest")
    hist = {b: 0 for b in range(1, 11)}
    unlabeled = 0
    for ep in m.episodes:
        if ep.labels.eg_score is None:
            unlabeled += 1
        else:
            hist[ep.labels.eg_score] += 1
    successes = sum(1 for ep in m.episodes if ep.success)
    sources = {s: sum(1 for ep in m.episodes if ep.source == s) for s in SOURCES}
    return StatsReport(
        episode_count=len(m.episodes),
        success_count=successes,
        success_rate=successes / len(m.episodes),
        score_hist=hist,
        unlabeled=unlabeled,
        source_counts=sources,
        duration_total_s=float(sum(ep.duration_s for ep in m.episodes)),
    )


# Fixture noise levels.  The jerky per-step noise is sized so its velocity
# variance (2 sigma^2 = 0.045) dominates the worst-case slope variance of the
# +-1 rad waypoint interpolation (~0.004), keeping the two source families
# separable by a velocity-variance threshold for every seed.
_SMOOTH_NOISE = 0.002
_JERKY_NOISE = 0.15


def _fixture_trajectory(rng_base, rng_noise, dof: int, family: str):
    """One trajectory from shared waypoints plus family-specific noise."""
    t_full = int(rng_base.integers(40, 121))
    waypoints = rng_base.uniform(-1.0, 1.0, size=(4, dof))
    # Piecewise-linear interpolation through the waypoints.
    xs = np.linspace(0.0, 3.0, t_full)
    base = np.empty((t_full, dof))
    for j in range(dof):
        base[:, j] = np.interp(xs, np.arange(4.0), waypoints[:, j])
    if family == "smooth":
        noise = _SMOOTH_NOISE
        data = base
    elif family == "jerky":
        noise = _JERKY_NOISE
        data = base
    else:  # failure: truncated partway through the task
        noise = _JERKY_NOISE
        data = base[: max(3, int(t_full * 0.4))]
    return data + rng_noise.normal(0.0, noise, size=data.shape)


def generate_fixture(seed: int, n: int, dof: int, out_dir,
                     with_frames: bool = False,
                     frame_size: tuple[int, int] = (32, 32),
                     frames_per_view: int = 12) -> Manifest:
    """Write a deterministic synthetic dataset of n episodes under out_dir.

    Episodes come in triples sharing waypoints and length: a smooth success
    (teleoperation), a jerky success (policy), and a truncated failure
    (policy, every other one collision-flagged).  Matched smooth/jerky pairs
    therefore differ only by planted noise, which pins their relative
    smoothness statistics.  Expert ranks are planted per batch of
    FIXTURE_RANK_BATCH_SIZE episodes by ranking composite scores under
    FIXTURE_THETA, so rank calibration has a known recoverable optimum.
    Identical (seed, n, dof) always produce byte-identical files.
    """
    if n < 1:
        raise ValidationError("fixture needs n >= 1")
    if dof not in VALID_DOF:
        raise ValidationError(f"dof must be 7 or 14, got {dof}")
    out_dir = Path(out_dir)
    (out_dir / "trajectories").mkdir(parents=True, exist_ok=True)

    families = ("smooth", "jerky", "failure")
    episodes = []
    trajectories = []
    for i in range(n):
        family = families[i % 3]
        triple = i // 3
        rng_base = np.random.default_rng(np.random.SeedSequence([seed, triple]))
        rng_noise = np.random.default_rng(np.random.SeedSequence([seed, triple, i % 3]))
        data = _fixture_trajectory(rng_base, rng_noise, dof, family)
        ep_id = f"ep{i:04d}"
        traj_rel = f"trajectories/{ep_id}.csv"
        save_trajectory(out_dir / traj_rel, data)
        trajectories.append(data)

        if family == "smooth":
            eg = 8 + int(rng_noise.integers(0, 3))
        elif family == "jerky":
            eg = 4 + int(rng_noise.integers(0, 4))
        else:
            eg = 1 + int(rng_noise.integers(0, 3))
        episodes.append(Episode(
            id=ep_id,
            task_description=f"place the block on target {triple}",
            dof=dof,
            trajectory_path=traj_rel,
            frame_dir=f"frames/{ep_id}",
            views=FIXTURE_VIEWS,
            success=family != "failure",
            source="teleoperation" if family == "smooth" else "policy",
            duration_s=data.shape[0] / FIXTURE_FPS,
            collision=(family == "failure" and triple % 2 == 0),
            labels=LabelSet(eg_score=eg, cot_text=_FAMILY_COT[family]),
        ))

    episodes = _plant_ranks(episodes, trajectories)

    if with_frames:
        _write_fixture_frames(out_dir, episodes, seed, frame_size, frames_per_view)

    manifest = Manifest(version=MANIFEST_VERSION, episodes=tuple(episodes), root=out_dir)
    _validate_manifest(manifest)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def _plant_ranks(episodes, trajectories):
    features = [
        EpisodeFeatures(
            summary=summarize(traj),
            duration_s=ep.duration_s,
            collision=ep.collision,
            failure=not ep.success,
        )
        for ep, traj in zip(episodes, trajectories)
    ]
    channels = normalize_channels(features)
    scores = np.array([raw_score(c, FIXTURE_THETA) for c in channels])

    out = list(episodes)
    for start in range(0, len(out), FIXTURE_RANK_BATCH_SIZE):
        batch = slice(start, min(start + FIXTURE_RANK_BATCH_SIZE, len(out)))
        ranks = descending_ranks(scores[batch])
        # Continuous scores should never tie; fall back to episode order if
        # they somehow do, keeping the batch a strict permutation.
        if len(set(ranks.tolist())) != len(ranks):
            order = np.lexsort((np.arange(len(ranks)), -scores[batch]))
            ranks = np.empty(len(order))
            ranks[order] = np.arange(1, len(order) + 1)
        batch_id = f"b{start // FIXTURE_RANK_BATCH_SIZE:03d}"
        for offset, rank in enumerate(ranks):
            i = start + offset
            out[i] = replace(out[i], labels=replace(
                out[i].labels, expert_rank=int(rank), rank_batch=batch_id))
    return out


def _write_fixture_frames(out_dir: Path, episodes, seed: int,
                          frame_size: tuple[int, int], frames_per_view: int) -> None:
    from PIL import Image  # deferred: only fixture-with-frames needs Pillow

    w, h = frame_size
    for i, ep in enumerate(episodes):
        for v, view in enumerate(ep.views):
            view_dir = out_dir / ep.frame_dir / view
            view_dir.mkdir(parents=True, exist_ok=True)
            rng = np.random.default_rng(np.random.SeedSequence([seed, 7000 + i, v]))
            for k in range(frames_per_view):
                arr = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
                Image.fromarray(arr, mode="RGB").save(view_dir / f"frame_{k:05d}.png")
