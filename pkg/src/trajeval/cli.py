"""Command-line entry point for reproducible batch runs.

Each subcommand mirrors one pipeline stage (fixture | kinematics | calibrate |
score | aggregate | grpo-sim | metrics), writes its outputs under a run
directory, and echoes its fully resolved configuration to config.json plus a
listing of produced files to artifacts.json.  Outputs carry no timestamps, so
replaying an echoed config reproduces a run byte for byte.  Exit codes are
stable: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import aggregation, calibration, dataset, grpo, metrics, protocol
from ._util import atomic_write_text, canonical_json
from .errors import OutputParseError, ValidationError
from .kinematics import render_physics_prompt, summarize

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


def _echo_run(out_dir: Path, command: str, params: dict) -> None:
    atomic_write_text(out_dir / "config.json",
                      canonical_json({"command": command, "params": params}))


def _write_artifact_listing(out_dir: Path) -> None:
    names = sorted(
        str(p.relative_to(out_dir))
        for p in out_dir.rglob("*")
        if p.is_file() and p.name != "artifacts.json"
    )
    atomic_write_text(out_dir / "artifacts.json", canonical_json({"artifacts": names}))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _episode_features(manifest):
    feats = []
    for ep in manifest.episodes:
        traj = dataset.load_trajectory(manifest, ep)
        feats.append(calibration.EpisodeFeatures(
            summary=summarize(traj),
            duration_s=ep.duration_s,
            collision=ep.collision,
            failure=not ep.success,
        ))
    return feats


# --- fixture -----------------------------------------------------------------


def cmd_fixture(args) -> None:
    out = Path(args.out)
    dataset.generate_fixture(seed=args.seed, n=args.n, dof=args.dof, out_dir=out,
                             with_frames=args.with_frames,
                             frames_per_view=args.frames_per_view)
    _echo_run(out, "fixture", {
        "seed": args.seed, "n": args.n, "dof": args.dof,
        "with_frames": args.with_frames, "frames_per_view": args.frames_per_view,
    })
    _write_artifact_listing(out)


# --- kinematics --------------------------------------------------------------


def cmd_kinematics(args) -> None:
    manifest = dataset.load_manifest(args.manifest)
    out = Path(args.out)
    rows = []
    for ep in manifest.episodes:
        try:
            traj = dataset.load_trajectory(manifest, ep)
            s = summarize(traj)
        except ValidationError as e:
            raise ValidationError(f"episode {ep.id!r}: {e}") from e
        rows.append([ep.id, traj.timesteps, s.u_v, s.u_a, s.mu_v,
                     render_physics_prompt(s).text])
    _write_csv(out / "kinematics.csv",
               ["id", "timesteps", "u_v", "u_a", "mu_v", "physics_prompt"], rows)
    _echo_run(out, "kinematics", {"manifest": str(args.manifest), "seed": args.seed})
    _write_artifact_listing(out)


# --- calibrate ---------------------------------------------------------------


def _rank_batches(manifest, channels):
    """Group channels by annotation batch, ordered by batch id."""
    by_batch: dict[str, list[tuple]] = {}
    for ep, ch in zip(manifest.episodes, channels):
        if ep.labels.rank_batch is not None:
            by_batch.setdefault(ep.labels.rank_batch, []).append(
                (ch, ep.labels.expert_rank))
    batches = []
    for batch_id in sorted(by_batch):
        chans, ranks = zip(*by_batch[batch_id])
        batches.append((list(chans), list(ranks)))
    return batches


def cmd_calibrate(args) -> None:
    manifest = dataset.load_manifest(args.manifest)
    out = Path(args.out)
    features = _episode_features(manifest)
    channels = calibration.normalize_channels(features)
    batches = _rank_batches(manifest, channels)
    if not batches:
        raise ValidationError(
            "no expert rank annotations found: rank-guided calibration needs "
            "expert_rank/rank_batch labels on at least one batch")
    cfg = calibration.GaConfig(
        population=args.population, generations=args.generations,
        tournament_k=args.tournament_k, crossover_rate=args.crossover_rate,
        mutation_sigma=args.mutation_sigma, seed=args.seed)
    theta, history = calibration.ga_optimize(batches, cfg)
    calibration.save_theta(out / "theta.json", theta, ga_config=cfg, loss=history[-1])
    _write_csv(out / "loss_history.csv", ["generation", "best_loss"],
               list(enumerate(history)))
    _echo_run(out, "calibrate", {
        "manifest": str(args.manifest), "population": args.population,
        "generations": args.generations, "tournament_k": args.tournament_k,
        "crossover_rate": args.crossover_rate, "mutation_sigma": args.mutation_sigma,
        "seed": args.seed,
    })
    _write_artifact_listing(out)


# --- score -------------------------------------------------------------------


def _label_score(ep, protocol_name: str) -> float:
    value = ep.labels.eg_score if protocol_name == "eg" else ep.labels.rg_score
    if value is None:
        raise ValidationError(
            f"episode {ep.id!r} lacks the {protocol_name}_score label required "
            f"by protocol {protocol_name!r}")
    return float(value)


def cmd_score(args) -> None:
    manifest = dataset.load_manifest(args.manifest)
    theta = calibration.load_theta(args.theta)
    out = Path(args.out)

    features = _episode_features(manifest)
    label_scores = np.array([_label_score(ep, args.protocol) for ep in manifest.episodes])
    if args.align_mean is not None and args.align_std is not None:
        human = calibration.ScoreStats(mean=args.align_mean, std=args.align_std)
    else:
        human = calibration.ScoreStats.of(label_scores)
    sources = [ep.source for ep in manifest.episodes]
    context = protocol.fit_scoring_context(features, sources, theta)

    outputs = []
    for ep, feat in zip(manifest.episodes, features):
        traj = dataset.load_trajectory(manifest, ep)
        req = protocol.build_placeholder_request(traj, ep.task_description,
                                                 require_cot=args.require_cot)
        outputs.append(protocol.heuristic_evaluate(
            req, theta, human, traj,
            collision=ep.collision, failure=not ep.success,
            duration_s=ep.duration_s, context=context))

    rows = []
    jsonl = []
    for ep, label, o in zip(manifest.episodes, label_scores, outputs):
        rows.append([
            ep.id, label, o.score,
            "success" if ep.success else "failure",
            "success" if o.success else "failure",
            ep.source, o.source,
        ])
        jsonl.append(json.dumps({"id": ep.id, "text": protocol.serialize_output(o)},
                                sort_keys=True))
    _write_csv(out / "predictions.csv",
               ["id", "label_score", "pred_score", "label_success", "pred_success",
                "label_source", "pred_source"], rows)
    atomic_write_text(out / "predictions.jsonl", "\n".join(jsonl) + "\n")

    report_rows, notes = _metric_rows(
        label_scores, np.array([o.score for o in outputs]),
        [ep.success for ep in manifest.episodes], [o.success for o in outputs],
        [ep.source == "policy" for ep in manifest.episodes],
        [o.source == "policy" for o in outputs])
    _write_metric_files(out, report_rows, notes)

    if args.emit_manifest:
        relabeled = tuple(
            replace(ep, labels=replace(ep.labels, rg_score=float(o.score)))
            for ep, o in zip(manifest.episodes, outputs))
        dataset.save_manifest(replace(manifest, episodes=relabeled),
                              args.emit_manifest)

    _echo_run(out, "score", {
        "manifest": str(args.manifest), "theta": str(args.theta),
        "protocol": args.protocol, "align_mean": args.align_mean,
        "align_std": args.align_std, "require_cot": args.require_cot,
        "emit_manifest": str(args.emit_manifest) if args.emit_manifest else None,
        "seed": args.seed,
    })
    _write_artifact_listing(out)


def _metric_rows(label_scores, pred_scores, succ_labels, succ_preds,
                 src_labels, src_preds):
    score_srcc = metrics.srcc(label_scores, pred_scores)
    score_rl2 = metrics.relative_l2(label_scores, pred_scores)
    rows: dict[str, metrics.MetricsReport] = {}
    notes: list[str] = []
    for name, labels, preds in (("success", succ_labels, succ_preds),
                                ("source", src_labels, src_preds)):
        probs = [1.0 if p else 0.0 for p in preds]
        try:
            head = metrics.binary_metrics(labels, probs)
        except ValidationError as e:
            notes.append(f"{name}: {e}")
            continue
        rows[name] = metrics.MetricsReport(srcc=score_srcc, r_l2=score_rl2,
                                           acc=head.acc, f1=head.f1, auc=head.auc)
    return rows, notes


def _write_metric_files(out: Path, rows, notes) -> None:
    table = metrics.render_report_table(rows)
    if notes:
        table += "".join(f"note: {n}\n" for n in notes)
    atomic_write_text(out / "metrics.txt", table)
    doc = {
        name: {"srcc": r.srcc, "r_l2": r.r_l2, "acc": r.acc, "f1": r.f1, "auc": r.auc}
        for name, r in rows.items()
    }
    atomic_write_text(out / "metrics.json", canonical_json(doc))


# --- aggregate ---------------------------------------------------------------


def _parse_pair(text: str, sep: str, what: str) -> tuple[int, int]:
    parts = text.lower().split(sep)
    if len(parts) != 2:
        raise ValidationError(f"cannot parse {what}: {text!r} (expected A{sep}B)")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ValidationError(f"cannot parse {what}: {text!r}") from None


def cmd_aggregate(args) -> None:
    out = Path(args.out)
    rows, cols = _parse_pair(args.grid, "x", "grid")
    width, height = _parse_pair(args.out_size, "x", "output size")
    seq = aggregation.load_frames(args.frames)
    grid = aggregation.GridSpec(rows=rows, cols=cols, output_size=(width, height))
    keyframes = aggregation.select_keyframes(seq, args.n)
    composites = aggregation.stitch(seq, keyframes, grid)
    aggregation.save_composites(composites, out)
    _write_csv(out / "keyframes.csv", ["composite", "keyframe_index"],
               list(enumerate(keyframes)))
    _echo_run(out, "aggregate", {
        "frames": str(args.frames), "grid": f"{rows}x{cols}", "n": args.n,
        "out_size": f"{width}x{height}", "seed": args.seed,
    })
    _write_artifact_listing(out)


# --- grpo-sim ----------------------------------------------------------------


def _parse_omega(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"omega needs three comma-separated weights: {text!r}")
    try:
        w = tuple(float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"cannot parse omega: {text!r}") from None
    total = sum(w)
    if total <= 0:
        raise ValidationError("omega weights must have a positive sum")
    return tuple(x / total for x in w)  # normalize ratios like 4:3:3


def cmd_grpo_sim(args) -> None:
    out = Path(args.out)
    w_score, w_succ, w_src = _parse_omega(args.omega)
    cfg = grpo.RewardConfig(sigma=args.sigma, w_score=w_score, w_succ=w_succ,
                            w_src=w_src, gamma=args.gamma, epsilon=args.epsilon,
                            beta=args.beta, group_size=args.group_size)
    gt = protocol.GroundTruth(score=args.gt_score,
                              success=args.gt_outcome == "success",
                              source=args.gt_source)
    policy, trace = grpo.grpo_train(grpo.ToyPolicy.uniform(), gt, cfg,
                                    iterations=args.iterations,
                                    learning_rate=args.learning_rate,
                                    seed=args.seed, require_cot=args.require_cot)
    _write_csv(out / "trace.csv", grpo.TRACE_COLUMNS,
               [[s.iteration, s.mean_reward, s.r_score_mean, s.r_succ_mean,
                 s.r_src_mean, s.r_fmt_mean] for s in trace])
    atomic_write_text(out / "policy.json", canonical_json(policy.as_dict()))
    _echo_run(out, "grpo-sim", {
        "iterations": args.iterations, "seed": args.seed,
        "group_size": args.group_size, "sigma": args.sigma, "gamma": args.gamma,
        "epsilon": args.epsilon, "beta": args.beta, "omega": args.omega,
        "learning_rate": args.learning_rate, "gt_score": args.gt_score,
        "gt_outcome": args.gt_outcome, "gt_source": args.gt_source,
        "require_cot": args.require_cot,
    })
    _write_artifact_listing(out)


# --- metrics -----------------------------------------------------------------


def cmd_metrics(args) -> None:
    out = Path(args.out)
    with open(args.predictions, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        records = list(reader)
    if not records:
        raise ValidationError("predictions file is empty")
    try:
        label_scores = np.array([float(r["label_score"]) for r in records])
        pred_scores = np.array([float(r["pred_score"]) for r in records])
        succ_labels = [r["label_success"] == "success" for r in records]
        succ_preds = [r["pred_success"] == "success" for r in records]
        src_labels = [r["label_source"] == "policy" for r in records]
        src_preds = [r["pred_source"] == "policy" for r in records]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed predictions file: {e}") from e
    rows, notes = _metric_rows(label_scores, pred_scores, succ_labels, succ_preds,
                               src_labels, src_preds)
    _write_metric_files(out, rows, notes)
    _echo_run(out, "metrics", {"predictions": str(args.predictions),
                               "seed": args.seed})
    _write_artifact_listing(out)


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajeval",
        description="Trajectory-quality evaluation pipeline, one stage per subcommand.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_seed=True):
        p.add_argument("--out", required=True, help="run directory for outputs")
        help_text = ("random seed" if needs_seed
                     else "unused; accepted so every stage takes the same flags")
        p.add_argument("--seed", type=int, default=0, help=help_text)

    p = sub.add_parser("fixture", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--dof", type=int, default=7)
    p.add_argument("--with-frames", action="store_true")
    p.add_argument("--frames-per-view", type=int, default=12)
    add_common(p)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("kinematics", help="per-episode smoothness statistics")
    p.add_argument("--manifest", required=True)
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_kinematics)

    p = sub.add_parser("calibrate", help="rank-guided weight search")
    p.add_argument("--manifest", required=True)
    p.add_argument("--population", type=int, default=64)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--tournament-k", type=int, default=3)
    p.add_argument("--crossover-rate", type=float, default=0.9)
    p.add_argument("--mutation-sigma", type=float, default=0.05)
    add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score", help="score a manifest with the reference evaluator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--theta", required=True)
    p.add_argument("--protocol", choices=("eg", "rg"), default="rg")
    p.add_argument("--align-mean", type=float, default=None,
                   help="override the alignment target mean (default: label stats)")
    p.add_argument("--align-std", type=float, default=None)
    p.add_argument("--require-cot", action="store_true")
    p.add_argument("--emit-manifest", default=None,
                   help="write a manifest copy with rg_score set to predictions")
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("aggregate", help="composite keyframe grids from a frame dir")
    p.add_argument("--frames", required=True)
    p.add_argument("--grid", default="2x2")
    p.add_argument("--n", type=int, default=aggregation.DEFAULT_KEYFRAMES)
    p.add_argument("--out-size", default="256x256")
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("grpo-sim", help="toy policy training with the reward stack")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--omega", default="0.4,0.3,0.3",
                   help="content weight ratio score,success,source (normalized)")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--gt-score", type=float, default=8.0)
    p.add_argument("--gt-outcome", choices=("success", "failure"), default="success")
    p.add_argument("--gt-source", choices=("policy", "teleoperation"), default="policy")
    p.add_argument("--require-cot", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_grpo_sim)

    p = sub.add_parser("metrics", help="recompute the metrics table from predictions")
    p.add_argument("--predictions", required=True)
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, OutputParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
