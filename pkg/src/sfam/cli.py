"""Command-line orchestration over episode manifests.

Subcommands: ``explain`` writes heatmaps per episode, ``evaluate`` scores
localization against truth boxes, ``sanity`` runs the feature-randomization
sweep.  Episodes are processed by an optional worker pool; results are
collected in manifest order, so output is byte-identical regardless of
``--jobs``.  The ``SFAM_LOG`` environment variable (error|info|debug)
controls diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .baselines import decomposition_map, ram_map
from .localization import evaluate_episodes
from .maps import ActivationMap, normalize_map, sfam_map, upsample_bilinear
from .sanity import sweep_stages, rank_correlation
from .store import (
    EpisodeRecord,
    blend_heat,
    load_image_rgb,
    read_manifest,
    read_tensor,
    write_array,
)
from .tensors import (
    EmbeddingVector,
    FeatureMap,
    cosine_similarity,
    euclidean_distance,
    global_average_pool,
    prototype,
)
from .weights import cis_cosine, cis_euclidean, normalize_weights

log = logging.getLogger("sfam")

METHODS = ("sfam", "ram", "decomposition")
DEFAULT_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
OVERLAY_ALPHA = 0.5


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    output_dir: Path
    method: str = "sfam"
    metric: Optional[str] = None  # None: use each episode's manifest metric
    threshold: float = 0.2
    box_mode: str = "component"
    jobs: int = 1
    seed: int = 0
    keep_going: bool = False
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    reference: Optional[Path] = None

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.method == "decomposition" and self.metric == "euclidean":
            raise ValueError("decomposition is defined for the cosine metric only")


def _effective_metric(config: RunConfig, record: EpisodeRecord) -> str:
    if config.method == "decomposition":
        return "cosine"
    return config.metric or record.metric


def _load_query(record: EpisodeRecord) -> FeatureMap:
    query = read_tensor(record.query_tensor_path)
    if not isinstance(query, FeatureMap):
        raise ValueError(
            f"episode {record.episode_id!r}: query tensor must be a 3-D feature map"
        )
    return query


def _pooled_supports(record: EpisodeRecord) -> list[EmbeddingVector]:
    pooled = []
    for path in record.support_tensor_paths:
        tensor = read_tensor(path)
        pooled.append(
            global_average_pool(tensor) if isinstance(tensor, FeatureMap) else tensor
        )
    return pooled


def _episode_raw_map(
    record: EpisodeRecord, config: RunConfig
) -> tuple[ActivationMap, float, str]:
    """Raw heatmap at feature resolution plus the decision similarity."""
    metric = _effective_metric(config, record)
    query = _load_query(record)
    proto = prototype(_pooled_supports(record))
    pooled_query = global_average_pool(query)
    if metric == "euclidean":
        similarity = euclidean_distance(pooled_query, proto)
    else:
        similarity = cosine_similarity(pooled_query, proto)
    if config.method == "sfam":
        score = cis_euclidean if metric == "euclidean" else cis_cosine
        weights = normalize_weights(score(pooled_query, proto))
        raw = sfam_map(query, weights)
    elif config.method == "ram":
        raw = ram_map(query)
    else:
        raw = decomposition_map(query, proto)
    return raw, similarity, metric


def _image_space_map(raw: ActivationMap, record: EpisodeRecord) -> ActivationMap:
    width, height = record.image_size
    return normalize_map(upsample_bilinear(raw, height, width))


# ---------------------------------------------------------------- explain

@dataclass(frozen=True)
class _ExplainOutcome:
    episode_id: str
    similarity: Optional[float] = None
    metric: Optional[str] = None
    error: Optional[str] = None


def _explain_one(task: tuple[EpisodeRecord, RunConfig]) -> _ExplainOutcome:
    record, config = task
    try:
        raw, similarity, metric = _episode_raw_map(record, config)
        norm = _image_space_map(raw, record)
        episode_dir = config.output_dir / record.episode_id
        write_array(episode_dir / "map_raw.npy", raw.values)
        write_array(episode_dir / "map_norm.npy", norm.values)
        if record.query_image_path is not None:
            rgb = load_image_rgb(record.query_image_path)
            blended = blend_heat(rgb, norm, OVERLAY_ALPHA)
            Image.fromarray(blended, mode="RGB").save(
                episode_dir / "overlay.png", format="PNG"
            )
        return _ExplainOutcome(record.episode_id, similarity, metric)
    except Exception as exc:
        return _ExplainOutcome(record.episode_id, error=str(exc))


def cmd_explain(config: RunConfig) -> int:
    records = read_manifest(config.manifest)
    if not records:
        print("error: no episodes in manifest", file=sys.stderr)
        return 1
    log.info("explaining %d episodes from %s", len(records), config.manifest)
    tasks = [(r, config) for r in records]
    outcomes = _run_pool(_explain_one, tasks, config.jobs)
    failures = 0
    for outcome in outcomes:
        if outcome.error is not None:
            failures += 1
            print(f"{outcome.episode_id}: FAILED: {outcome.error}", file=sys.stderr)
            if not config.keep_going:
                return 1
        else:
            print(
                f"{outcome.episode_id}: method={config.method} "
                f"metric={outcome.metric} similarity={outcome.similarity:.6f}"
            )
    if failures:
        print(f"{failures} episode(s) failed", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------- evaluate

@dataclass(frozen=True)
class _MapOutcome:
    episode_id: str
    map_values: Optional[np.ndarray] = None
    error: Optional[str] = None


def _evaluate_one(task: tuple[EpisodeRecord, RunConfig]) -> _MapOutcome:
    record, config = task
    try:
        raw, _, _ = _episode_raw_map(record, config)
        norm = _image_space_map(raw, record)
        return _MapOutcome(record.episode_id, map_values=norm.values)
    except Exception as exc:
        return _MapOutcome(record.episode_id, error=str(exc))


def cmd_evaluate(config: RunConfig) -> int:
    records = read_manifest(config.manifest)
    if not records:
        print("error: no episodes in manifest", file=sys.stderr)
        return 1
    missing = [r.episode_id for r in records if r.truth_box is None]
    if missing:
        print(
            f"error: episodes without truth boxes: {', '.join(missing)}",
            file=sys.stderr,
        )
        return 1
    tasks = [(r, config) for r in records]
    outcomes = _run_pool(_evaluate_one, tasks, config.jobs)
    failed = [o for o in outcomes if o.error is not None]
    for o in failed:
        print(f"{o.episode_id}: FAILED: {o.error}", file=sys.stderr)
    if failed and not config.keep_going:
        return 1
    kept = [
        (o, r) for o, r in zip(outcomes, records) if o.error is None
    ]
    if not kept:
        print("error: every episode failed", file=sys.stderr)
        return 1
    episodes = [(ActivationMap(o.map_values), r.truth_box) for o, r in kept]
    summary = evaluate_episodes(
        episodes,
        config.threshold,
        box_mode=config.box_mode,
        ids=[r.episode_id for _, r in kept],
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    with open(config.output_dir / "per_episode.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode_id", "iou", "hit"])
        for result in summary.per_episode:
            writer.writerow([result.episode_id, f"{result.iou:.6f}", int(result.hit)])
    with open(config.output_dir / "summary.json", "w") as fh:
        json.dump(
            {
                "schema_version": 1,
                "method": config.method,
                "mean_iou": summary.mean_iou,
                "accuracy": summary.accuracy,
                "n": len(summary.per_episode),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(f"{'Method':<16}{'IoU (%)':>10}{'Accuracy (%)':>15}")
    print(
        f"{config.method:<16}{summary.mean_iou * 100:>10.2f}"
        f"{summary.accuracy * 100:>15.2f}"
    )
    if failed:
        print(f"{len(failed)} episode(s) failed", file=sys.stderr)
        return 1
    return 0


# ----------------------------------------------------------------- sanity

@dataclass(frozen=True)
class _SanityOutcome:
    episode_id: str
    stages: Optional[list] = None  # (label, fraction, corr, iou_delta) tuples
    reference_corr: Optional[float] = None
    error: Optional[str] = None


def _sanity_one(task: tuple[EpisodeRecord, RunConfig, int]) -> _SanityOutcome:
    record, config, index = task
    try:
        metric = _effective_metric(config, record)
        query = _load_query(record)
        supports = []
        for path in record.support_tensor_paths:
            tensor = read_tensor(path)
            if not isinstance(tensor, FeatureMap):
                raise ValueError(
                    f"episode {record.episode_id!r}: sanity sweep requires 3-D "
                    f"support tensors"
                )
            supports.append(tensor)
        outcomes = sweep_stages(
            query,
            supports,
            config.fractions,
            seed=config.seed + index,
            metric=metric,
            truth_box=record.truth_box,
            image_size=record.image_size if record.truth_box else None,
            threshold=config.threshold,
            box_mode=config.box_mode,
        )
        reference_corr = None
        if config.reference is not None:
            ref_path = config.reference / record.episode_id / "map_norm.npy"
            if not ref_path.exists():
                raise ValueError(f"reference map not found: {ref_path}")
            reference = ActivationMap(np.load(ref_path))
            base = _image_space_map(
                _episode_raw_map(record, config)[0], record
            )
            reference_corr = rank_correlation(base, reference)
        if record.query_image_path is not None:
            rgb = load_image_rgb(record.query_image_path)
            panels = []
            for stage in outcomes:
                norm = _image_space_map(stage.query_map, record)
                panels.append(blend_heat(rgb, norm, OVERLAY_ALPHA))
            strip = np.concatenate(panels, axis=1)
            out = config.output_dir / record.episode_id / "sanity_strip.png"
            out.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(strip, mode="RGB").save(out, format="PNG")
        return _SanityOutcome(
            record.episode_id,
            stages=[
                (o.stage_label, o.fraction, o.rank_correlation, o.iou_delta)
                for o in outcomes
            ],
            reference_corr=reference_corr,
        )
    except Exception as exc:
        return _SanityOutcome(record.episode_id, error=str(exc))


def cmd_sanity(config: RunConfig) -> int:
    records = read_manifest(config.manifest)
    if not records:
        print("error: no episodes in manifest", file=sys.stderr)
        return 1
    tasks = [(r, config, i) for i, r in enumerate(records)]
    outcomes = _run_pool(_sanity_one, tasks, config.jobs)
    failures = [o for o in outcomes if o.error is not None]
    for o in failures:
        print(f"{o.episode_id}: FAILED: {o.error}", file=sys.stderr)
    if failures and not config.keep_going:
        return 1
    good = [o for o in outcomes if o.error is None]
    if not good:
        print("error: every episode failed", file=sys.stderr)
        return 1
    n_stages = len(config.fractions)
    mean_corr = [
        float(np.mean([o.stages[i][2] for o in good])) for i in range(n_stages)
    ]
    mean_delta = [
        float(np.mean([o.stages[i][3] for o in good])) for i in range(n_stages)
    ]
    report = {
        "schema_version": 1,
        "method": config.method,
        "seed": config.seed,
        "fractions": list(config.fractions),
        "mean_rank_correlation": mean_corr,
        "mean_iou_delta": mean_delta,
        "n": len(good),
        "episodes": [
            {
                "episode_id": o.episode_id,
                "stages": [
                    {
                        "stage_label": label,
                        "fraction": fraction,
                        "rank_correlation": corr,
                        "mean_iou_delta": delta,
                    }
                    for label, fraction, corr, delta in o.stages
                ],
                "reference_rank_correlation": o.reference_corr,
            }
            for o in good
        ],
    }
    if config.reference is not None:
        report["mean_reference_rank_correlation"] = float(
            np.mean([o.reference_corr for o in good])
        )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    with open(config.output_dir / "sanity_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for fraction, corr in zip(config.fractions, mean_corr):
        print(f"fraction={fraction:g}: mean rank correlation {corr:.4f}")
    if failures:
        print(f"{len(failures)} episode(s) failed", file=sys.stderr)
        return 1
    return 0


# ------------------------------------------------------------------ shell

def _run_pool(func, tasks, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    log.debug("dispatching %d tasks across %d workers", len(tasks), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


def _parse_fractions(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}: {exc}")
    if not values:
        raise argparse.ArgumentTypeError("fraction list is empty")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise argparse.ArgumentTypeError(f"fractions must be in [0, 1], got {v}")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfam",
        description="Explanation heatmaps and localization scoring for "
        "metric-learning CNNs, driven by episode manifests.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", required=True, type=Path, help="episode manifest JSON")
    common.add_argument("--out", required=True, type=Path, help="output directory")
    common.add_argument("--method", choices=METHODS, default="sfam")
    common.add_argument(
        "--metric",
        choices=("euclidean", "cosine"),
        default=None,
        help="override the per-episode manifest metric",
    )
    common.add_argument("--threshold", type=float, default=0.2)
    common.add_argument("--box-mode", choices=("component", "all"), default="component")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--keep-going", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("explain", parents=[common], help="write heatmaps per episode")
    sub.add_parser("evaluate", parents=[common], help="score localization against truth boxes")
    sanity = sub.add_parser("sanity", parents=[common], help="feature-randomization sweep")
    sanity.add_argument(
        "--fractions",
        type=_parse_fractions,
        default=DEFAULT_FRACTIONS,
        help="comma-separated randomization fractions",
    )
    sanity.add_argument(
        "--reference",
        type=Path,
        default=None,
        help="explain-run directory to rank-correlate unperturbed maps against",
    )
    return parser


def _configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("SFAM_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threshold is not None and not 0.0 < args.threshold < 1.0:
        parser.error(f"--threshold must be in (0, 1), got {args.threshold}")
    if args.method == "decomposition" and args.metric == "euclidean":
        parser.error("--method decomposition requires the cosine metric")
    if args.jobs < 1:
        parser.error(f"--jobs must be >= 1, got {args.jobs}")
    config = RunConfig(
        manifest=args.manifest,
        output_dir=args.out,
        method=args.method,
        metric=args.metric,
        threshold=args.threshold,
        box_mode=args.box_mode,
        jobs=args.jobs,
        seed=args.seed,
        keep_going=args.keep_going,
        fractions=getattr(args, "fractions", DEFAULT_FRACTIONS),
        reference=getattr(args, "reference", None),
    )
    try:
        if args.command == "explain":
            return cmd_explain(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        return cmd_sanity(config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
