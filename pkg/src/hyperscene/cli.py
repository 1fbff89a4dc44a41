"""Command-line surface: generate, train, eval, hist, poincare.

One JSON run-config drives all commands; see ``RunConfig``. Exit codes:
0 success, 1 usage or config error, 2 training divergence, 3 checkpoint and
dataset incompatible. Every command writes byte-identical artifacts for
identical inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, serialization, synth, trainer
from .errors import (
    CompatibilityError,
    ConfigError,
    HypersceneError,
    TrainingDivergedError,
)
from .manifold import TangentAtOrigin, exp_map_origin, lorentz_to_poincare
from .synth import SyntheticConfig
from .trainer import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_INCOMPATIBLE = 3

_RUN_KEYS = {"synthetic", "train", "thresholds", "output_dir"}


@dataclass
class RunConfig:
    """Top-level config: generator settings, trainer settings, thresholds."""

    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    thresholds: tuple[float, float] = (0.3, 0.2)
    output_dir: str = "."

    def __post_init__(self):
        p, o = self.thresholds
        if not (0.0 < p < 1.0 and 0.0 < o < 1.0):
            raise ConfigError(f"thresholds must lie in (0, 1), got {self.thresholds}")


def run_config_doc(config: RunConfig) -> dict:
    return {
        "synthetic": serialization.synth_config_doc(config.synthetic),
        "train": serialization.train_config_doc(config.train),
        "thresholds": {
            "place": config.thresholds[0],
            "object": config.thresholds[1],
        },
        "output_dir": config.output_dir,
    }


def run_config_from_doc(doc: dict) -> RunConfig:
    unknown = set(doc) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
    kwargs = {}
    if "synthetic" in doc:
        kwargs["synthetic"] = serialization.synth_config_from_doc(doc["synthetic"])
    if "train" in doc:
        kwargs["train"] = serialization.train_config_from_doc(doc["train"])
    if "thresholds" in doc:
        t = doc["thresholds"]
        extra = set(t) - {"place", "object"}
        if extra:
            raise ConfigError(f"unknown threshold keys: {sorted(extra)}")
        kwargs["thresholds"] = (t["place"], t["object"])
    if "output_dir" in doc:
        kwargs["output_dir"] = doc["output_dir"]
    return RunConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    return run_config_from_doc(serialization._read_json(path))


def save_run_config(path, config: RunConfig) -> None:
    serialization._write(
        path, serialization.canonical_dumps(run_config_doc(config))
    )


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    synth_cfg = config.synthetic
    train_cfg = config.train
    if getattr(args, "seed", None) is not None:
        synth_cfg = dataclasses.replace(synth_cfg, seed=args.seed)
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    if getattr(args, "ablation", None) == "euclidean":
        train_cfg = dataclasses.replace(
            train_cfg, euclidean_ablation=True, entailment_enabled=False
        )
    elif getattr(args, "ablation", None) == "no-entailment":
        train_cfg = dataclasses.replace(train_cfg, entailment_enabled=False)
    if getattr(args, "fixed_curvature", None) is not None:
        train_cfg = dataclasses.replace(
            train_cfg,
            curvature_learnable=False,
            curv_init=args.fixed_curvature,
        )
    return dataclasses.replace(config, synthetic=synth_cfg, train=train_cfg)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(config: RunConfig, out_path: str) -> int:
    dataset = synth.generate(config.synthetic)
    serialization.save_dataset(out_path, dataset)
    n_obs = sum(len(t.frames) for t in dataset.tracks)
    print(
        f"wrote {out_path}: {len(dataset.scene_ids)} scenes, "
        f"{len(dataset.views)} views, {len(dataset.tracks)} objects, "
        f"{n_obs} observations"
    )
    return EXIT_OK


def cmd_train(config: RunConfig, dataset_path: str, out_path: str) -> int:
    dataset = serialization.load_dataset(dataset_path)
    out = trainer.train(dataset, config.train)
    serialization.save_checkpoint(out_path, out, config.thresholds)
    history_path = str(Path(out_path).with_suffix("")) + ".history.csv"
    serialization.save_loss_history(history_path, out.history)
    last = out.history[-1]
    print(
        f"wrote {out_path} and {history_path}: {len(out.history)} epochs, "
        f"final total loss {last.total:.6f}, curvature {last.curvature:.6f}"
    )
    return EXIT_OK


def cmd_eval(checkpoint_path: str, dataset_path: str, out_path: str) -> int:
    out, thresholds = serialization.load_checkpoint(checkpoint_path)
    dataset = serialization.load_dataset(dataset_path)
    serialization.check_compatible(out, dataset)
    table = trainer.embed_dataset(out.projector, out.curvature, dataset)
    graph = metrics.build_graph(
        table, thresholds[0], thresholds[1], out.curvature
    )
    pred_tracks = metrics.predicted_tracks(graph, dataset.gt_tracks())
    report = metrics.evaluate(
        graph, pred_tracks, dataset.gt_graph, dataset.gt_tracks()
    )
    report.recall_at_1 = metrics.recall_at_1(
        table, dataset.gt_graph, out.curvature
    )
    serialization.save_metrics_report(out_path, report)
    print(
        f"wrote {out_path}: recall@1={report.recall_at_1:.4f} "
        f"pp_iou={report.pp_iou:.4f} po_iou={report.po_iou:.4f} "
        f"graph_iou={report.graph_iou:.4f}"
    )
    return EXIT_OK


def cmd_hist(checkpoint_path: str, out_path: str) -> int:
    out, _ = serialization.load_checkpoint(checkpoint_path)
    distances = trainer.embed_root_distances(out.table)
    rows = []
    for kind in sorted(distances):
        d = distances[kind]
        for eid, tn, rd in zip(d.entity_ids, d.tangent_norms, d.root_distances):
            rows.append([eid, kind, float(tn), float(rd)])
    rows.sort(key=lambda r: r[0])
    for kind in sorted(distances):
        d = distances[kind]
        rows.append(
            [
                f"mean:{kind}",
                kind,
                float(np.mean(d.tangent_norms)),
                float(np.mean(d.root_distances)),
            ]
        )
    serialization.write_csv(
        out_path,
        ["entity_id", "kind", "tangent_norm", "lorentz_root_distance"],
        rows,
    )
    print(f"wrote {out_path}: {len(rows)} rows")
    return EXIT_OK


def _principal_2d(coords: np.ndarray) -> np.ndarray:
    """Top-2 uncentered principal directions with a deterministic sign."""
    _, _, vt = np.linalg.svd(coords, full_matrices=False)
    axes = vt[:2]
    if axes.shape[0] < 2:
        axes = np.vstack([axes, np.zeros_like(axes[0])])
    for i in range(2):
        j = int(np.argmax(np.abs(axes[i])))
        if axes[i, j] < 0:
            axes[i] = -axes[i]
    return coords @ axes.T


def cmd_poincare(checkpoint_path: str, out_path: str) -> int:
    out, _ = serialization.load_checkpoint(checkpoint_path)
    entries = sorted(out.table.entries, key=lambda e: e.entity_id)
    tangents = np.asarray([e.tangent for e in entries])
    points = exp_map_origin(TangentAtOrigin(tangents), out.curvature)
    ball = lorentz_to_poincare(points, out.curvature)
    disk = _principal_2d(ball.coords)
    rows = [
        [e.entity_id, e.kind, float(u), float(v)]
        for e, (u, v) in zip(entries, disk)
    ]
    serialization.write_csv(out_path, ["entity_id", "kind", "u", "v"], rows)
    print(f"wrote {out_path}: {len(rows)} rows")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hyperscene",
        description=(
            "Hyperbolic scene-graph toolkit: synthetic data generation, "
            "contrastive + entailment training, and adjacency-IoU evaluation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_config(p):
        p.add_argument("--config", help="run config JSON (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override generator and trainer seed")

    g = sub.add_parser("generate", help="write a synthetic dataset")
    add_config(g)
    g.add_argument("--out", required=True, help="output dataset path")

    t = sub.add_parser("train", help="train a projector on a dataset")
    add_config(t)
    t.add_argument("--dataset", required=True, help="dataset file")
    t.add_argument("--out", required=True, help="output checkpoint path")
    t.add_argument(
        "--ablation",
        choices=["euclidean", "no-entailment"],
        help="euclidean: flat InfoNCE only; no-entailment: drop the cone loss",
    )
    t.add_argument(
        "--fixed-curvature",
        type=float,
        help="freeze curvature at this value instead of learning it",
    )

    e = sub.add_parser("eval", help="evaluate a checkpoint against a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True, help="output metrics report path")

    h = sub.add_parser("hist", help="export root-distance histogram data")
    h.add_argument("--checkpoint", required=True)
    h.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("poincare", help="export 2-D Poincare disk coordinates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("generate", "train"):
            config = (
                load_run_config(args.config) if args.config else RunConfig()
            )
            config = _apply_overrides(config, args)
        if args.command == "generate":
            return cmd_generate(config, args.out)
        if args.command == "train":
            return cmd_train(config, args.dataset, args.out)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.dataset, args.out)
        if args.command == "hist":
            return cmd_hist(args.checkpoint, args.out)
        if args.command == "poincare":
            return cmd_poincare(args.checkpoint, args.out)
        parser.error(f"unknown command {args.command}")
    except TrainingDivergedError as err:
        print(
            "training diverged:\n"
            f"  step:             {err.step}\n"
            f"  curvature:        {err.curvature:.6g}\n"
            f"  max tangent norm: {err.max_tangent_norm:.6g}",
            file=sys.stderr,
        )
        return EXIT_DIVERGED
    except CompatibilityError as err:
        print(f"incompatible inputs: {err}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except HypersceneError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
