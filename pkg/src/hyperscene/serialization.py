"""File formats: datasets, checkpoints, graphs, metric reports and CSVs.

Everything is line-oriented structured text: one canonical JSON document per
artifact (sorted keys, two-space indent, trailing newline) and plain CSV for
figure data. Floats are written with ``repr``, which round-trips exactly, so
identical in-memory objects always serialize to identical bytes and every
artifact survives serialize -> parse -> serialize unchanged.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .entailment import ConeParams
from .errors import CompatibilityError, ConfigError
from .manifold import Curvature
from .metrics import BoundingBox, Counts, MetricsReport, SceneGraph, Tracks
from .objective import LossWeights
from .synth import (
    Observation,
    ObjectTrack,
    SyntheticConfig,
    SyntheticDataset,
    ViewRecord,
    _build_gt_graph,
)
from .trainer import (
    EmbeddingEntry,
    EmbeddingTable,
    EpochStats,
    TrainConfig,
    TrainOutput,
    dataset_digest,
)

FORMAT_VERSION = 1


def canonical_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e


def _floats(arr) -> list:
    return np.asarray(arr, dtype=np.float64).tolist()


# ---------------------------------------------------------------------------
# synthetic config and dataset
# ---------------------------------------------------------------------------

_SYNTH_KEYS = {
    "num_scenes",
    "places_per_scene",
    "objects_per_place",
    "views_per_place",
    "feature_dim",
    "noise_sigma",
    "box_jitter",
    "image_size",
    "seed",
}


def synth_config_doc(config: SyntheticConfig) -> dict:
    doc = {k: getattr(config, k) for k in _SYNTH_KEYS if k != "image_size"}
    doc["image_size"] = list(config.image_size)
    return doc


def synth_config_from_doc(doc: dict) -> SyntheticConfig:
    unknown = set(doc) - _SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
    kwargs = dict(doc)
    if "image_size" in kwargs:
        kwargs["image_size"] = tuple(kwargs["image_size"])
    return SyntheticConfig(**kwargs)


def _box_doc(box: BoundingBox) -> list:
    return [box.x1, box.y1, box.x2, box.y2]


def save_dataset(path, dataset: SyntheticDataset) -> None:
    doc = {
        "format": FORMAT_VERSION,
        "kind": "dataset",
        "config": synth_config_doc(dataset.config),
        "config_digest": dataset_digest(dataset.config),
        "views": [
            {
                "scene": v.scene_id,
                "frame": v.frame_id,
                "place": v.place_label,
                "features": _floats(v.features),
            }
            for v in dataset.views
        ],
        "tracks": [
            {
                "object": t.object_id,
                "scene": t.scene_id,
                "place": t.place_label,
                "frames": {
                    frame: {
                        "present": 1,
                        "box": _box_doc(obs.box),
                        "features": _floats(obs.features),
                    }
                    for frame, obs in sorted(t.frames.items())
                },
            }
            for t in dataset.tracks
        ],
    }
    _write(path, canonical_dumps(doc))


def load_dataset(path) -> SyntheticDataset:
    doc = _read_json(path)
    if doc.get("kind") != "dataset":
        raise ConfigError(f"{path}: not a dataset file")
    config = synth_config_from_doc(doc["config"])
    views = [
        ViewRecord(
            scene_id=v["scene"],
            frame_id=v["frame"],
            place_label=v["place"],
            features=np.asarray(v["features"], dtype=np.float64),
        )
        for v in doc["views"]
    ]
    tracks = []
    for t in doc["tracks"]:
        frames = {}
        for frame, entry in t["frames"].items():
            if not entry.get("present", 0):
                continue
            frames[frame] = Observation(
                features=np.asarray(entry["features"], dtype=np.float64),
                box=BoundingBox(*entry["box"]),
            )
        tracks.append(
            ObjectTrack(
                object_id=t["object"],
                scene_id=t["scene"],
                place_label=t["place"],
                frames=frames,
            )
        )
    return SyntheticDataset(
        config=config,
        views=views,
        tracks=tracks,
        gt_graph=_build_gt_graph(views, tracks),
    )


# ---------------------------------------------------------------------------
# train config and checkpoint
# ---------------------------------------------------------------------------

_TRAIN_KEYS = {
    "embed_dim",
    "projector_dim",
    "lr",
    "curvature_lr",
    "weight_decay",
    "epochs",
    "warmup_epochs",
    "curv_init",
    "lambda_ent",
    "tau_place",
    "tau_object",
    "cone_k",
    "cone_eta",
    "seed",
    "euclidean_ablation",
    "entailment_enabled",
    "curvature_learnable",
}


def train_config_doc(config: TrainConfig) -> dict:
    return {
        "embed_dim": config.embed_dim,
        "projector_dim": config.projector_dim,
        "lr": config.lr,
        "curvature_lr": config.curvature_lr,
        "weight_decay": config.weight_decay,
        "epochs": config.epochs,
        "warmup_epochs": config.warmup_epochs,
        "curv_init": config.curv_init,
        "lambda_ent": config.weights.lambda_ent,
        "tau_place": config.weights.tau_place,
        "tau_object": config.weights.tau_object,
        "cone_k": config.cone.K,
        "cone_eta": config.cone.eta,
        "seed": config.seed,
        "euclidean_ablation": config.euclidean_ablation,
        "entailment_enabled": config.entailment_enabled,
        "curvature_learnable": config.curvature_learnable,
    }


def train_config_from_doc(doc: dict) -> TrainConfig:
    unknown = set(doc) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    kwargs = dict(doc)
    weights = LossWeights(
        lambda_ent=kwargs.pop("lambda_ent", 20.0),
        tau_place=kwargs.pop("tau_place", 0.1),
        tau_object=kwargs.pop("tau_object", 0.1),
    )
    cone = ConeParams(
        K=kwargs.pop("cone_k", 0.1), eta=kwargs.pop("cone_eta", 1.0)
    )
    return TrainConfig(weights=weights, cone=cone, **kwargs)


def save_checkpoint(
    path, out: TrainOutput, thresholds: tuple[float, float]
) -> None:
    doc = {
        "format": FORMAT_VERSION,
        "kind": "checkpoint",
        "dataset_digest": out.dataset_digest,
        "seed": out.seed,
        "curvature": {
            "c": out.curvature.c,
            "learnable": out.curvature.learnable,
        },
        "thresholds": {"place": thresholds[0], "object": thresholds[1]},
        "train_config": train_config_doc(out.config),
        "projector": {k: _floats(v) for k, v in out.projector.items()},
        "table": [
            {
                "id": e.entity_id,
                "kind": e.kind,
                "scene": e.scene_id,
                "tangent": _floats(e.tangent),
            }
            for e in out.table.entries
        ],
    }
    _write(path, canonical_dumps(doc))


def load_checkpoint(path) -> tuple[TrainOutput, tuple[float, float]]:
    doc = _read_json(path)
    if doc.get("kind") != "checkpoint":
        raise ConfigError(f"{path}: not a checkpoint file")
    config = train_config_from_doc(doc["train_config"])
    curv = Curvature(
        c=doc["curvature"]["c"], learnable=doc["curvature"]["learnable"]
    )
    table = EmbeddingTable(
        entries=[
            EmbeddingEntry(
                entity_id=e["id"],
                kind=e["kind"],
                scene_id=e["scene"],
                tangent=np.asarray(e["tangent"], dtype=np.float64),
            )
            for e in doc["table"]
        ],
        curvature=curv.c,
    )
    out = TrainOutput(
        table=table,
        history=[],
        projector={
            k: np.asarray(v, dtype=np.float64)
            for k, v in doc["projector"].items()
        },
        curvature=curv,
        config=config,
        dataset_digest=doc["dataset_digest"],
        seed=doc["seed"],
    )
    thresholds = (doc["thresholds"]["place"], doc["thresholds"]["object"])
    return out, thresholds


def check_compatible(out: TrainOutput, dataset: SyntheticDataset) -> None:
    expected = dataset_digest(dataset.config)
    if out.dataset_digest != expected:
        raise CompatibilityError(
            f"checkpoint was trained for config {out.dataset_digest}, "
            f"dataset has {expected}"
        )


# ---------------------------------------------------------------------------
# graphs and reports
# ---------------------------------------------------------------------------


def save_graph(path, graph: SceneGraph, tracks: Tracks) -> None:
    pp_edges = [
        [graph.place_ids[i], graph.place_ids[j]]
        for i, j in zip(*np.nonzero(np.triu(graph.a_pp, k=1)))
    ]
    po_edges = [
        [graph.place_ids[i], graph.object_ids[j]]
        for i, j in zip(*np.nonzero(graph.a_po))
    ]
    nodes = [
        {"id": pid, "kind": "place-view", "scene": pid.split(":")[0], "view": pid}
        for pid in graph.place_ids
    ] + [
        {"id": oid, "kind": "object", "scene": oid.split(":")[0], "view": None}
        for oid in graph.object_ids
    ]
    track_rows = []
    for oid in sorted(tracks):
        for frame in sorted(tracks[oid]):
            track_rows.append(
                {
                    "object": oid,
                    "frame": frame,
                    "box": _box_doc(tracks[oid][frame]),
                    "present": 1,
                }
            )
    doc = {
        "format": FORMAT_VERSION,
        "kind": "graph",
        "nodes": nodes,
        "edges": {"pp": sorted(pp_edges), "po": sorted(po_edges)},
        "object_members": {
            k: sorted(v) for k, v in graph.object_members.items()
        },
        "tracks": track_rows,
    }
    _write(path, canonical_dumps(doc))


def load_graph(path) -> tuple[SceneGraph, Tracks]:
    doc = _read_json(path)
    if doc.get("kind") != "graph":
        raise ConfigError(f"{path}: not a graph file")
    place_ids = tuple(
        n["id"] for n in doc["nodes"] if n["kind"] == "place-view"
    )
    object_ids = tuple(n["id"] for n in doc["nodes"] if n["kind"] == "object")
    p_index = {pid: i for i, pid in enumerate(place_ids)}
    o_index = {oid: i for i, oid in enumerate(object_ids)}
    a_pp = np.zeros((len(place_ids), len(place_ids)), dtype=bool)
    for a, b in doc["edges"]["pp"]:
        a_pp[p_index[a], p_index[b]] = a_pp[p_index[b], p_index[a]] = True
    a_po = np.zeros((len(place_ids), len(object_ids)), dtype=bool)
    for a, b in doc["edges"]["po"]:
        a_po[p_index[a], o_index[b]] = True
    graph = SceneGraph(
        place_ids=place_ids,
        object_ids=object_ids,
        a_pp=a_pp,
        a_po=a_po,
        object_members={
            k: tuple(v) for k, v in doc.get("object_members", {}).items()
        },
    )
    tracks: Tracks = {}
    for row in doc["tracks"]:
        if not row.get("present", 0):
            continue
        tracks.setdefault(row["object"], {})[row["frame"]] = BoundingBox(
            *row["box"]
        )
    for oid in object_ids:
        tracks.setdefault(oid, {})
    return graph, tracks


def metrics_report_doc(report: MetricsReport) -> dict:
    return {
        "format": FORMAT_VERSION,
        "kind": "metrics",
        "recall_at_1": report.recall_at_1,
        "pp_iou": report.pp_iou,
        "po_iou": report.po_iou,
        "graph_iou": report.graph_iou,
        "matching": report.matching,
        "counts": {
            name: {"tp": c.tp, "fp": c.fp, "fn": c.fn}
            for name, c in report.counts.items()
        },
    }


def save_metrics_report(path, report: MetricsReport) -> None:
    _write(path, canonical_dumps(metrics_report_doc(report)))


def load_metrics_report(path) -> MetricsReport:
    doc = _read_json(path)
    if doc.get("kind") != "metrics":
        raise ConfigError(f"{path}: not a metrics file")
    return MetricsReport(
        pp_iou=doc["pp_iou"],
        po_iou=doc["po_iou"],
        graph_iou=doc["graph_iou"],
        matching=doc["matching"],
        counts={
            name: Counts(tp=c["tp"], fp=c["fp"], fn=c["fn"])
            for name, c in doc["counts"].items()
        },
        recall_at_1=doc["recall_at_1"],
    )


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(x) for x in row))
    _write(path, "\n".join(lines) + "\n")


def save_loss_history(path, history: list[EpochStats]) -> None:
    write_csv(
        path,
        ["epoch", "loss_place", "loss_object", "loss_entailment", "total", "curvature", "lr"],
        [
            [
                h.epoch,
                float(h.loss_place),
                float(h.loss_object),
                float(h.loss_entailment),
                float(h.total),
                float(h.curvature),
                float(h.lr),
            ]
            for h in history
        ],
    )
