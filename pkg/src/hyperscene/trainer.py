"""Desk-scale trainer: a linear projector into the tangent space at the
origin, optimized with AdamW under the contrastive + entailment objective.

Each step samples two scenes, treats all views of a place as mutual
positives for place InfoNCE, same-object cross-view observations as
positives for object InfoNCE, and ground-truth (place-view, object
observation) pairs for the entailment hinge. Curvature is learnable through
its softplus parameterization and clamped back into range after every step.

The whole loop is driven by seeded numpy generators and single-threaded
array ops, so identical (dataset, config) pairs reproduce the embedding
table bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .entailment import ConeParams
from .errors import ConfigError, TrainingDivergedError
from .manifold import (
    CURVATURE_MAX,
    CURVATURE_MIN,
    Curvature,
    TANGENT_RADIUS_FACTOR,
    _clamp_space,
)
from .objective import (
    LossWeights,
    _entailment_graph,
    _info_nce_indexed,
    DifferentiableScalar,
)
from .synth import SyntheticDataset


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults are the desk-scale configuration."""

    embed_dim: int = 32
    projector_dim: int = 32
    lr: float = 5e-2
    curvature_lr: float = 1.0
    weight_decay: float = 1e-6
    epochs: int = 300
    warmup_epochs: int = 3
    curv_init: float = 80.0
    weights: LossWeights = field(default_factory=LossWeights)
    cone: ConeParams = field(default_factory=ConeParams)
    seed: int = 0
    euclidean_ablation: bool = False
    entailment_enabled: bool = True
    curvature_learnable: bool = True

    def __post_init__(self):
        if self.embed_dim < 2 or self.projector_dim < 2:
            raise ConfigError("embedding dimensions must be >= 2")
        if self.lr <= 0 or self.curvature_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0 <= self.warmup_epochs <= self.epochs):
            raise ConfigError("warmup_epochs must lie in [0, epochs]")
        Curvature(self.curv_init)  # range check


@dataclass(frozen=True)
class EmbeddingEntry:
    entity_id: str
    kind: str  # "place-view" | "object"
    scene_id: str
    tangent: np.ndarray


@dataclass
class EmbeddingTable:
    """Per-entity tangent embeddings plus the curvature they were built for."""

    entries: list[EmbeddingEntry]
    curvature: float

    def tangents(self, kind: str | None = None) -> np.ndarray:
        rows = [e.tangent for e in self.entries if kind in (None, e.kind)]
        return np.asarray(rows)


@dataclass
class EpochStats:
    epoch: int
    loss_place: float
    loss_object: float
    loss_entailment: float
    total: float
    curvature: float
    lr: float
    max_tangent_norm: float
    constraint_residual: float


@dataclass
class TrainOutput:
    """Everything a checkpoint needs: table, history and the projector
    weights required to embed held-out scenes."""

    table: EmbeddingTable
    history: list[EpochStats]
    projector: dict[str, np.ndarray]
    curvature: Curvature
    config: TrainConfig
    dataset_digest: str
    seed: int


@dataclass
class RootDistances:
    entity_ids: list[str]
    tangent_norms: np.ndarray
    root_distances: np.ndarray


def lr_schedule(
    step: int, total_steps: int, warmup_steps: int, base_lr: float
) -> float:
    """Linear warmup to base_lr, then cosine decay to 0; continuous at the
    junction."""
    if not (0 <= step <= total_steps):
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps == warmup_steps:
        return base_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def dataset_digest(config) -> str:
    """Stable digest of a synthetic config, used for compatibility checks."""
    doc = {
        "num_scenes": config.num_scenes,
        "places_per_scene": config.places_per_scene,
        "objects_per_place": config.objects_per_place,
        "views_per_place": config.views_per_place,
        "feature_dim": config.feature_dim,
        "noise_sigma": config.noise_sigma,
        "box_jitter": config.box_jitter,
        "image_size": list(config.image_size),
        "seed": config.seed,
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# batch composition
# ---------------------------------------------------------------------------


@dataclass
class StepBatch:
    """Feature matrices, pair indices and masks for one optimization step.

    InfoNCE anchors/positives are every ordered pair of same-group items
    (all views of a place, all observations of an object), indexing into the
    shared item set; negatives for a pair are all different-group items.
    Fully deterministic given the chunk of scenes.
    """

    view_features: np.ndarray  # (V, d)
    view_anchor_idx: np.ndarray  # (P,)
    view_pos_idx: np.ndarray  # (P,)
    view_neg_mask: np.ndarray  # (V, V) row i: negatives of item i
    obs_features: np.ndarray  # (O, d)
    obs_anchor_idx: np.ndarray  # (Q,)
    obs_pos_idx: np.ndarray  # (Q,)
    obs_neg_mask: np.ndarray  # (O, O)
    obs_view_idx: np.ndarray  # (O,) observation -> view row


class _DatasetIndex:
    """Per-scene feature/label lookups reused across steps."""

    def __init__(self, dataset: SyntheticDataset):
        self.scene_ids = dataset.scene_ids
        self.views_by_scene: dict[str, list] = {}
        for v in sorted(dataset.views, key=lambda v: v.frame_id):
            self.views_by_scene.setdefault(v.scene_id, []).append(v)
        self.obs_by_scene: dict[str, list] = {}
        for item in dataset.observation_items():
            entity_id, scene_id, frame, features = item
            object_id = entity_id.rsplit("@", 1)[0]
            self.obs_by_scene.setdefault(scene_id, []).append(
                (entity_id, object_id, frame, features)
            )


def _group_pairs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All ordered same-label index pairs plus the different-label mask."""
    same = labels[:, None] == labels[None, :]
    neg_mask = ~same
    pair = same & ~np.eye(len(labels), dtype=bool)
    anchor_idx, pos_idx = np.nonzero(pair)
    if anchor_idx.size == 0:  # singleton groups: fall back to self-pairs
        anchor_idx = np.arange(len(labels))
        pos_idx = anchor_idx.copy()
    return anchor_idx, pos_idx, neg_mask


def make_step_batch(index: _DatasetIndex, scene_ids: list[str]) -> StepBatch:
    views = [v for s in scene_ids for v in index.views_by_scene[s]]
    obs = [o for s in scene_ids for o in index.obs_by_scene.get(s, [])]
    view_features = np.asarray([v.features for v in views])
    frame_row = {v.frame_id: i for i, v in enumerate(views)}
    v_anchor, v_pos, v_neg = _group_pairs(
        np.asarray([v.place_label for v in views])
    )
    o_anchor, o_pos, o_neg = _group_pairs(np.asarray([o[1] for o in obs]))
    return StepBatch(
        view_features=view_features,
        view_anchor_idx=v_anchor,
        view_pos_idx=v_pos,
        view_neg_mask=v_neg,
        obs_features=np.asarray([o[3] for o in obs]),
        obs_anchor_idx=o_anchor,
        obs_pos_idx=o_pos,
        obs_neg_mask=o_neg,
        obs_view_idx=np.asarray([frame_row[o[2]] for o in obs], dtype=int),
    )


# ---------------------------------------------------------------------------
# loss over parameters
# ---------------------------------------------------------------------------


def _project(features: np.ndarray, leaves: dict[str, Tensor]):
    if "projector_out" in leaves:
        return features @ leaves["projector_in"] @ leaves["projector_out"]
    return features @ leaves["projector"]


def init_params(
    feature_dim: int, config: TrainConfig, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    # Start tangent norms around 20% of the clamp radius for the initial
    # curvature, well inside the live-gradient region of the hinge and of
    # the arcosh/acos clamps.
    r_init = TANGENT_RADIUS_FACTOR / math.sqrt(config.curv_init)
    scale_out = 0.2 * r_init / math.sqrt(config.embed_dim)
    if config.projector_dim != config.embed_dim:
        params = {
            "projector_in": rng.normal(
                size=(feature_dim, config.projector_dim)
            )
            / math.sqrt(feature_dim),
            "projector_out": rng.normal(
                size=(config.projector_dim, config.embed_dim)
            )
            * scale_out,
        }
    else:
        params = {
            "projector": rng.normal(size=(feature_dim, config.embed_dim))
            * scale_out
        }
    if config.curvature_learnable:
        params["curvature"] = np.float64(
            ad.inverse_softplus(np.float64(config.curv_init))
        )
    return params


def step_loss(
    batch: StepBatch, params: dict[str, np.ndarray], config: TrainConfig
) -> DifferentiableScalar:
    """The full step objective as a DifferentiableScalar over `params`.

    The same function drives the optimizer and the gradient-check oracle.
    """
    leaves = {
        name: Tensor(value, name=name)
        for name, value in params.items()
    }
    if config.curvature_learnable:
        c = ad.softplus(leaves["curvature"])
        c_value = float(ad.value_of(c))
    else:
        c = config.curv_init
        c_value = config.curv_init
    view_t = _project(batch.view_features, leaves)
    obs_t = _project(batch.obs_features, leaves)

    raw_norms = np.linalg.norm(
        np.vstack([ad.value_of(view_t), ad.value_of(obs_t)]), axis=1
    )
    if not np.all(np.isfinite(raw_norms)):
        # hand a non-finite value back so the training loop aborts with
        # divergence diagnostics instead of a domain error downstream
        return DifferentiableScalar(
            value=float("nan"),
            partials={k: np.zeros_like(v) for k, v in params.items()},
            components={
                "place": float("nan"),
                "object": float("nan"),
                "entailment": float("nan"),
                "curvature": c_value,
                "max_tangent_norm": float(np.nanmax(raw_norms)),
            },
        )

    l_place = _info_nce_indexed(
        view_t,
        batch.view_anchor_idx,
        batch.view_pos_idx,
        batch.view_neg_mask,
        c,
        config.weights.tau_place,
        config.euclidean_ablation,
    )
    l_object = _info_nce_indexed(
        obs_t,
        batch.obs_anchor_idx,
        batch.obs_pos_idx,
        batch.obs_neg_mask,
        c,
        config.weights.tau_object,
        config.euclidean_ablation,
    )
    components = {
        "place": float(ad.value_of(l_place)),
        "object": float(ad.value_of(l_object)),
        "entailment": 0.0,
    }
    total = l_place + l_object
    use_entailment = (
        config.entailment_enabled
        and config.weights.lambda_ent > 0
        and not config.euclidean_ablation
    )
    if use_entailment:
        l_ent, _, _ = _entailment_graph(
            view_t[batch.obs_view_idx], obs_t, c, config.cone
        )
        components["entailment"] = float(ad.value_of(l_ent))
        total = total + config.weights.lambda_ent * l_ent

    norms = np.linalg.norm(
        np.vstack([ad.value_of(view_t), ad.value_of(obs_t)]), axis=1
    )
    components["curvature"] = c_value
    components["max_tangent_norm"] = float(norms.max())

    total.backward()
    partials = {}
    for name, leaf in leaves.items():
        partials[name] = (
            leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        )
    return DifferentiableScalar(
        value=float(total.value), partials=partials, components=components
    )


class _AdamW:
    """Adam with decoupled weight decay; decay skips the curvature scalar.

    ``lr_scales`` lets one parameter group run at a multiple of the base
    learning rate while sharing the warmup/cosine shape.
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        weight_decay: float,
        lr_scales: dict[str, float] | None = None,
    ):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.weight_decay = weight_decay
        self.lr_scales = lr_scales or {}

    def update(
        self,
        params: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        lr: float,
    ) -> dict[str, np.ndarray]:
        self.t += 1
        out = {}
        for name, theta in params.items():
            g = grads[name]
            lr_p = lr * self.lr_scales.get(name, 1.0)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            theta = theta - lr_p * m_hat / (np.sqrt(v_hat) + self.eps)
            if name != "curvature" and self.weight_decay > 0:
                theta = theta - lr_p * self.weight_decay * theta
            out[name] = theta
        return out


def _clamp_curvature_raw(raw: np.ndarray) -> np.ndarray:
    c = float(ad.softplus(np.float64(raw)))
    if c < CURVATURE_MIN:
        return np.float64(ad.inverse_softplus(np.float64(CURVATURE_MIN)))
    if c > CURVATURE_MAX:
        return np.float64(ad.inverse_softplus(np.float64(CURVATURE_MAX)))
    return np.float64(raw)


def _current_curvature(
    params: dict[str, np.ndarray], config: TrainConfig
) -> Curvature:
    if config.curvature_learnable:
        return Curvature.from_raw(float(params["curvature"]), learnable=True)
    return Curvature(config.curv_init, learnable=False)


def train(
    dataset: SyntheticDataset, config: TrainConfig
) -> TrainOutput:
    """Optimize the projector (and curvature) on the dataset.

    Raises :class:`TrainingDivergedError` with step diagnostics if the loss
    goes non-finite. The returned history has one entry per epoch.
    """
    if not dataset.views:
        raise ConfigError("dataset has no views")
    index = _DatasetIndex(dataset)
    scene_ids = index.scene_ids
    steps_per_epoch = max(1, math.ceil(len(scene_ids) / 2))
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = config.warmup_epochs * steps_per_epoch

    rng_init = np.random.default_rng([config.seed, 0])
    params = init_params(dataset.config.feature_dim, config, rng_init)
    optimizer = _AdamW(
        params,
        config.weight_decay,
        lr_scales={"curvature": config.curvature_lr / config.lr},
    )

    history: list[EpochStats] = []
    step_idx = 0
    for epoch in range(config.epochs):
        order_rng = np.random.default_rng([config.seed, 1, epoch])
        order = [scene_ids[i] for i in order_rng.permutation(len(scene_ids))]
        chunks = [order[i : i + 2] for i in range(0, len(order), 2)]
        acc = {"place": 0.0, "object": 0.0, "entailment": 0.0, "total": 0.0}
        max_norm = 0.0
        lr = 0.0
        for chunk in chunks:
            batch = make_step_batch(index, chunk)
            ds = step_loss(batch, params, config)
            finite = np.isfinite(ds.value) and all(
                np.all(np.isfinite(g)) for g in ds.partials.values()
            )
            if not finite:
                raise TrainingDivergedError(
                    step=step_idx,
                    curvature=_current_curvature(params, config).c,
                    max_tangent_norm=ds.components.get(
                        "max_tangent_norm", float("nan")
                    ),
                )
            lr = lr_schedule(step_idx, total_steps, warmup_steps, config.lr)
            params = optimizer.update(params, ds.partials, lr)
            if config.curvature_learnable:
                params["curvature"] = _clamp_curvature_raw(params["curvature"])
            step_idx += 1
            acc["place"] += ds.components["place"]
            acc["object"] += ds.components["object"]
            acc["entailment"] += ds.components["entailment"]
            acc["total"] += ds.value
            max_norm = max(max_norm, ds.components["max_tangent_norm"])
        n = len(chunks)
        curv_now = _current_curvature(params, config)
        table = embed_dataset(params, curv_now, dataset)
        residual = _table_constraint_residual(table, curv_now)
        history.append(
            EpochStats(
                epoch=epoch,
                loss_place=acc["place"] / n,
                loss_object=acc["object"] / n,
                loss_entailment=acc["entailment"] / n,
                total=acc["total"] / n,
                curvature=curv_now.c,
                lr=lr,
                max_tangent_norm=max_norm,
                constraint_residual=residual,
            )
        )

    curv_final = _current_curvature(params, config)
    table = embed_dataset(params, curv_final, dataset)
    projector = {
        k: np.array(v) for k, v in params.items() if k != "curvature"
    }
    return TrainOutput(
        table=table,
        history=history,
        projector=projector,
        curvature=curv_final,
        config=config,
        dataset_digest=dataset_digest(dataset.config),
        seed=config.seed,
    )


def embed_dataset(
    params: dict[str, np.ndarray],
    curv: Curvature,
    dataset: SyntheticDataset,
) -> EmbeddingTable:
    """Project every entity of the dataset into clamped tangent vectors."""
    r_max = curv.tangent_radius()

    def tangent(features: np.ndarray) -> np.ndarray:
        if "projector_out" in params:
            t = features @ params["projector_in"] @ params["projector_out"]
        else:
            t = features @ params["projector"]
        return np.asarray(_clamp_space(t[np.newaxis, :], r_max))[0]

    entries: list[EmbeddingEntry] = []
    for v in sorted(dataset.views, key=lambda v: v.frame_id):
        entries.append(
            EmbeddingEntry(
                entity_id=v.frame_id,
                kind="place-view",
                scene_id=v.scene_id,
                tangent=tangent(v.features),
            )
        )
    for entity_id, scene_id, _, features in dataset.observation_items():
        entries.append(
            EmbeddingEntry(
                entity_id=entity_id,
                kind="object",
                scene_id=scene_id,
                tangent=tangent(features),
            )
        )
    return EmbeddingTable(entries=entries, curvature=curv.c)


def _table_constraint_residual(table: EmbeddingTable, curv: Curvature) -> float:
    from .manifold import TangentAtOrigin, constraint_residual, exp_map_origin

    tangents = table.tangents()
    point = exp_map_origin(TangentAtOrigin(tangents), curv)
    return float(np.max(constraint_residual(point, curv)))


def embed_root_distances(table: EmbeddingTable) -> dict[str, RootDistances]:
    """Tangent norms and Lorentz root distances per entity kind."""
    from .manifold import (
        Curvature as Curv,
        LorentzPoint,
        TangentAtOrigin,
        exp_map_origin,
        lorentz_distance,
        origin,
    )

    if not table.entries:
        raise ConfigError("embedding table is empty")
    curv = Curv(table.curvature)
    out: dict[str, RootDistances] = {}
    for kind in ("place-view", "object"):
        entries = [e for e in table.entries if e.kind == kind]
        if not entries:
            continue
        tangents = np.asarray([e.tangent for e in entries])
        points = exp_map_origin(TangentAtOrigin(tangents), curv)
        o = origin(tangents.shape[1], curv)
        o_b = LorentzPoint(
            space=np.broadcast_to(o.space, tangents.shape),
            time=np.broadcast_to(o.time, tangents.shape[:1]),
        )
        dists = lorentz_distance(o_b, points, curv)
        out[kind] = RootDistances(
            entity_ids=[e.entity_id for e in entries],
            tangent_norms=np.linalg.norm(tangents, axis=1),
            root_distances=np.asarray(dists),
        )
    return out
