"""Deterministic synthetic multiview scene generator.

A scene has a set of places; each place is observed from several views and
contains several objects. Place anchors are unit-norm Gaussian feature
vectors, object anchors sit at orthogonal offsets of norm 0.5 from their
place anchor (so a place lies between its objects in feature space), and
every observation is an anchor plus isotropic Gaussian noise. Object boxes
get an independent position jitter per view.

Every scene derives its random stream from (seed, scene index), so a fixed
seed reproduces the dataset bit-for-bit and scenes are independent of each
other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .metrics import OBSERVATION_SEP, BoundingBox, SceneGraph, Tracks

OBJECT_OFFSET_NORM = 0.5
SPLIT_STREAM = 104729  # salt separating the split stream from scene streams


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the generator; all randomness derives from ``seed``."""

    num_scenes: int = 5
    places_per_scene: int = 8
    objects_per_place: int = 4
    views_per_place: int = 6
    feature_dim: int = 32
    noise_sigma: float = 0.1
    box_jitter: float = 4.0
    image_size: tuple[int, int] = (192, 256)
    seed: int = 0

    def __post_init__(self):
        for name in (
            "num_scenes",
            "places_per_scene",
            "objects_per_place",
            "views_per_place",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be >= 2")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.box_jitter < 0:
            raise ConfigError("box_jitter must be >= 0")
        w, h = self.image_size
        if w < 8 or h < 8:
            raise ConfigError("image_size too small for valid boxes")


@dataclass(frozen=True)
class ViewRecord:
    """One camera view: its scene, frame id, place label and feature."""

    scene_id: str
    frame_id: str
    place_label: str
    features: np.ndarray


@dataclass(frozen=True)
class Observation:
    """One object seen in one frame: feature vector and detection box."""

    features: np.ndarray
    box: BoundingBox


@dataclass(frozen=True)
class ObjectTrack:
    """Per-frame observations of one object (present iff frame is a key)."""

    object_id: str
    scene_id: str
    place_label: str
    frames: dict[str, Observation]


@dataclass
class SyntheticDataset:
    """Views, object tracks and the ground-truth scene graph."""

    config: SyntheticConfig
    views: list[ViewRecord]
    tracks: list[ObjectTrack]
    gt_graph: SceneGraph = field(repr=False)

    @property
    def scene_ids(self) -> list[str]:
        seen: list[str] = []
        for v in self.views:
            if v.scene_id not in seen:
                seen.append(v.scene_id)
        return seen

    def gt_tracks(self) -> Tracks:
        """Boxes per object per frame, the ground-truth side of matching."""
        return {
            t.object_id: {f: obs.box for f, obs in t.frames.items()}
            for t in self.tracks
        }

    def observation_items(self) -> list[tuple[str, str, str, np.ndarray]]:
        """(entity id, scene, frame, features) per object observation."""
        out = []
        for t in self.tracks:
            for frame, obs in sorted(t.frames.items()):
                out.append(
                    (
                        f"{t.object_id}{OBSERVATION_SEP}{frame}",
                        t.scene_id,
                        frame,
                        obs.features,
                    )
                )
        out.sort(key=lambda item: item[0])
        return out


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _orthogonal_offset(rng: np.random.Generator, anchor: np.ndarray) -> np.ndarray:
    direction = rng.normal(size=anchor.shape)
    direction -= np.dot(direction, _unit(anchor)) * _unit(anchor)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:  # astronomically unlikely; retry deterministically
        return _orthogonal_offset(rng, anchor)
    return direction / norm * OBJECT_OFFSET_NORM


def _base_box(rng: np.random.Generator, image_size: tuple[int, int]) -> BoundingBox:
    w_img, h_img = image_size
    w = rng.uniform(w_img / 8, w_img / 3)
    h = rng.uniform(h_img / 8, h_img / 3)
    x1 = rng.uniform(0, w_img - w)
    y1 = rng.uniform(0, h_img - h)
    return BoundingBox(x1=x1, y1=y1, x2=x1 + w, y2=y1 + h)


def _jittered(
    rng: np.random.Generator,
    base: BoundingBox,
    jitter: float,
    image_size: tuple[int, int],
) -> BoundingBox:
    w_img, h_img = image_size
    dx = rng.uniform(-jitter, jitter)
    dy = rng.uniform(-jitter, jitter)
    dx = min(max(dx, -base.x1), w_img - base.x2)
    dy = min(max(dy, -base.y1), h_img - base.y2)
    return BoundingBox(
        x1=base.x1 + dx, y1=base.y1 + dy, x2=base.x2 + dx, y2=base.y2 + dy
    )


def _build_gt_graph(
    views: list[ViewRecord], tracks: list[ObjectTrack]
) -> SceneGraph:
    place_ids = tuple(sorted(v.frame_id for v in views))
    label_of = {v.frame_id: v.place_label for v in views}
    row = {pid: i for i, pid in enumerate(place_ids)}
    a_pp = np.zeros((len(place_ids), len(place_ids)), dtype=bool)
    for i, pi in enumerate(place_ids):
        for j in range(i + 1, len(place_ids)):
            if label_of[pi] == label_of[place_ids[j]]:
                a_pp[i, j] = a_pp[j, i] = True
    object_ids = tuple(sorted(t.object_id for t in tracks))
    col = {oid: k for k, oid in enumerate(object_ids)}
    a_po = np.zeros((len(place_ids), len(object_ids)), dtype=bool)
    for t in tracks:
        for frame in t.frames:
            a_po[row[frame], col[t.object_id]] = True
    return SceneGraph(
        place_ids=place_ids, object_ids=object_ids, a_pp=a_pp, a_po=a_po
    )


def generate(config: SyntheticConfig) -> SyntheticDataset:
    """Generate a dataset; identical configs produce identical bits.

    Draw order within a scene is fixed: place anchors, then per place its
    object anchors and base boxes, then per view the view-feature noise
    followed by per-object observation noise and box jitter.
    """
    views: list[ViewRecord] = []
    tracks: list[ObjectTrack] = []
    for s in range(config.num_scenes):
        rng = np.random.default_rng([config.seed, s])
        scene_id = f"s{s:03d}"
        view_counter = 0
        for p in range(config.places_per_scene):
            place_label = f"{scene_id}:p{p:02d}"
            place_anchor = _unit(rng.normal(size=config.feature_dim))
            object_ids = []
            object_anchors = []
            object_boxes = []
            for o in range(config.objects_per_place):
                object_ids.append(f"{place_label}:o{o}")
                object_anchors.append(
                    place_anchor + _orthogonal_offset(rng, place_anchor)
                )
                object_boxes.append(_base_box(rng, config.image_size))
            frames: list[str] = []
            obs_by_object: list[dict[str, Observation]] = [
                {} for _ in object_ids
            ]
            for _ in range(config.views_per_place):
                frame_id = f"{scene_id}:v{view_counter:02d}"
                view_counter += 1
                frames.append(frame_id)
                features = place_anchor + rng.normal(
                    size=config.feature_dim
                ) * config.noise_sigma
                views.append(
                    ViewRecord(
                        scene_id=scene_id,
                        frame_id=frame_id,
                        place_label=place_label,
                        features=features,
                    )
                )
                for k, anchor in enumerate(object_anchors):
                    obs_features = anchor + rng.normal(
                        size=config.feature_dim
                    ) * config.noise_sigma
                    box = _jittered(
                        rng, object_boxes[k], config.box_jitter, config.image_size
                    )
                    obs_by_object[k][frame_id] = Observation(
                        features=obs_features, box=box
                    )
            for oid, obs in zip(object_ids, obs_by_object):
                tracks.append(
                    ObjectTrack(
                        object_id=oid,
                        scene_id=scene_id,
                        place_label=place_label,
                        frames=obs,
                    )
                )
    return SyntheticDataset(
        config=config,
        views=views,
        tracks=tracks,
        gt_graph=_build_gt_graph(views, tracks),
    )


def split(
    dataset: SyntheticDataset, train_fraction: float
) -> tuple[SyntheticDataset, SyntheticDataset]:
    """Scene-level train/test split; no scene straddles the boundary."""
    if not (0.0 < train_fraction < 1.0):
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    scene_ids = dataset.scene_ids
    if len(scene_ids) < 2:
        raise ConfigError("need at least 2 scenes to split")
    rng = np.random.default_rng([dataset.config.seed, SPLIT_STREAM])
    order = list(rng.permutation(len(scene_ids)))
    n_train = int(round(len(scene_ids) * train_fraction))
    n_train = min(max(n_train, 1), len(scene_ids) - 1)
    train_set = {scene_ids[i] for i in order[:n_train]}

    def restrict(keep: set[str]) -> SyntheticDataset:
        views = [v for v in dataset.views if v.scene_id in keep]
        tracks = [t for t in dataset.tracks if t.scene_id in keep]
        return SyntheticDataset(
            config=dataset.config,
            views=views,
            tracks=tracks,
            gt_graph=_build_gt_graph(views, tracks),
        )

    test_set = set(scene_ids) - train_set
    return restrict(train_set), restrict(test_set)
