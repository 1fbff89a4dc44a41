"""Scene-graph construction from embeddings and the adjacency-IoU suite.

A :class:`SceneGraph` holds place-view nodes, object nodes, the symmetric
place-place adjacency and the place-object adjacency. Predicted graphs are
built from an embedding table by thresholding ``exp(-d)`` similarities and
single-linkage merging of object observations; ground-truth graphs come from
the synthetic generator.

Evaluation follows the truth-to-result protocol: objects are matched
one-to-one by maximizing accumulated per-frame GIoU, predicted object
columns are reordered by the matching, and PP / PO / Graph IoU are the
TP / (TP + FP + FN) ratios of the respective subgraphs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, DomainError, IdSpaceMismatchError
from .manifold import Curvature, LorentzPoint, lorentz_distance

logger = logging.getLogger(__name__)

OBSERVATION_SEP = "@"
"""Observation entity ids are '<object id>@<frame id>'."""

Tracks = dict[str, dict[str, "BoundingBox"]]
"""Per-object, per-frame boxes; an absent frame key means not present."""

_REFINE_LIMIT = 40000  # max n*m for exact lexicographic tie-breaking


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels, corners (x1, y1) < (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ConfigError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass
class SceneGraph:
    """Place-view and object nodes with pp and po adjacency.

    ``a_pp`` is boolean, symmetric, zero-diagonal over place nodes; ``a_po``
    is boolean places x objects. ``object_members`` records, for merged
    object nodes, the observation entity ids that were fused into them.
    """

    place_ids: tuple[str, ...]
    object_ids: tuple[str, ...]
    a_pp: np.ndarray
    a_po: np.ndarray
    object_members: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.place_ids = tuple(self.place_ids)
        self.object_ids = tuple(self.object_ids)
        self.a_pp = np.asarray(self.a_pp, dtype=bool)
        self.a_po = np.asarray(self.a_po, dtype=bool)
        p, o = len(self.place_ids), len(self.object_ids)
        if self.a_pp.shape != (p, p):
            raise ConfigError(f"a_pp shape {self.a_pp.shape} != ({p}, {p})")
        if self.a_po.shape != (p, o):
            raise ConfigError(f"a_po shape {self.a_po.shape} != ({p}, {o})")
        if np.any(np.diag(self.a_pp)):
            raise ConfigError("a_pp must have a zero diagonal")
        if not np.array_equal(self.a_pp, self.a_pp.T):
            raise ConfigError("a_pp must be symmetric")


@dataclass
class MatchScoreMatrix:
    """Accumulated GIoU scores, ground-truth objects x predicted objects."""

    scores: np.ndarray
    gt_ids: tuple[str, ...]
    pred_ids: tuple[str, ...]


@dataclass
class Counts:
    """Edge-level confusion counts of one subgraph."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def iou(self) -> float:
        denom = self.tp + self.fp + self.fn
        if denom == 0:
            logger.warning("IoU of two empty edge sets, using 0/0 = 1")
            return 1.0
        return self.tp / denom


@dataclass
class MetricsReport:
    """Headline metrics plus the matching and per-subgraph counts."""

    pp_iou: float
    po_iou: float
    graph_iou: float
    matching: dict[str, str | None]
    counts: dict[str, Counts]
    recall_at_1: float | None = None


# ---------------------------------------------------------------------------
# similarity and graph construction
# ---------------------------------------------------------------------------


def similarity(a: LorentzPoint, b: LorentzPoint, curv: Curvature) -> np.ndarray:
    """exp(-d_L(a, b)): 1 iff coincident, strictly decreasing in distance."""
    return np.exp(-lorentz_distance(a, b, curv))


def _pairwise_distances(tangents: np.ndarray, curv: Curvature) -> np.ndarray:
    from .manifold import (
        ACOSH_EPS,
        _clamp_space,
        _exp_space,
        _time_from_space,
    )

    clamped = _clamp_space(tangents, curv.tangent_radius())
    space = _exp_space(clamped, curv.c)
    time = _time_from_space(space, curv.c)
    inner = space @ space.T - np.outer(time, time)
    z = np.clip(-curv.c * inner, 1.0 + ACOSH_EPS, None)
    return np.arccosh(z) / curv.sqrt_c


def build_graph(
    table,
    place_thresh: float,
    object_thresh: float,
    curv: Curvature,
) -> SceneGraph:
    """Threshold similarities into a scene graph.

    Place-place edges connect view pairs with similarity >= place_thresh.
    Object observations are merged per scene by single-linkage agglomeration
    at object_thresh (connected components of the similarity graph, scanned
    in entity-id order); each merged node keeps the lowest member id and a
    place-object edge marks every frame one of its members was observed in.
    """
    for name, t in (("place", place_thresh), ("object", object_thresh)):
        if not (0.0 < t < 1.0):
            raise ConfigError(f"{name} threshold must lie in (0, 1), got {t}")
    entries = sorted(table.entries, key=lambda e: e.entity_id)
    places = [e for e in entries if e.kind == "place-view"]
    objects = [e for e in entries if e.kind == "object"]
    if not places:
        raise ConfigError("embedding table has no place-view entries")
    place_ids = tuple(e.entity_id for e in places)

    p_tangents = np.asarray([e.tangent for e in places])
    d_pp = _pairwise_distances(p_tangents, curv)
    a_pp = np.exp(-d_pp) >= place_thresh
    np.fill_diagonal(a_pp, False)

    # per-scene single-linkage merge of object observations
    merged: list[tuple[str, tuple[str, ...], np.ndarray]] = []
    scenes = sorted({e.scene_id for e in objects})
    for scene in scenes:
        obs = [e for e in objects if e.scene_id == scene]
        if not obs:
            continue
        t = np.asarray([e.tangent for e in obs])
        sim = np.exp(-_pairwise_distances(t, curv))
        adjacency = sim >= object_thresh
        parent = list(range(len(obs)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(obs)):
            for j in range(i + 1, len(obs)):
                if adjacency[i, j]:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
        groups: dict[int, list[int]] = {}
        for i in range(len(obs)):
            groups.setdefault(find(i), []).append(i)
        for root in sorted(groups):
            members = groups[root]
            member_ids = tuple(obs[i].entity_id for i in members)
            mean_tangent = np.mean([obs[i].tangent for i in members], axis=0)
            merged.append((min(member_ids), member_ids, mean_tangent))

    merged.sort(key=lambda m: m[0])
    object_ids = tuple(m[0] for m in merged)
    object_members = {m[0]: m[1] for m in merged}

    frame_of = {pid: i for i, pid in enumerate(place_ids)}
    a_po = np.zeros((len(place_ids), len(object_ids)), dtype=bool)
    for col, (_, member_ids, _) in enumerate(merged):
        for member in member_ids:
            _, frame = member.rsplit(OBSERVATION_SEP, 1)
            row = frame_of.get(frame)
            if row is not None:
                a_po[row, col] = True
    return SceneGraph(
        place_ids=place_ids,
        object_ids=object_ids,
        a_pp=a_pp,
        a_po=a_po,
        object_members=object_members,
    )


def merged_object_embedding(
    table, members: tuple[str, ...], curv: Curvature
) -> LorentzPoint:
    """Fused node embedding: exp of the mean of the members' log tangents."""
    from .manifold import TangentAtOrigin, clamp_tangent_norm, exp_map_origin

    by_id = {e.entity_id: e for e in table.entries}
    tangents = np.asarray([by_id[m].tangent for m in members])
    mean = TangentAtOrigin(tangents.mean(axis=0))
    return exp_map_origin(
        clamp_tangent_norm(mean, curv.tangent_radius()), curv
    )


def predicted_tracks(graph: SceneGraph, source_tracks: Tracks) -> Tracks:
    """Tracks of merged objects, boxes taken from the member observations.

    When two members of one node land in the same frame, the lowest member
    id wins (deterministic).
    """
    out: Tracks = {}
    for node_id in graph.object_ids:
        frames: dict[str, BoundingBox] = {}
        for member in sorted(graph.object_members.get(node_id, ())):
            source_id, frame = member.rsplit(OBSERVATION_SEP, 1)
            if frame in frames:
                continue
            box = source_tracks.get(source_id, {}).get(frame)
            if box is not None:
                frames[frame] = box
        out[node_id] = frames
    return out


# ---------------------------------------------------------------------------
# metric primitives
# ---------------------------------------------------------------------------


def adjacency_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|A and B| / |A or B| over matrix cells; two empty matrices give 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ConfigError(f"adjacency shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        logger.warning("adjacency_iou of two empty matrices, using 0/0 = 1")
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU: IoU minus the hull fraction not covered by the union."""
    ix1, iy1 = max(a.x1, b.x1), max(a.y1, b.y1)
    ix2, iy2 = min(a.x2, b.x2), min(a.y2, b.y2)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    union = a.area + b.area - inter
    iou = inter / union
    hx1, hy1 = min(a.x1, b.x1), min(a.y1, b.y1)
    hx2, hy2 = max(a.x2, b.x2), max(a.y2, b.y2)
    hull = (hx2 - hx1) * (hy2 - hy1)
    return iou - (hull - union) / hull


def match_score_matrix(gt_tracks: Tracks, pred_tracks: Tracks) -> MatchScoreMatrix:
    """S_ij = sum over frames where both objects are present of GIoU."""
    gt_ids = tuple(sorted(gt_tracks))
    pred_ids = tuple(sorted(pred_tracks))
    scores = np.zeros((len(gt_ids), len(pred_ids)))
    for i, gid in enumerate(gt_ids):
        g_frames = gt_tracks[gid]
        for j, pid in enumerate(pred_ids):
            p_frames = pred_tracks[pid]
            total = 0.0
            for frame, g_box in g_frames.items():
                p_box = p_frames.get(frame)
                if p_box is not None:
                    total += giou(g_box, p_box)
            scores[i, j] = total
    return MatchScoreMatrix(scores=scores, gt_ids=gt_ids, pred_ids=pred_ids)


def _assignment_value(scores: np.ndarray) -> float:
    """Maximum total of a partial matching (unmatched contributes 0)."""
    n, m = scores.shape
    if n == 0 or m == 0:
        return 0.0
    padded = np.zeros((n + m, n + m))
    padded[:n, :m] = scores
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum())


def _solve_assignment(scores: np.ndarray) -> list[int | None]:
    n, m = scores.shape
    if n == 0 or m == 0:
        return [None] * n
    padded = np.zeros((n + m, n + m))
    padded[:n, :m] = scores
    rows, cols = linear_sum_assignment(padded, maximize=True)
    out: list[int | None] = [None] * n
    for r, c in zip(rows, cols):
        if r < n and c < m:
            out[r] = int(c)
    return out


def _lexicographic_refine(scores: np.ndarray, total: float) -> list[int | None]:
    """Smallest assignment tuple among those achieving `total`.

    Rows are fixed in order; for each row the candidate columns are tried
    ascending (unmatched last) and the first choice that keeps the optimum
    achievable is kept. Achievability is checked exactly with a reduced
    assignment solve, after a cheap upper-bound prune.
    """
    n, m = scores.shape
    atol = 1e-9 * max(1.0, abs(total))
    fixed_sum = 0.0
    free_cols = list(range(m))
    assignment: list[int | None] = []
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        chosen: int | None = None
        candidates: list[int | None] = list(free_cols) + [None]
        for j in candidates:
            gain = scores[i, j] if j is not None else 0.0
            cols_after = [c for c in free_cols if c != j]
            if rest_rows.size and cols_after:
                rest = scores[np.ix_(rest_rows, cols_after)]
                upper = np.maximum(rest.max(axis=1), 0.0).sum()
            else:
                upper = 0.0
            if fixed_sum + gain + upper < total - atol:
                continue
            rest_opt = (
                _assignment_value(scores[np.ix_(rest_rows, cols_after)])
                if rest_rows.size and cols_after
                else 0.0
            )
            if fixed_sum + gain + rest_opt >= total - atol:
                chosen = j
                break
        assignment.append(chosen)
        if chosen is not None:
            fixed_sum += scores[i, chosen]
            free_cols.remove(chosen)
    return assignment


def solve_matching(scores: np.ndarray) -> list[int | None]:
    """Row-to-column assignment maximizing the total score.

    Unmatched rows and columns are allowed and contribute 0. Ties are broken
    by lexicographic order of the assignment tuple (unmatched sorts last);
    the exact tie-break is applied up to ``_REFINE_LIMIT`` score entries,
    beyond which the plain deterministic solver answer is kept.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n, m = scores.shape
    if n == 0 or m == 0:
        return [None] * n
    if n * m <= _REFINE_LIMIT:
        total = _assignment_value(scores)
        return _lexicographic_refine(scores, total)
    return _solve_assignment(scores)


def match_objects(
    gt_tracks: Tracks, pred_tracks: Tracks
) -> tuple[dict[str, str | None], MatchScoreMatrix]:
    """One-to-one truth-to-result matching maximizing accumulated GIoU."""
    matrix = match_score_matrix(gt_tracks, pred_tracks)
    assignment = solve_matching(matrix.scores)
    matching = {
        gid: (matrix.pred_ids[j] if j is not None else None)
        for gid, j in zip(matrix.gt_ids, assignment)
    }
    return matching, matrix


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _pp_counts(gt: np.ndarray, pred: np.ndarray) -> Counts:
    iu = np.triu_indices(gt.shape[0], k=1)
    g, p = gt[iu], pred[iu]
    return Counts(
        tp=int(np.sum(g & p)),
        fp=int(np.sum(~g & p)),
        fn=int(np.sum(g & ~p)),
    )


def evaluate(
    pred: SceneGraph,
    pred_tracks: Tracks,
    gt: SceneGraph,
    gt_tracks: Tracks,
) -> MetricsReport:
    """Full adjacency-IoU evaluation of a predicted graph against truth.

    Place-view nodes must share an id space (views are identified by frame).
    Predicted object columns are reordered by the optimal matching; matched
    columns are compared cell-wise, unmatched ground-truth columns count as
    all-FN and unmatched predicted columns as all-FP. Graph counts are the
    sums of the PP and PO counts.
    """
    if sorted(pred.place_ids) != sorted(gt.place_ids):
        raise IdSpaceMismatchError(
            "predicted and ground-truth place-view ids differ"
        )
    # align predicted place rows to the ground-truth ordering
    perm = [pred.place_ids.index(pid) for pid in gt.place_ids]
    pred_pp = pred.a_pp[np.ix_(perm, perm)]
    pred_po = pred.a_po[perm, :]

    pp = _pp_counts(gt.a_pp, pred_pp)

    matching, _ = match_objects(gt_tracks, pred_tracks)
    gt_col = {oid: k for k, oid in enumerate(gt.object_ids)}
    pred_col = {oid: k for k, oid in enumerate(pred.object_ids)}
    po = Counts()
    matched_pred: set[str] = set()
    for gid in gt.object_ids:
        pid = matching.get(gid)
        g_column = gt.a_po[:, gt_col[gid]]
        if pid is None or pid not in pred_col:
            po.fn += int(g_column.sum())
            continue
        matched_pred.add(pid)
        p_column = pred_po[:, pred_col[pid]]
        po.tp += int(np.sum(g_column & p_column))
        po.fp += int(np.sum(~g_column & p_column))
        po.fn += int(np.sum(g_column & ~p_column))
    for pid in pred.object_ids:
        if pid not in matched_pred:
            po.fp += int(pred_po[:, pred_col[pid]].sum())

    graph = Counts(tp=pp.tp + po.tp, fp=pp.fp + po.fp, fn=pp.fn + po.fn)
    return MetricsReport(
        pp_iou=pp.iou,
        po_iou=po.iou,
        graph_iou=graph.iou,
        matching=matching,
        counts={"pp": pp, "po": po, "graph": graph},
    )


def recall_at_1(table, gt: SceneGraph, curv: Curvature) -> float:
    """Leave-one-out place retrieval against ground-truth adjacency.

    For every place-view, the nearest other place-view by Lorentz distance
    counts as a success when the ground-truth place-place adjacency connects
    the two.
    """
    entries = sorted(
        (e for e in table.entries if e.kind == "place-view"),
        key=lambda e: e.entity_id,
    )
    if len(entries) < 2:
        raise DomainError("recall_at_1 needs at least 2 place-view embeddings")
    ids = [e.entity_id for e in entries]
    index_of = {pid: i for i, pid in enumerate(gt.place_ids)}
    missing = [pid for pid in ids if pid not in index_of]
    if missing:
        raise IdSpaceMismatchError(
            f"table places missing from ground truth: {missing[:3]}"
        )
    tangents = np.asarray([e.tangent for e in entries])
    d = _pairwise_distances(tangents, curv)
    np.fill_diagonal(d, np.inf)
    nearest = np.argmin(d, axis=1)
    hits = 0
    for i, nn in enumerate(nearest):
        gi, gj = index_of[ids[i]], index_of[ids[int(nn)]]
        hits += bool(gt.a_pp[gi, gj])
    return hits / len(ids)
