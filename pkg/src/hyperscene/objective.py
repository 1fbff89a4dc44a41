"""Training objective: hyperbolic InfoNCE, entailment aggregation, totals.

All losses are built as autodiff graphs over tangent-space embeddings: the
embeddings are norm-clamped, exp-mapped with the live curvature, and compared
by Lorentz distance, so gradients flow through the map, the distance and
(when learnable) the curvature. Public entry points return a
:class:`DifferentiableScalar` carrying the value plus the partial derivative
with respect to every input that influenced it.

``check_gradients`` verifies any such objective against central finite
differences; it is the acceptance oracle for the analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .entailment import ConeParams, ORIGIN_TOL, _exterior_angle, _half_aperture, _hinge
from .errors import ConfigError, DomainError
from .manifold import (
    Curvature,
    _clamp_space,
    _cross_inner,
    _distance_from_inner,
    _exp_space,
    _paired_inner,
    _time_from_space,
    TANGENT_RADIUS_FACTOR,
)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total loss: L_place + L_object + lambda * L_entail."""

    lambda_ent: float = 20.0
    tau_place: float = 0.1
    tau_object: float = 0.1

    def __post_init__(self):
        if self.lambda_ent < 0:
            raise ConfigError(f"lambda_ent must be >= 0, got {self.lambda_ent}")
        if self.tau_place <= 0 or self.tau_object <= 0:
            raise ConfigError("temperatures must be positive")


@dataclass
class DifferentiableScalar:
    """A loss value together with its partial derivatives.

    ``partials`` maps a parameter identifier to the gradient array of the
    value with respect to that parameter; every differentiable input of the
    producing operation appears. ``components`` optionally records named
    sub-losses for logging.
    """

    value: float
    partials: dict[str, np.ndarray]
    components: dict[str, float] = field(default_factory=dict)


@dataclass
class ContrastiveBatch:
    """Anchor/positive pairs plus per-anchor negatives, all tangent vectors.

    ``negatives`` is a shared pool of candidate embeddings; ``negative_mask``
    row i selects the pool entries acting as negatives for anchor i (all of
    them when the mask is None). ``from_lists`` builds the pool form from an
    explicit per-anchor list of negative sets.
    """

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    negative_mask: np.ndarray | None = None
    kind: str = "place"

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=np.float64))
        self.positives = np.atleast_2d(
            np.asarray(self.positives, dtype=np.float64)
        )
        self.negatives = np.atleast_2d(
            np.asarray(self.negatives, dtype=np.float64)
        )
        if len(self.anchors) == 0:
            raise ConfigError("contrastive batch has no anchors")
        if self.anchors.shape != self.positives.shape:
            raise ConfigError(
                "positives must align index-wise with anchors: "
                f"{self.anchors.shape} vs {self.positives.shape}"
            )
        if self.negative_mask is not None:
            self.negative_mask = np.asarray(self.negative_mask, dtype=bool)
            if self.negative_mask.shape != (
                len(self.anchors),
                len(self.negatives),
            ):
                raise ConfigError("negative_mask shape mismatch")
            if not self.negative_mask.any(axis=1).all():
                raise ConfigError("every anchor needs at least one negative")
        elif len(self.negatives) == 0:
            raise ConfigError("every anchor needs at least one negative")

    @classmethod
    def from_lists(
        cls,
        anchors: Sequence[np.ndarray],
        positives: Sequence[np.ndarray],
        negatives: Sequence[Sequence[np.ndarray]],
        kind: str = "place",
    ) -> "ContrastiveBatch":
        anchors = np.asarray(anchors, dtype=np.float64)
        if len(negatives) != len(anchors):
            raise ConfigError("one negative set per anchor required")
        pool_rows = []
        mask = np.zeros(
            (len(anchors), sum(len(ns) for ns in negatives)), dtype=bool
        )
        at = 0
        for i, ns in enumerate(negatives):
            for n in ns:
                pool_rows.append(np.asarray(n, dtype=np.float64))
                mask[i, at] = True
                at += 1
        if not pool_rows:
            raise ConfigError("every anchor needs at least one negative")
        return cls(
            anchors=anchors,
            positives=np.asarray(positives, dtype=np.float64),
            negatives=np.vstack(pool_rows),
            negative_mask=mask,
            kind=kind,
        )


# ---------------------------------------------------------------------------
# graph builders (Tensor in, Tensor out)
# ---------------------------------------------------------------------------


def _map_points(tangents, c):
    """Clamp + exp-map a (N, n) block of tangents; returns (space, time)."""
    r_max = TANGENT_RADIUS_FACTOR / np.sqrt(c)
    clamped = _clamp_space(tangents, r_max)
    space = _exp_space(clamped, c)
    return space, _time_from_space(space, c)


def info_nce_from_distances(d_pos, d_neg, tau: float, mask=None):
    """InfoNCE on precomputed distances with the log-sum-exp shift.

    d_pos: (N,) positive distances; d_neg: (N, M) negative distances;
    mask: optional (N, M) bool selecting valid negatives per anchor.
    """
    n = ad.value_of(d_pos).shape[0]
    logits_pos = (-1.0 / tau) * d_pos.reshape((n, 1))
    logits_neg = (-1.0 / tau) * d_neg
    if mask is not None:
        logits_neg = ad.where(mask, logits_neg, -np.inf)
    logits = ad.concatenate([logits_pos, logits_neg], axis=1)
    lse = ad.logsumexp(logits, axis=1)
    return (lse - logits_pos.reshape((n,))).mean()


def _info_nce_graph(
    anchors, positives, pool, mask, c, tau: float, squared_euclidean: bool = False
):
    if squared_euclidean:
        diff = anchors - positives
        d_pos = (diff * diff).sum(axis=-1)
        a2 = (anchors * anchors).sum(axis=-1)
        p2 = (pool * pool).sum(axis=-1)
        na = ad.value_of(a2).shape[0]
        npool = ad.value_of(p2).shape[0]
        d_neg = (
            a2.reshape((na, 1))
            + p2.reshape((1, npool))
            - 2.0 * (anchors @ pool.T)
        )
    else:
        a_s, a_t = _map_points(anchors, c)
        p_s, p_t = _map_points(positives, c)
        n_s, n_t = _map_points(pool, c)
        d_pos = _distance_from_inner(
            _paired_inner(a_s, a_t, p_s, p_t), c
        )
        d_neg = _distance_from_inner(_cross_inner(a_s, a_t, n_s, n_t), c)
    return info_nce_from_distances(d_pos, d_neg, tau, mask)


def _info_nce_indexed(
    items,
    anchor_idx: np.ndarray,
    pos_idx: np.ndarray,
    neg_mask: np.ndarray,
    c,
    tau: float,
    squared_euclidean: bool = False,
):
    """InfoNCE over (anchor, positive) index pairs into one shared item set.

    Computes the full pairwise distance matrix once; ``neg_mask`` row i marks
    the negatives of item i. Used by the trainer, where each step enumerates
    every ordered same-group pair deterministically.
    """
    if squared_euclidean:
        sq = (items * items).sum(axis=-1)
        m = ad.value_of(sq).shape[0]
        d_all = (
            sq.reshape((m, 1)) + sq.reshape((1, m)) - 2.0 * (items @ items.T)
        )
    else:
        s, t = _map_points(items, c)
        d_all = _distance_from_inner(_cross_inner(s, t, s, t), c)
    n_pairs = len(anchor_idx)
    d_pos = d_all[anchor_idx, pos_idx]
    neg_logits = ad.where(neg_mask, (-1.0 / tau) * d_all, -np.inf)
    rows = neg_logits[anchor_idx]
    logits_pos = (-1.0 / tau) * d_pos.reshape((n_pairs, 1))
    lse = ad.logsumexp(ad.concatenate([logits_pos, rows], axis=1), axis=1)
    return (lse - logits_pos.reshape((n_pairs,))).mean()


def _entailment_graph(place_tangents, object_tangents, c, params: ConeParams):
    """Mean hinge over ground-truth (place apex, object child) pairs.

    Pairs whose place tangent is within ORIGIN_TOL of the origin are skipped
    (the origin carries no cone); returns (graph, n_used, n_skipped).
    """
    norms = np.linalg.norm(ad.value_of(place_tangents), axis=-1)
    keep = norms >= ORIGIN_TOL
    n_skipped = int((~keep).sum())
    n_used = int(keep.sum())
    if n_used == 0:
        raise DomainError(
            "entailment batch is degenerate: every place apex is at the origin"
        )
    if n_skipped:
        place_tangents = place_tangents[keep]
        object_tangents = object_tangents[keep]
    q_s, q_t = _map_points(place_tangents, c)
    p_s, p_t = _map_points(object_tangents, c)
    inner = _paired_inner(p_s, p_t, q_s, q_t)
    phi = _exterior_angle(p_s, p_t, q_s, q_t, inner, c)
    qn = np.sqrt(ad.clip((q_s * q_s).sum(axis=-1), 1e-300, None))
    omega = _half_aperture(qn, c, params.K)
    return _hinge(phi, omega, params.eta).mean(), n_used, n_skipped


def _curvature_tensor(curv: Curvature) -> tuple[Tensor | float, Tensor | None]:
    """Live curvature for a loss graph: softplus of the raw leaf if learnable."""
    if curv.learnable:
        raw = Tensor(np.float64(curv.raw), name="curvature")
        return ad.softplus(raw), raw
    return curv.c, None


def _package(
    root: Tensor,
    leaves: dict[str, Tensor],
    components: dict[str, float] | None = None,
) -> DifferentiableScalar:
    root.backward()
    partials = {}
    for name, leaf in leaves.items():
        grad = leaf.grad
        if grad is None:
            grad = np.zeros_like(leaf.value)
        partials[name] = grad
    value = float(root.value)
    if not np.isfinite(value):
        raise DomainError("loss value is not finite")
    return DifferentiableScalar(
        value=value, partials=partials, components=components or {}
    )


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def info_nce(
    batch: ContrastiveBatch,
    curv: Curvature,
    tau: float,
    squared_euclidean: bool = False,
) -> DifferentiableScalar:
    """Mean InfoNCE over the batch with Lorentz-distance similarity.

    Each anchor contributes -log softmax of -d/tau over its positive plus
    its negatives. With ``squared_euclidean`` the distances are squared
    Euclidean on the raw tangents (the flat-space ablation) and no mapping
    is applied.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    leaves = {
        "anchors": Tensor(batch.anchors, name="anchors"),
        "positives": Tensor(batch.positives, name="positives"),
        "negatives": Tensor(batch.negatives, name="negatives"),
    }
    c, raw = _curvature_tensor(curv)
    if raw is not None and not squared_euclidean:
        leaves["curvature"] = raw
    loss = _info_nce_graph(
        leaves["anchors"],
        leaves["positives"],
        leaves["negatives"],
        batch.negative_mask,
        c,
        tau,
        squared_euclidean,
    )
    ds = _package(loss, leaves)
    assert ds.value >= -1e-12, "InfoNCE with a positive at d>=0 cannot go negative"
    return ds


def entailment_batch_loss(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    curv: Curvature,
    params: ConeParams,
) -> DifferentiableScalar:
    """Mean entailment hinge over ground-truth (place, object) tangent pairs."""
    if len(pairs) == 0:
        raise ConfigError("entailment batch is empty")
    places = np.asarray([p for p, _ in pairs], dtype=np.float64)
    objects = np.asarray([o for _, o in pairs], dtype=np.float64)
    leaves = {
        "places": Tensor(places, name="places"),
        "objects": Tensor(objects, name="objects"),
    }
    c, raw = _curvature_tensor(curv)
    if raw is not None:
        leaves["curvature"] = raw
    loss, n_used, n_skipped = _entailment_graph(
        leaves["places"], leaves["objects"], c, params
    )
    ds = _package(loss, leaves)
    ds.components["pairs_used"] = float(n_used)
    ds.components["pairs_skipped"] = float(n_skipped)
    return ds


def total_loss(
    place_batch: ContrastiveBatch,
    object_batch: ContrastiveBatch,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    curv: Curvature,
    weights: LossWeights,
    cone: ConeParams,
    squared_euclidean: bool = False,
) -> DifferentiableScalar:
    """L_place + L_object + lambda * L_entail on one shared graph.

    The three terms share the live curvature, so the reported partials are
    the sums of the component partials. Parameter identifiers are prefixed
    by component: ``place_anchors``, ``object_negatives``, ``pair_places``,
    ... plus ``curvature`` when learnable.
    """
    leaves: dict[str, Tensor] = {}
    for prefix, batch in (("place", place_batch), ("object", object_batch)):
        leaves[f"{prefix}_anchors"] = Tensor(batch.anchors)
        leaves[f"{prefix}_positives"] = Tensor(batch.positives)
        leaves[f"{prefix}_negatives"] = Tensor(batch.negatives)
    c, raw = _curvature_tensor(curv)
    if raw is not None:
        leaves["curvature"] = raw
    l_place = _info_nce_graph(
        leaves["place_anchors"],
        leaves["place_positives"],
        leaves["place_negatives"],
        place_batch.negative_mask,
        c,
        weights.tau_place,
        squared_euclidean,
    )
    l_object = _info_nce_graph(
        leaves["object_anchors"],
        leaves["object_positives"],
        leaves["object_negatives"],
        object_batch.negative_mask,
        c,
        weights.tau_object,
        squared_euclidean,
    )
    components = {
        "place": float(ad.value_of(l_place)),
        "object": float(ad.value_of(l_object)),
    }
    total = l_place + l_object
    if weights.lambda_ent > 0 and len(pairs) > 0 and not squared_euclidean:
        leaves["pair_places"] = Tensor(
            np.asarray([p for p, _ in pairs], dtype=np.float64)
        )
        leaves["pair_objects"] = Tensor(
            np.asarray([o for _, o in pairs], dtype=np.float64)
        )
        l_ent, _, _ = _entailment_graph(
            leaves["pair_places"], leaves["pair_objects"], c, cone
        )
        components["entailment"] = float(ad.value_of(l_ent))
        total = total + weights.lambda_ent * l_ent
    else:
        components["entailment"] = 0.0
    return _package(total, leaves, components)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradientCheckReport:
    """Outcome of a finite-difference gradient verification."""

    name: str
    max_rel_err: float
    per_parameter: dict[str, float]
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and np.isfinite(self.max_rel_err)


def check_gradients(
    loss_fn: Callable[[dict[str, np.ndarray]], DifferentiableScalar],
    params: dict[str, np.ndarray],
    seed: int | None = None,
) -> GradientCheckReport:
    """Compare analytic partials of ``loss_fn`` against central differences.

    Uses per-coordinate steps h = 1e-5 * max(1, |theta_i|) and reports the
    maximum over coordinates of |analytic - numeric| / max(1e-8, |numeric|).
    The caller must evaluate at a point where the objective is smooth
    (resample if a hinge or clamp boundary is within ~1e-6). Non-finite
    analytic gradients are reported as failures naming the parameter.
    """
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    base = loss_fn(params)
    per_param: dict[str, float] = {}
    failures: list[str] = []
    name = getattr(loss_fn, "__name__", "objective")
    for pname, theta in params.items():
        analytic = base.partials.get(pname)
        if analytic is None:
            failures.append(f"{pname}: missing from partials")
            continue
        analytic = np.asarray(analytic, dtype=np.float64)
        if not np.all(np.isfinite(analytic)):
            failures.append(f"{pname}: non-finite analytic gradient")
            continue
        worst = 0.0
        flat = theta.reshape(-1)
        for i in range(flat.size):
            h = 1e-5 * max(1.0, abs(flat[i]))
            bumped = dict(params)
            plus = theta.copy().reshape(-1)
            plus[i] += h
            bumped[pname] = plus.reshape(theta.shape)
            f_plus = loss_fn(bumped).value
            minus = theta.copy().reshape(-1)
            minus[i] -= h
            bumped[pname] = minus.reshape(theta.shape)
            f_minus = loss_fn(bumped).value
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(analytic.reshape(-1)[i] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, rel)
        per_param[pname] = worst
    max_rel = max(per_param.values()) if per_param else float("nan")
    return GradientCheckReport(
        name=name, max_rel_err=max_rel, per_parameter=per_param, failures=failures
    )
