"""Hyperbolic scene-graph embeddings on the Lorentz hyperboloid.

Subpackages:

- ``manifold``: Lorentz-model primitives (inner product, distance, exp/log
  maps, Poincare-ball conversions) with numerical safeguards.
- ``entailment``: entailment-cone half-aperture, exterior angle and hinge
  loss, plus the Poincare-ball cross-model oracle.
- ``objective``: differentiable InfoNCE + entailment objectives and a
  finite-difference gradient checker.
- ``autodiff``: the minimal reverse-mode tape the objectives are built on.
- ``synth``: deterministic synthetic multiview scene generator.
- ``trainer``: desk-scale AdamW training of a linear projector with
  learnable curvature.
- ``metrics``: scene-graph construction and the PP/PO/Graph IoU suite with
  GIoU-based object matching and Recall@1.
- ``serialization`` / ``cli``: file formats and the command-line interface.
"""

from .entailment import ConeParams, entailment_loss, exterior_angle, half_aperture
from .errors import (
    CompatibilityError,
    ConfigError,
    DimensionMismatchError,
    DomainError,
    HypersceneError,
    IdSpaceMismatchError,
    ManifoldConstraintError,
    TrainingDivergedError,
)
from .manifold import (
    Curvature,
    LorentzPoint,
    PoincarePoint,
    TangentAtOrigin,
    clamp_tangent_norm,
    exp_map_origin,
    log_map_origin,
    lorentz_distance,
    lorentz_inner,
    lorentz_to_poincare,
    origin,
    poincare_to_lorentz,
    project_tangent,
)
from .metrics import (
    BoundingBox,
    MetricsReport,
    SceneGraph,
    adjacency_iou,
    build_graph,
    evaluate,
    giou,
    match_objects,
    recall_at_1,
    similarity,
)
from .objective import (
    ContrastiveBatch,
    DifferentiableScalar,
    LossWeights,
    check_gradients,
    entailment_batch_loss,
    info_nce,
    total_loss,
)
from .synth import SyntheticConfig, SyntheticDataset, generate, split
from .trainer import (
    EmbeddingTable,
    TrainConfig,
    TrainOutput,
    embed_dataset,
    embed_root_distances,
    lr_schedule,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
