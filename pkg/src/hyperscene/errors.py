"""Exception types shared across the package."""


class HypersceneError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(HypersceneError, ValueError):
    """Two vectors that must share a dimension do not."""

    def __init__(self, dim_a: int, dim_b: int, context: str = ""):
        self.dim_a = dim_a
        self.dim_b = dim_b
        msg = f"dimension mismatch: {dim_a} vs {dim_b}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class ManifoldConstraintError(HypersceneError, ValueError):
    """A point violates the hyperboloid constraint beyond tolerance."""


class DomainError(HypersceneError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigError(HypersceneError, ValueError):
    """Invalid configuration value or malformed config document."""


class TrainingDivergedError(HypersceneError, RuntimeError):
    """Optimization produced a non-finite loss."""

    def __init__(self, step: int, curvature: float, max_tangent_norm: float):
        self.step = step
        self.curvature = curvature
        self.max_tangent_norm = max_tangent_norm
        super().__init__(
            f"training diverged at step {step}: "
            f"curvature={curvature:.6g}, max tangent norm={max_tangent_norm:.6g}"
        )


class CompatibilityError(HypersceneError, ValueError):
    """Checkpoint and dataset were produced from different configurations."""


class IdSpaceMismatchError(HypersceneError, ValueError):
    """Predicted and ground-truth graphs do not share a vertex id space."""
