"""Lorentz-model primitives with numerical safeguards.

Points live on the upper sheet of the two-sheeted hyperboloid

    L^n = { x in R^(n+1) : <x, x>_L = -1/c },   c > 0,

with the Lorentz inner product ``<x, y>_L = <x_space, y_space> - x_time *
y_time`` and coordinates laid out space-first, time-last, so the origin is
``(0, ..., 0, 1/sqrt(c))``. All public operations validate their
preconditions and return plain numpy results; the private ``_*`` helpers at
the bottom implement the same formulas generically and also accept
:class:`~hyperscene.autodiff.Tensor` arguments, which is how the training
objective obtains gradients through the geometry.

Numerical guardrails:

* ``arcosh`` arguments are clamped to ``1 + ACOSH_EPS`` so coincident points
  yield a finite zero-distance floor instead of NaN.
* ``sinh(t)/t`` and ``arcsinh(t)/t`` switch to 2-term series below
  ``t = 1e-4`` where the direct quotient would lose precision.
* Tangent norms are clamped to ``TANGENT_RADIUS_FACTOR / sqrt(c)``, keeping
  hyperbolic function arguments small enough that exp-mapped points satisfy
  the hyperboloid constraint to 1e-9 in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import (
    ConfigError,
    DimensionMismatchError,
    DomainError,
    ManifoldConstraintError,
)

ACOSH_EPS = 1e-7
"""Clamp slack for arcosh arguments in the distance (induces the d(x,x) floor)."""

TANGENT_RADIUS_FACTOR = 7.5
"""sqrt(c) * r_max. At 7.5 the float64 constraint residual of exp-mapped
points stays below ~2e-10; at 10 it would reach ~3e-8 and violate the 1e-9
budget."""

CURVATURE_MIN = 1e-3
CURVATURE_MAX = 1e4

CONSTRAINT_ATOL = 1e-9
"""Residual |c <x,x>_L + 1| guaranteed for points produced by this module."""

CONSTRAINT_CHECK_TOL = 1e-6
"""Residual beyond which inputs are rejected as off-manifold."""

_SMALL_T2 = 1e-8  # switch to series below t = 1e-4, t2 = t^2
_TINY = 1e-300  # division guard inside dead `where` branches


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Curvature:
    """Positive curvature magnitude c; the manifold has curvature -c.

    When ``learnable`` the trainer stores the unconstrained value
    ``raw = softplus^-1(c)`` and re-derives ``c = softplus(raw)`` so gradient
    steps can never drive c through zero; c is clamped back into
    ``[CURVATURE_MIN, CURVATURE_MAX]`` after every optimizer step.
    """

    c: float
    learnable: bool = False

    def __post_init__(self):
        if not np.isfinite(self.c) or self.c <= 0:
            raise ConfigError(f"curvature must be a positive real, got {self.c}")
        if not (CURVATURE_MIN <= self.c <= CURVATURE_MAX):
            raise ConfigError(
                f"curvature {self.c} outside [{CURVATURE_MIN}, {CURVATURE_MAX}]"
            )

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def raw(self) -> float:
        """Unconstrained parameterization u with softplus(u) = c."""
        return float(ad.inverse_softplus(self.c))

    @classmethod
    def from_raw(cls, raw: float, learnable: bool = True) -> "Curvature":
        c = float(ad.softplus(np.float64(raw)))
        c = min(max(c, CURVATURE_MIN), CURVATURE_MAX)
        return cls(c=c, learnable=learnable)

    def tangent_radius(self) -> float:
        """Largest admissible tangent norm r_max for this curvature."""
        return TANGENT_RADIUS_FACTOR / self.sqrt_c


@dataclass(frozen=True, eq=False)
class TangentAtOrigin:
    """Tangent vector at the hyperboloid origin; time component is 0."""

    space: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "space", np.asarray(self.space, dtype=np.float64)
        )

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.space, axis=-1)

    @property
    def dim(self) -> int:
        return self.space.shape[-1]


@dataclass(frozen=True, eq=False)
class LorentzPoint:
    """Point on the upper hyperboloid sheet: time = sqrt(1/c + |space|^2)."""

    space: np.ndarray
    time: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "space", np.asarray(self.space, dtype=np.float64)
        )
        object.__setattr__(self, "time", np.asarray(self.time, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.space.shape[-1]

    def as_vector(self) -> np.ndarray:
        """Ambient (n+1)-vector(s), space components first, time last."""
        return np.concatenate(
            [self.space, self.time[..., np.newaxis]], axis=-1
        )

    @classmethod
    def from_space(cls, space: np.ndarray, curv: Curvature) -> "LorentzPoint":
        space = np.asarray(space, dtype=np.float64)
        return cls(space=space, time=_time_from_space(space, curv.c))

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "LorentzPoint":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(space=vec[..., :-1], time=vec[..., -1])


@dataclass(frozen=True, eq=False)
class PoincarePoint:
    """Point in the Poincare ball of radius 1/sqrt(c): c |coords|^2 < 1."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "coords", np.asarray(self.coords, dtype=np.float64)
        )

    @property
    def dim(self) -> int:
        return self.coords.shape[-1]


def origin(dim: int, curv: Curvature) -> LorentzPoint:
    """The hyperboloid origin (0, ..., 0, 1/sqrt(c))."""
    return LorentzPoint(
        space=np.zeros(dim), time=np.asarray(1.0 / curv.sqrt_c)
    )


def constraint_residual(x: LorentzPoint, curv: Curvature) -> np.ndarray:
    """|c <x,x>_L + 1|, the hyperboloid constraint violation."""
    inner = _paired_inner(x.space, x.time, x.space, x.time)
    return np.abs(curv.c * inner + 1.0)


def _require_on_manifold(x: LorentzPoint, curv: Curvature, who: str) -> None:
    resid = constraint_residual(x, curv)
    worst = float(np.max(resid))
    if worst > CONSTRAINT_CHECK_TOL:
        raise ManifoldConstraintError(
            f"{who}: point violates hyperboloid constraint "
            f"(residual {worst:.3e} > {CONSTRAINT_CHECK_TOL:.0e} at c={curv.c})"
        )
    if np.any(x.time <= 0):
        raise ManifoldConstraintError(f"{who}: point not on the upper sheet")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def lorentz_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lorentz inner product of ambient vectors (time component last).

    Bilinear and symmetric; for on-manifold points equals -1/c.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatchError(
            x.shape[-1], y.shape[-1], "lorentz_inner"
        )
    if x.shape[-1] < 2:
        raise DimensionMismatchError(
            x.shape[-1], 2, "lorentz_inner needs ambient dimension >= 2"
        )
    return _paired_inner(x[..., :-1], x[..., -1], y[..., :-1], y[..., -1])


def lorentz_distance(
    x: LorentzPoint, y: LorentzPoint, curv: Curvature
) -> np.ndarray:
    """Geodesic distance (1/sqrt(c)) * arcosh(max(-c <x,y>_L, 1 + eps)).

    The clamp makes d(x, x) a small positive floor, arcosh(1 + eps)/sqrt(c)
    <= 4.5e-4/sqrt(c), treated as zero within tolerance.
    """
    _require_on_manifold(x, curv, "lorentz_distance(x)")
    _require_on_manifold(y, curv, "lorentz_distance(y)")
    inner = _paired_inner(x.space, x.time, y.space, y.time)
    return _distance_from_inner(inner, curv.c)


def clamp_tangent_norm(v: TangentAtOrigin, r_max: float) -> TangentAtOrigin:
    """Rescale v to norm <= r_max, preserving direction; 0 maps to 0."""
    if r_max <= 0:
        raise ConfigError(f"r_max must be positive, got {r_max}")
    return TangentAtOrigin(space=_clamp_space(v.space, r_max))


def exp_map_origin(v: TangentAtOrigin, curv: Curvature) -> LorentzPoint:
    """Exponential map at the origin.

    x_space = sinh(sqrt(c) |v|) / (sqrt(c) |v|) * v, with the limit value 1
    for the prefactor as |v| -> 0; the time component comes from the
    hyperboloid constraint, so results are on-manifold by construction.
    """
    if not np.all(np.isfinite(v.space)):
        raise DomainError("exp_map_origin: non-finite tangent vector")
    space = _exp_space(v.space, curv.c)
    return LorentzPoint(space=space, time=_time_from_space(space, curv.c))


def log_map_origin(x: LorentzPoint, curv: Curvature) -> TangentAtOrigin:
    """Logarithmic map at the origin; inverse of exp_map_origin.

    Direction is the tangent projection of x at the origin (the space
    components) and the magnitude equals lorentz_distance(origin, x), which
    reduces to arcsinh(sqrt(c) |x_space|) / sqrt(c).
    """
    _require_on_manifold(x, curv, "log_map_origin")
    return TangentAtOrigin(space=_log_space(x.space, curv.c))


def project_tangent(
    u: np.ndarray, z: LorentzPoint, curv: Curvature
) -> np.ndarray:
    """Orthogonal projection of ambient u onto the tangent space at z.

    Returns u + c * z * <u, z>_L, which is Lorentz-orthogonal to z.
    """
    u = np.asarray(u, dtype=np.float64)
    zvec = z.as_vector()
    if u.shape[-1] != zvec.shape[-1]:
        raise DimensionMismatchError(
            u.shape[-1], zvec.shape[-1], "project_tangent"
        )
    _require_on_manifold(z, curv, "project_tangent")
    inner = lorentz_inner(u, zvec)
    return u + curv.c * zvec * inner[..., np.newaxis]


def poincare_to_lorentz(b: PoincarePoint, curv: Curvature) -> LorentzPoint:
    """Lift a Poincare-ball point onto the hyperboloid.

    x_space = 2 b / (1 - c |b|^2); time from the hyperboloid constraint.
    """
    c = curv.c
    sq = np.sum(b.coords * b.coords, axis=-1)
    if np.any(c * sq >= 1.0 - 1e-9):
        raise DomainError(
            "poincare_to_lorentz: point on or outside the ball boundary "
            f"(max c|b|^2 = {float(np.max(c * sq)):.12f})"
        )
    space = 2.0 * b.coords / (1.0 - c * sq)[..., np.newaxis]
    return LorentzPoint(space=space, time=_time_from_space(space, c))


def lorentz_to_poincare(x: LorentzPoint, curv: Curvature) -> PoincarePoint:
    """Project a hyperboloid point into the Poincare ball.

    Closed-form inverse of poincare_to_lorentz:
    b = x_space * (sqrt(1 + c |x_space|^2) - 1) / (c |x_space|^2), with the
    limit b = x_space / 2 as |x_space| -> 0.
    """
    _require_on_manifold(x, curv, "lorentz_to_poincare")
    c = curv.c
    sq = np.sum(x.space * x.space, axis=-1)
    t2 = c * sq
    # (sqrt(1+t2) - 1) / t2 rewritten as 1 / (sqrt(1+t2) + 1) is exact at 0
    factor = 1.0 / (np.sqrt(1.0 + t2) + 1.0)
    coords = x.space * factor[..., np.newaxis]
    return PoincarePoint(coords=coords)


# ---------------------------------------------------------------------------
# generic cores (ndarray or autodiff.Tensor inputs)
# ---------------------------------------------------------------------------


def _paired_inner(xs, xt, ys, yt):
    """<x, y>_L for aligned space/time parts; broadcasts like numpy."""
    return (xs * ys).sum(axis=-1) - xt * yt


def _cross_inner(xs, xt, ys, yt):
    """All-pairs <x_i, y_j>_L: (N, n), (N,) x (M, n), (M,) -> (N, M)."""
    n = ad.value_of(xt).shape[0]
    m = ad.value_of(yt).shape[0]
    return xs @ ys.T - xt.reshape((n, 1)) * yt.reshape((1, m))


def _time_from_space(x_space, c):
    return np.sqrt(1.0 / c + (x_space * x_space).sum(axis=-1))


def _clamp_space(v_space, r_max):
    """min(|v|, r_max)/|v| * v with a zero-safe quotient."""
    sq = (v_space * v_space).sum(axis=-1, keepdims=True)
    norm = np.sqrt(ad.clip(sq, _TINY, None))
    scale = ad.where(ad.value_of(sq) <= ad.value_of(r_max * r_max), 1.0, r_max / norm)
    return v_space * scale


def _exp_space(v_space, c):
    """sinh(sqrt(c)|v|)/(sqrt(c)|v|) * v, series below t = 1e-4."""
    t2 = c * (v_space * v_space).sum(axis=-1, keepdims=True)
    t = np.sqrt(ad.clip(t2, _TINY, None))
    prefactor = ad.where(
        ad.value_of(t2) < _SMALL_T2, 1.0 + t2 / 6.0, np.sinh(t) / t
    )
    return v_space * prefactor


def _log_space(x_space, c):
    """arcsinh(sqrt(c)|x_s|)/(sqrt(c)|x_s|) * x_s, series below t = 1e-4."""
    t2 = c * (x_space * x_space).sum(axis=-1, keepdims=True)
    t = np.sqrt(ad.clip(t2, _TINY, None))
    prefactor = ad.where(
        ad.value_of(t2) < _SMALL_T2, 1.0 - t2 / 6.0, np.arcsinh(t) / t
    )
    return x_space * prefactor


def _distance_from_inner(inner, c):
    z = ad.clip(-c * inner, 1.0 + ACOSH_EPS, None)
    return np.arccosh(z) / np.sqrt(c)
