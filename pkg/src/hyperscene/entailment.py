"""Entailment-cone geometry on the Lorentz model.

Every point q away from the origin carries a geodesically convex cone opening
outward (away from the origin); a child point p is entailed by q when the
exterior angle at q between the geodesic q->p and the outward radial
direction does not exceed the (scaled) half-aperture of the cone. The hinge
``max(0, phi - eta * omega)`` turns that membership test into a loss.

The same two angles can be computed in the Poincare ball: the half-aperture
from the ball-coordinate formula directly, and the exterior angle from the
three pairwise distances via the hyperbolic law of cosines. Those routes
share no code with the Lorentz formulas and serve as the cross-model
validation oracle; see the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DomainError
from .manifold import (
    ACOSH_EPS,
    Curvature,
    LorentzPoint,
    PoincarePoint,
    _paired_inner,
    _require_on_manifold,
)

ASIN_CLAMP = 1e-9
"""Slack keeping asin/acos arguments off the boundary (infinite derivative)."""

SQRT_FLOOR = 1e-12
"""Floor for the exterior-angle sqrt argument near coincident points."""

ORIGIN_TOL = 1e-12
"""Space norms below this count as the origin, which carries no cone."""


@dataclass(frozen=True)
class ConeParams:
    """Aperture scale K and threshold multiplier eta for entailment cones."""

    K: float = 0.1
    eta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.K) and self.K > 0):
            raise ConfigError(f"cone K must be positive, got {self.K}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ConfigError(f"cone eta must be positive, got {self.eta}")


def half_aperture(
    q: LorentzPoint, curv: Curvature, params: ConeParams
) -> np.ndarray:
    """Half-aperture omega(q) = asin(2K / (sqrt(c) |q_space|)).

    Wider near the origin (the argument clamps at 1 - 1e-9, giving ~pi/2),
    strictly decreasing in |q_space| once the clamp is inactive.
    """
    _require_on_manifold(q, curv, "half_aperture")
    qn = np.linalg.norm(q.space, axis=-1)
    if np.any(qn < ORIGIN_TOL):
        raise DomainError("half_aperture: no cone at root (q at origin)")
    return _half_aperture(qn, curv.c, params.K)


def exterior_angle(
    p: LorentzPoint, q: LorentzPoint, curv: Curvature
) -> np.ndarray:
    """Exterior angle phi(p, q) at q between the geodesic to p and q's ray.

    phi = acos((p_time + q_time * c * <p,q>_L)
               / (|q_space| * sqrt((c <p,q>_L)^2 - 1))), clamped into the
    acos domain. Degenerate configurations are rejected: q at the origin has
    no outward ray, and p = q leaves the geodesic direction undefined.
    """
    _require_on_manifold(p, curv, "exterior_angle(p)")
    _require_on_manifold(q, curv, "exterior_angle(q)")
    qn = np.linalg.norm(q.space, axis=-1)
    if np.any(qn < ORIGIN_TOL):
        raise DomainError("exterior_angle: q at origin has no cone axis")
    inner = _paired_inner(p.space, p.time, q.space, q.time)
    if np.any(-curv.c * inner < 1.0 + 2.0 * ACOSH_EPS):
        raise DomainError(
            "exterior_angle: p and q coincide within distance tolerance"
        )
    return _exterior_angle(p.space, p.time, q.space, q.time, inner, curv.c)


def entailment_loss(
    p: LorentzPoint, q: LorentzPoint, curv: Curvature, params: ConeParams
) -> np.ndarray:
    """Hinge loss max(0, phi(p, q) - eta * omega(q)).

    Zero exactly when p lies inside the eta-scaled cone of q; the
    subgradient at the hinge point is 0.
    """
    phi = exterior_angle(p, q, curv)
    omega = half_aperture(q, curv, params)
    return np.maximum(0.0, phi - params.eta * omega)


# ---------------------------------------------------------------------------
# Poincare-ball route (cross-model validation oracle)
# ---------------------------------------------------------------------------


def poincare_distance(
    u: PoincarePoint, v: PoincarePoint, curv: Curvature
) -> np.ndarray:
    """Geodesic distance in the Poincare ball of radius 1/sqrt(c)."""
    c = curv.c
    du = np.sum((u.coords - v.coords) ** 2, axis=-1)
    un = np.sum(u.coords * u.coords, axis=-1)
    vn = np.sum(v.coords * v.coords, axis=-1)
    arg = 1.0 + 2.0 * c * du / ((1.0 - c * un) * (1.0 - c * vn))
    return np.arccosh(np.maximum(arg, 1.0)) / np.sqrt(c)


def half_aperture_poincare(
    b: PoincarePoint, curv: Curvature, params: ConeParams
) -> np.ndarray:
    """Ball-coordinate half-aperture asin(K (1 - c|b|^2) / (sqrt(c) |b|))."""
    c = curv.c
    bn = np.linalg.norm(b.coords, axis=-1)
    if np.any(bn < ORIGIN_TOL):
        raise DomainError("half_aperture_poincare: no cone at root")
    arg = params.K * (1.0 - c * bn * bn) / (np.sqrt(c) * bn)
    return np.arcsin(np.clip(arg, -1.0 + ASIN_CLAMP, 1.0 - ASIN_CLAMP))


def exterior_angle_poincare(
    p: PoincarePoint, q: PoincarePoint, curv: Curvature
) -> np.ndarray:
    """Exterior angle at q computed via the hyperbolic law of cosines.

    Uses only ball-coordinate distances between the origin, q and p; shares
    no code with the Lorentz-form exterior angle.
    """
    c = curv.c
    zero = PoincarePoint(np.zeros_like(q.coords))
    d_op = poincare_distance(zero, p, curv)
    d_oq = poincare_distance(zero, q, curv)
    d_qp = poincare_distance(q, p, curv)
    sc = np.sqrt(c)
    g_op = np.cosh(sc * d_op)
    g_oq = np.cosh(sc * d_oq)
    g_qp = np.cosh(sc * d_qp)
    num = g_op - g_qp * g_oq
    den = np.sinh(sc * d_qp) * np.sinh(sc * d_oq)
    den = np.maximum(den, SQRT_FLOOR)
    return np.arccos(np.clip(num / den, -1.0, 1.0))


# ---------------------------------------------------------------------------
# generic cores (ndarray or autodiff.Tensor inputs)
# ---------------------------------------------------------------------------


def _half_aperture(q_space_norm, c, K):
    arg = 2.0 * K / (np.sqrt(c) * q_space_norm)
    return np.arcsin(ad.clip(arg, -1.0 + ASIN_CLAMP, 1.0 - ASIN_CLAMP))


def _exterior_angle(ps, pt, qs, qt, inner, c):
    qn = np.sqrt(ad.clip((qs * qs).sum(axis=-1), SQRT_FLOOR, None))
    num = pt + qt * c * inner
    den = qn * np.sqrt(ad.clip((c * inner) ** 2 - 1.0, SQRT_FLOOR, None))
    return np.arccos(ad.clip(num / den, -1.0 + ASIN_CLAMP, 1.0 - ASIN_CLAMP))


def _hinge(phi, omega, eta):
    return np.maximum(0.0, phi - eta * omega)
