"""Entailment cones: apertures, exterior angles, and the hinge loss.

Shows how the cone narrows away from the origin, when a child point counts
as entailed, and that the Lorentz-form angle agrees with the law-of-cosines
computation in the Poincare ball.
"""

import numpy as np

from hyperscene import (
    ConeParams,
    Curvature,
    TangentAtOrigin,
    entailment_loss,
    exp_map_origin,
    exterior_angle,
    half_aperture,
    lorentz_to_poincare,
)
from hyperscene.entailment import exterior_angle_poincare, half_aperture_poincare

curv = Curvature(1.0)
params = ConeParams()  # K = 0.1, eta = 1.0


def at(t, angle=0.0):
    direction = np.array([np.cos(angle), np.sin(angle)])
    return exp_map_origin(TangentAtOrigin(t * direction), curv)


print("half-aperture narrows with distance from the origin:")
for t in (0.3, 0.6, 1.0, 2.0, 4.0):
    omega = float(half_aperture(at(t), curv, params))
    print(f"  tangent norm {t:.1f}: omega = {np.degrees(omega):6.2f} deg")

print("\nexterior angle at q for children in different positions:")
q = at(1.0)
for label, p in (
    ("outward on q's ray     ", at(2.5)),
    ("slightly off the ray   ", at(2.5, angle=0.05)),
    ("sideways               ", at(1.0, angle=np.pi / 2)),
    ("behind the origin      ", at(1.0, angle=np.pi)),
):
    phi = float(exterior_angle(p, q, curv))
    loss = float(entailment_loss(p, q, curv, params))
    print(f"  {label}: phi = {np.degrees(phi):7.2f} deg, hinge loss = {loss:.4f}")

print("\ncross-model check (Lorentz formula vs ball law of cosines):")
rng = np.random.default_rng(1)
worst = 0.0
for _ in range(200):
    vp, vq = rng.normal(size=(2, 3)) * 0.8
    p, q = (exp_map_origin(TangentAtOrigin(v), curv) for v in (vp, vq))
    phi_l = float(exterior_angle(p, q, curv))
    phi_b = float(
        exterior_angle_poincare(
            lorentz_to_poincare(p, curv), lorentz_to_poincare(q, curv), curv
        )
    )
    omega_l = float(half_aperture(q, curv, params))
    omega_b = float(
        half_aperture_poincare(lorentz_to_poincare(q, curv), curv, params)
    )
    worst = max(worst, abs(phi_l - phi_b), abs(omega_l - omega_b))
print(f"  max disagreement over 200 random pairs: {worst:.2e}")
