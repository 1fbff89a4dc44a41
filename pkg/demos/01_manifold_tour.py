"""Tour of the Lorentz-model primitives.

Walks through the core geometry: points on the hyperboloid, distances,
exp/log maps and the Poincare-ball correspondence, printing the invariants
each operation maintains.
"""

import numpy as np

from hyperscene import (
    Curvature,
    LorentzPoint,
    TangentAtOrigin,
    exp_map_origin,
    log_map_origin,
    lorentz_distance,
    lorentz_inner,
    lorentz_to_poincare,
    origin,
    poincare_to_lorentz,
)
from hyperscene.manifold import constraint_residual

curv = Curvature(80.0)
print(f"curvature c = {curv.c}, tangent clamp radius r_max = {curv.tangent_radius():.4f}")

o = origin(3, curv)
print(f"\norigin = (0, 0, 0, {float(o.time):.6f});  c<o,o>_L + 1 = "
      f"{float(curv.c * lorentz_inner(o.as_vector(), o.as_vector())[()] + 1):.2e}")

rng = np.random.default_rng(0)
v = TangentAtOrigin(rng.normal(size=(5, 3)) * 0.2)
x = exp_map_origin(v, curv)
print("\nexp-mapped 5 random tangents:")
print(f"  max hyperboloid residual: {float(np.max(constraint_residual(x, curv))):.2e}")

back = log_map_origin(x, curv)
print(f"  max log(exp(v)) - v error: {float(np.max(np.abs(back.space - v.space))):.2e}")

# distances along a geodesic through the origin are additive in tangent norm
direction = np.array([1.0, 0.0, 0.0])
a = exp_map_origin(TangentAtOrigin(0.3 * direction), curv)
b = exp_map_origin(TangentAtOrigin(-0.5 * direction), curv)
print(f"\nd(exp(0.3 u), exp(-0.5 u)) = {float(lorentz_distance(a, b, curv)):.6f}"
      "  (tangent norms add: 0.8)")

ball = lorentz_to_poincare(x, curv)
print(f"\nPoincare ball coordinates satisfy c|b|^2 < 1: "
      f"max = {float(np.max(curv.c * np.sum(ball.coords**2, axis=1))):.6f}")
lifted = poincare_to_lorentz(ball, curv)
print(f"ball -> hyperboloid round trip error: "
      f"{float(np.max(np.abs(lifted.space - x.space))):.2e}")
