import numpy as np
import pytest

from hyperscene.manifold import Curvature, LorentzPoint, TangentAtOrigin, exp_map_origin


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_tangents(rng, n, dim, curv, lo=0.0, hi=1.0):
    """Random tangents with norms in [lo, hi] * r_max for the curvature."""
    r = curv.tangent_radius()
    v = rng.normal(size=(n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.uniform(lo * r, hi * r, size=(n, 1))


def random_points(rng, n, dim, curv, lo=0.05, hi=0.9) -> LorentzPoint:
    return exp_map_origin(
        TangentAtOrigin(random_tangents(rng, n, dim, curv, lo, hi)), curv
    )
