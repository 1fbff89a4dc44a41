"""Lorentz-model primitives: frozen examples, invariants, round trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperscene import manifold as mf
from hyperscene.errors import (
    ConfigError,
    DimensionMismatchError,
    DomainError,
    ManifoldConstraintError,
)

from conftest import random_points, random_tangents

CURVATURES = [0.01, 1.0, 80.0, 1000.0]


class TestLorentzInner:
    def test_origin_self_inner_is_minus_one(self):
        o = mf.origin(2, mf.Curvature(1.0)).as_vector()
        assert mf.lorentz_inner(o, o) == pytest.approx(-1.0, abs=1e-15)

    def test_mixed_example(self):
        x = np.array([1.0, 0.0, np.sqrt(2.0)])
        y = np.array([0.0, 1.0, np.sqrt(2.0)])
        assert mf.lorentz_inner(x, y) == pytest.approx(-2.0, abs=1e-12)

    def test_on_manifold_self_inner(self, rng):
        curv = mf.Curvature(80.0)
        x = random_points(rng, 50, 6, curv)
        inner = mf.lorentz_inner(x.as_vector(), x.as_vector())
        assert np.allclose(inner, -1.0 / 80.0, atol=1e-9)

    def test_bilinear_symmetric(self, rng):
        x = rng.normal(size=(10, 5))
        y = rng.normal(size=(10, 5))
        z = rng.normal(size=(10, 5))
        assert np.allclose(mf.lorentz_inner(x, y), mf.lorentz_inner(y, x))
        assert np.allclose(
            mf.lorentz_inner(x + 2.0 * z, y),
            mf.lorentz_inner(x, y) + 2.0 * mf.lorentz_inner(z, y),
        )

    def test_dimension_mismatch_names_both(self):
        with pytest.raises(DimensionMismatchError) as err:
            mf.lorentz_inner(np.zeros(3), np.zeros(4))
        assert err.value.dim_a == 3 and err.value.dim_b == 4

    def test_rejects_dimension_below_two(self):
        with pytest.raises(DimensionMismatchError):
            mf.lorentz_inner(np.zeros(1), np.zeros(1))


class TestDistance:
    def test_identical_points_below_floor(self):
        curv = mf.Curvature(1.0)
        o = mf.origin(2, curv)
        assert float(mf.lorentz_distance(o, o, curv)) < 5e-4

    def test_antipodal_tangents_additive(self):
        # geodesic through the origin: d(exp(v), exp(-v)) = 2 |v|
        curv = mf.Curvature(1.0)
        v = np.array([0.6, 0.8])
        x = mf.exp_map_origin(mf.TangentAtOrigin(v), curv)
        y = mf.exp_map_origin(mf.TangentAtOrigin(-v), curv)
        assert float(mf.lorentz_distance(x, y, curv)) == pytest.approx(2.0, abs=1e-6)

    def test_symmetry_exact(self, rng):
        for c in (1.0, 80.0):
            curv = mf.Curvature(c)
            x = random_points(rng, 1000, 5, curv)
            y = random_points(rng, 1000, 5, curv)
            d_xy = mf.lorentz_distance(x, y, curv)
            d_yx = mf.lorentz_distance(y, x, curv)
            assert np.max(np.abs(d_xy - d_yx)) <= 1e-12

    def test_triangle_inequality(self, rng):
        for c in (1.0, 80.0):
            curv = mf.Curvature(c)
            x = random_points(rng, 1000, 4, curv)
            y = random_points(rng, 1000, 4, curv)
            z = random_points(rng, 1000, 4, curv)
            d_xz = mf.lorentz_distance(x, z, curv)
            d_xy = mf.lorentz_distance(x, y, curv)
            d_yz = mf.lorentz_distance(y, z, curv)
            assert np.all(d_xz <= d_xy + d_yz + 1e-7)

    def test_ray_additivity(self, rng):
        for c in (1.0, 80.0):
            curv = mf.Curvature(c)
            r = curv.tangent_radius()
            direction = rng.normal(size=4)
            direction /= np.linalg.norm(direction)
            a = rng.uniform(0.01 * r, r, size=500)
            b = rng.uniform(0.01 * r, r, size=500)
            x = mf.exp_map_origin(mf.TangentAtOrigin(a[:, None] * direction), curv)
            y = mf.exp_map_origin(mf.TangentAtOrigin(b[:, None] * direction), curv)
            d = mf.lorentz_distance(x, y, curv)
            keep = np.abs(a - b) > 1e-3  # below the clamp floor additivity is moot
            assert np.max(np.abs(d[keep] - np.abs(a - b)[keep])) <= 1e-6

    def test_rejects_off_manifold(self):
        curv = mf.Curvature(1.0)
        bad = mf.LorentzPoint(space=np.array([1.0, 0.0]), time=np.array(1.0))
        with pytest.raises(ManifoldConstraintError):
            mf.lorentz_distance(bad, mf.origin(2, curv), curv)


class TestClampTangentNorm:
    def test_zero_passes_through(self):
        out = mf.clamp_tangent_norm(mf.TangentAtOrigin(np.zeros(3)), 1.0)
        assert np.array_equal(out.space, np.zeros(3))

    def test_below_threshold_unchanged(self):
        v = np.array([0.3, 0.4])
        out = mf.clamp_tangent_norm(mf.TangentAtOrigin(v), 1.0)
        assert np.array_equal(out.space, v)

    def test_rescales_direction_preserved(self):
        out = mf.clamp_tangent_norm(mf.TangentAtOrigin(np.array([3.0, 4.0])), 1.0)
        assert np.allclose(out.space, [0.6, 0.8], atol=1e-15)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ConfigError):
            mf.clamp_tangent_norm(mf.TangentAtOrigin(np.ones(2)), 0.0)


class TestExpMap:
    def test_zero_tangent_gives_origin(self):
        curv = mf.Curvature(1.0)
        x = mf.exp_map_origin(mf.TangentAtOrigin(np.zeros(3)), curv)
        assert np.allclose(x.space, 0.0)
        assert float(x.time) == pytest.approx(1.0, abs=1e-15)

    def test_unit_tangent_frozen_values(self):
        curv = mf.Curvature(1.0)
        x = mf.exp_map_origin(mf.TangentAtOrigin(np.array([1.0, 0.0])), curv)
        assert x.space[0] == pytest.approx(1.1752011936438014, abs=1e-12)
        assert x.space[1] == 0.0
        assert float(x.time) == pytest.approx(1.5430806348152437, abs=1e-12)

    def test_constraint_by_construction(self):
        curv = mf.Curvature(80.0)
        x = mf.exp_map_origin(mf.TangentAtOrigin(np.array([0.1, 0.0])), curv)
        assert float(mf.constraint_residual(x, curv)) <= 1e-9

    def test_rejects_nonfinite(self):
        with pytest.raises(DomainError):
            mf.exp_map_origin(mf.TangentAtOrigin(np.array([np.nan, 0.0])), mf.Curvature(1.0))

    def test_overflow_safety_at_extremes(self):
        curv = mf.Curvature(mf.CURVATURE_MAX)
        r = curv.tangent_radius()
        x = mf.exp_map_origin(mf.TangentAtOrigin(np.array([r, 0.0])), curv)
        assert np.all(np.isfinite(x.space)) and np.isfinite(x.time)


class TestLogMap:
    def test_log_of_origin_is_zero(self):
        curv = mf.Curvature(80.0)
        v = mf.log_map_origin(mf.origin(3, curv), curv)
        assert np.allclose(v.space, 0.0)

    @pytest.mark.parametrize("c", CURVATURES)
    def test_round_trip_both_ways(self, rng, c):
        curv = mf.Curvature(c)
        v = random_tangents(rng, 1000, 8, curv)
        x = mf.exp_map_origin(mf.TangentAtOrigin(v), curv)
        assert float(np.max(mf.constraint_residual(x, curv))) <= 1e-9
        back = mf.log_map_origin(x, curv)
        err = np.linalg.norm(back.space - v, axis=1)
        assert np.all(err <= 1e-6 * np.maximum(1.0, np.linalg.norm(v, axis=1)))
        again = mf.exp_map_origin(back, curv)
        rel = np.abs(again.space - x.space) / np.maximum(1.0, np.abs(x.space))
        assert np.max(rel) <= 1e-6

    def test_magnitude_equals_distance_to_origin(self, rng):
        curv = mf.Curvature(80.0)
        x = random_points(rng, 200, 5, curv)
        v = mf.log_map_origin(x, curv)
        o = mf.origin(5, curv)
        o_b = mf.LorentzPoint(
            space=np.zeros_like(x.space), time=np.full(x.space.shape[0], float(o.time))
        )
        d = mf.lorentz_distance(o_b, x, curv)
        assert np.allclose(np.linalg.norm(v.space, axis=1), d, atol=5e-4 / curv.sqrt_c)


class TestProjectTangent:
    def test_tangent_vector_unchanged(self, rng):
        curv = mf.Curvature(1.0)
        z = random_points(rng, 1, 4, curv)
        u = rng.normal(size=5)
        p = mf.project_tangent(u, z, curv)
        p2 = mf.project_tangent(p, z, curv)
        assert np.allclose(p, p2, atol=1e-12)

    def test_projects_point_itself_to_zero_inner(self, rng):
        curv = mf.Curvature(80.0)
        z = random_points(rng, 1, 4, curv, hi=0.3)
        p = mf.project_tangent(z.as_vector(), z, curv)
        assert abs(float(mf.lorentz_inner(p, z.as_vector())[()])) <= 1e-9

    def test_output_is_lorentz_orthogonal(self, rng):
        # at moderate depth the absolute 1e-9 tangency bound holds directly
        curv = mf.Curvature(1.0)
        z = random_points(rng, 100, 6, curv, hi=0.3)
        u = rng.normal(size=(100, 7))
        p = mf.project_tangent(u, z, curv)
        inner = mf.lorentz_inner(p, z.as_vector())
        scale = np.linalg.norm(u, axis=1)
        assert np.all(np.abs(inner) <= 1e-9 * np.maximum(1.0, scale))

    def test_orthogonality_scales_with_depth(self, rng):
        # deep points blow up intermediate magnitudes; the residual stays at
        # rounding level relative to c * |<u,z>| * |z|^2
        curv = mf.Curvature(1.0)
        z = random_points(rng, 100, 6, curv, lo=0.5, hi=1.0)
        u = rng.normal(size=(100, 7))
        p = mf.project_tangent(u, z, curv)
        inner = np.abs(mf.lorentz_inner(p, z.as_vector()))
        magnitude = (
            np.abs(mf.lorentz_inner(u, z.as_vector()))
            * (np.abs(float(curv.c)) * (z.time**2))
        )
        assert np.all(inner <= 1e-12 * np.maximum(1.0, magnitude))


class TestPoincare:
    def test_zero_maps_to_origin(self):
        curv = mf.Curvature(1.0)
        x = mf.poincare_to_lorentz(mf.PoincarePoint(np.zeros(3)), curv)
        assert np.allclose(x.space, 0.0)
        assert float(x.time) == pytest.approx(1.0)

    def test_boundary_rejected(self):
        curv = mf.Curvature(1.0)
        with pytest.raises(DomainError):
            mf.poincare_to_lorentz(mf.PoincarePoint(np.array([1.0, 0.0])), curv)

    def test_origin_maps_to_zero(self):
        curv = mf.Curvature(80.0)
        b = mf.lorentz_to_poincare(mf.origin(3, curv), curv)
        assert np.allclose(b.coords, 0.0)

    @pytest.mark.parametrize("c", CURVATURES)
    def test_round_trip(self, rng, c):
        curv = mf.Curvature(c)
        x = random_points(rng, 1000, 5, curv)
        b = mf.lorentz_to_poincare(x, curv)
        assert np.all(c * np.sum(b.coords**2, axis=-1) < 1.0)
        x2 = mf.poincare_to_lorentz(b, curv)
        scale = np.maximum(1.0, np.abs(x.space))
        assert np.max(np.abs(x2.space - x.space) / scale) <= 1e-9
        assert np.max(np.abs(x2.time - x.time) / np.maximum(1.0, x.time)) <= 1e-9

    def test_ball_norm_increases_with_root_distance_on_ray(self):
        curv = mf.Curvature(1.0)
        direction = np.array([0.8, 0.6])
        radii = np.linspace(0.01, 5.0, 100)
        x = mf.exp_map_origin(mf.TangentAtOrigin(radii[:, None] * direction), curv)
        b = mf.lorentz_to_poincare(x, curv)
        norms = np.linalg.norm(b.coords, axis=1)
        assert np.all(np.diff(norms) > 0)


class TestCurvature:
    def test_rejects_out_of_range(self):
        with pytest.raises(ConfigError):
            mf.Curvature(0.0)
        with pytest.raises(ConfigError):
            mf.Curvature(1e9)

    def test_softplus_raw_round_trip(self):
        for c in (1e-3, 1.0, 80.0, 1e4):
            curv = mf.Curvature(c, learnable=True)
            back = mf.Curvature.from_raw(curv.raw)
            assert back.c == pytest.approx(c, rel=1e-9)

    def test_from_raw_clamps(self):
        assert mf.Curvature.from_raw(-1e6).c == mf.CURVATURE_MIN
        assert mf.Curvature.from_raw(1e6).c == mf.CURVATURE_MAX

    def test_tangent_radius_keeps_arguments_bounded(self):
        for c in (1e-3, 80.0, 1e4):
            curv = mf.Curvature(c)
            assert curv.sqrt_c * curv.tangent_radius() <= 10.0


@settings(max_examples=50, deadline=None)
@given(
    c=st.sampled_from(CURVATURES),
    seed=st.integers(min_value=0, max_value=2**31),
    scale=st.floats(min_value=1e-6, max_value=1.0),
)
def test_round_trip_property(c, seed, scale):
    curv = mf.Curvature(c)
    gen = np.random.default_rng(seed)
    v = gen.normal(size=4)
    norm = np.linalg.norm(v)
    if norm > 0:
        v = v / norm * scale * curv.tangent_radius()
    x = mf.exp_map_origin(mf.TangentAtOrigin(v), curv)
    back = mf.log_map_origin(x, curv)
    assert np.linalg.norm(back.space - v) <= 1e-6 * max(1.0, np.linalg.norm(v))
    assert float(mf.constraint_residual(x, curv)) <= 1e-9
