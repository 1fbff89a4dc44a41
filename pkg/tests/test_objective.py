"""Loss values against scalar oracles; gradients against finite differences."""

import numpy as np
import pytest

from hyperscene import autodiff as ad
from hyperscene import objective as obj
from hyperscene.entailment import ConeParams
from hyperscene.errors import ConfigError, DomainError
from hyperscene.manifold import Curvature

from conftest import random_tangents


def equidistant_batch():
    # positive and negative mirror images of each other: d+ = d-
    a = np.array([[0.3, 0.0, 0.0]])
    pos = np.array([[0.0, 0.3, 0.0]])
    neg = np.array([[0.0, -0.3, 0.0]])
    return obj.ContrastiveBatch(anchors=a, positives=pos, negatives=neg)


class TestInfoNCEValues:
    def test_symmetric_two_way_softmax_is_ln2(self):
        ds = obj.info_nce(equidistant_batch(), Curvature(1.0), 1.0)
        assert ds.value == pytest.approx(0.6931471805599453, abs=1e-12)

    def test_dominant_positive_vanishes(self):
        d_pos = ad.Tensor(np.zeros(3))
        d_neg = ad.Tensor(np.full((3, 4), 50.0))
        v = float(ad.value_of(obj.info_nce_from_distances(d_pos, d_neg, 0.1)))
        assert 0.0 <= v <= 1e-10

    def test_scalar_arithmetic_example(self):
        d_pos = ad.Tensor(np.array([1.0]))
        d_neg = ad.Tensor(np.array([[2.0]]))
        v = float(ad.value_of(obj.info_nce_from_distances(d_pos, d_neg, 1.0)))
        assert v == pytest.approx(0.3132616875182228, abs=1e-12)

    def test_shift_invariance(self, rng):
        d_pos = ad.Tensor(rng.uniform(0, 3, size=6))
        d_neg = ad.Tensor(rng.uniform(0, 3, size=(6, 8)))
        base = float(ad.value_of(obj.info_nce_from_distances(d_pos, d_neg, 0.1)))
        shifted = float(
            ad.value_of(obj.info_nce_from_distances(d_pos + 13.7, d_neg + 13.7, 0.1))
        )
        assert abs(base - shifted) <= 1e-10

    def test_nonnegative_with_negatives_present(self, rng):
        curv = Curvature(80.0)
        for _ in range(20):
            batch = obj.ContrastiveBatch(
                anchors=random_tangents(rng, 4, 3, curv, hi=0.5),
                positives=random_tangents(rng, 4, 3, curv, hi=0.5),
                negatives=random_tangents(rng, 6, 3, curv, hi=0.5),
            )
            assert obj.info_nce(batch, curv, 0.1).value >= -1e-12

    def test_temperature_limit_directions(self):
        # positive margin m > 0: loss -> 0 as tau -> 0; negative margin:
        # loss ~ |m| / tau
        for taus, d_pos, d_neg in ((None, 1.0, 2.0), (None, 2.0, 1.0)):
            values = []
            for tau in (1.0, 0.1, 0.01):
                v = float(
                    ad.value_of(
                        obj.info_nce_from_distances(
                            ad.Tensor(np.array([d_pos])),
                            ad.Tensor(np.array([[d_neg]])),
                            tau,
                        )
                    )
                )
                values.append(v)
            if d_neg > d_pos:
                assert values[0] > values[1] > values[2]
                assert values[2] <= 1e-10
            else:
                assert values[2] == pytest.approx((d_pos - d_neg) / 0.01, rel=1e-6)

    def test_empty_batch_rejected(self):
        with pytest.raises(ConfigError):
            obj.ContrastiveBatch(
                anchors=np.zeros((0, 3)),
                positives=np.zeros((0, 3)),
                negatives=np.zeros((1, 3)),
            )

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ConfigError):
            obj.info_nce(equidistant_batch(), Curvature(1.0), 0.0)

    def test_missing_negatives_rejected(self):
        with pytest.raises(ConfigError):
            obj.ContrastiveBatch(
                anchors=np.ones((2, 3)),
                positives=np.ones((2, 3)),
                negatives=np.ones((1, 3)),
                negative_mask=np.array([[True], [False]]),
            )

    def test_from_lists_ragged_negatives(self):
        batch = obj.ContrastiveBatch.from_lists(
            anchors=[np.zeros(2), np.ones(2)],
            positives=[np.zeros(2), np.ones(2)],
            negatives=[[np.ones(2)], [np.zeros(2), 2 * np.ones(2)]],
        )
        assert batch.negatives.shape == (3, 2)
        assert batch.negative_mask.sum() == 3


class TestEntailmentBatch:
    def test_all_inside_cones_is_zero(self):
        curv = Curvature(1.0)
        pairs = []
        for k in range(4):
            direction = np.array([np.cos(k), np.sin(k)])
            pairs.append((1.0 * direction, 2.5 * direction))
        ds = obj.entailment_batch_loss(pairs, curv, ConeParams())
        assert ds.value == 0.0

    def test_single_pair_matches_scalar_path(self):
        from hyperscene import entailment as ent
        from hyperscene import manifold as mf

        curv = Curvature(1.0)
        place = np.array([0.9, 0.0])
        thing = np.array([-1.4, 0.7])
        ds = obj.entailment_batch_loss([(place, thing)], curv, ConeParams())
        q = mf.exp_map_origin(mf.TangentAtOrigin(place), curv)
        p = mf.exp_map_origin(mf.TangentAtOrigin(thing), curv)
        scalar = float(ent.entailment_loss(p, q, curv, ConeParams()))
        assert ds.value == pytest.approx(scalar, abs=1e-12)

    def test_duplication_preserves_mean(self, rng):
        curv = Curvature(80.0)
        pairs = [
            (p, o)
            for p, o in zip(
                random_tangents(rng, 5, 3, curv, lo=0.1, hi=0.5),
                random_tangents(rng, 5, 3, curv, lo=0.1, hi=0.5),
            )
        ]
        a = obj.entailment_batch_loss(pairs, curv, ConeParams())
        b = obj.entailment_batch_loss(pairs + pairs, curv, ConeParams())
        assert a.value == pytest.approx(b.value, abs=1e-12)

    def test_degenerate_pairs_skipped_and_counted(self, rng):
        curv = Curvature(1.0)
        good = [(np.array([1.0, 0.0]), np.array([-1.0, 0.5]))]
        degenerate = [(np.zeros(2), np.array([0.5, 0.5]))]
        ds = obj.entailment_batch_loss(good + degenerate, curv, ConeParams())
        assert ds.components["pairs_used"] == 1
        assert ds.components["pairs_skipped"] == 1

    def test_all_degenerate_rejected(self):
        curv = Curvature(1.0)
        with pytest.raises(DomainError):
            obj.entailment_batch_loss(
                [(np.zeros(2), np.ones(2))], curv, ConeParams()
            )


class TestTotalLoss:
    def make_parts(self, rng, curv):
        place = obj.ContrastiveBatch(
            anchors=random_tangents(rng, 4, 3, curv, hi=0.4),
            positives=random_tangents(rng, 4, 3, curv, hi=0.4),
            negatives=random_tangents(rng, 5, 3, curv, hi=0.4),
        )
        thing = obj.ContrastiveBatch(
            anchors=random_tangents(rng, 4, 3, curv, hi=0.4),
            positives=random_tangents(rng, 4, 3, curv, hi=0.4),
            negatives=random_tangents(rng, 5, 3, curv, hi=0.4),
            kind="object",
        )
        pairs = list(
            zip(
                random_tangents(rng, 6, 3, curv, lo=0.1, hi=0.4),
                random_tangents(rng, 6, 3, curv, lo=0.1, hi=0.4),
            )
        )
        return place, thing, pairs

    def test_lambda_zero_is_sum_of_infonce(self, rng):
        curv = Curvature(80.0)
        place, thing, pairs = self.make_parts(rng, curv)
        weights = obj.LossWeights(lambda_ent=0.0)
        total = obj.total_loss(place, thing, pairs, curv, weights, ConeParams())
        l_p = obj.info_nce(place, curv, weights.tau_place)
        l_o = obj.info_nce(thing, curv, weights.tau_object)
        assert total.value == pytest.approx(l_p.value + l_o.value, abs=1e-12)

    def test_component_recomputation_matches(self, rng):
        curv = Curvature(80.0)
        place, thing, pairs = self.make_parts(rng, curv)
        weights = obj.LossWeights()
        total = obj.total_loss(place, thing, pairs, curv, weights, ConeParams())
        recomputed = (
            total.components["place"]
            + total.components["object"]
            + weights.lambda_ent * total.components["entailment"]
        )
        assert total.value == pytest.approx(recomputed, abs=1e-12)

    def test_frozen_arithmetic_example(self):
        # L_pr = L_obj = ln 2, L_ent = 0.1, lambda = 20 -> 2 ln 2 + 2
        assert 2 * np.log(2.0) + 20 * 0.1 == pytest.approx(
            3.3862943611198906, abs=1e-12
        )

    def test_affine_in_lambda(self, rng):
        curv = Curvature(80.0)
        place, thing, pairs = self.make_parts(rng, curv)
        values = {}
        ent_val = None
        for lam in (0.0, 1.0, 20.0):
            ds = obj.total_loss(
                place, thing, pairs, curv, obj.LossWeights(lambda_ent=lam), ConeParams()
            )
            values[lam] = ds.value
            if lam > 0:
                ent_val = ds.components["entailment"]
        slope_01 = values[1.0] - values[0.0]
        slope_rest = (values[20.0] - values[1.0]) / 19.0
        assert slope_01 == pytest.approx(slope_rest, abs=1e-10)
        assert slope_01 == pytest.approx(ent_val, abs=1e-10)

    def test_partials_are_component_sums(self, rng):
        curv = Curvature(80.0, learnable=True)
        place, thing, pairs = self.make_parts(rng, curv)
        weights = obj.LossWeights()
        total = obj.total_loss(place, thing, pairs, curv, weights, ConeParams())
        l_p = obj.info_nce(place, curv, weights.tau_place)
        l_e = obj.entailment_batch_loss(pairs, curv, ConeParams())
        assert np.allclose(
            total.partials["place_anchors"], l_p.partials["anchors"], atol=1e-12
        )
        assert np.allclose(
            total.partials["pair_places"],
            weights.lambda_ent * l_e.partials["places"],
            atol=1e-12,
        )


def away_from_boundaries(rng, curv, params=ConeParams(), margin=1e-3):
    """Sample entailment pairs with the hinge clearly one-sided."""
    from hyperscene import entailment as ent
    from hyperscene import manifold as mf

    while True:
        places = random_tangents(rng, 4, 3, curv, lo=0.15, hi=0.5)
        objects = random_tangents(rng, 4, 3, curv, lo=0.15, hi=0.5)
        q = mf.exp_map_origin(mf.TangentAtOrigin(places), curv)
        p = mf.exp_map_origin(mf.TangentAtOrigin(objects), curv)
        phi = ent.exterior_angle(p, q, curv)
        omega = ent.half_aperture(q, curv, params)
        if np.all(np.abs(phi - params.eta * omega) > margin) and np.all(
            np.abs(phi - np.pi) > margin
        ):
            return places, objects


class TestCheckGradients:
    def test_quadratic_is_machine_exact(self, rng):
        def quad(params):
            x = ad.Tensor(params["x"])
            loss = (x * x).sum() * 0.5
            loss.backward()
            return obj.DifferentiableScalar(
                value=float(loss.value), partials={"x": x.grad}
            )

        report = obj.check_gradients(quad, {"x": rng.normal(size=6)})
        assert report.max_rel_err <= 1e-9

    @pytest.mark.parametrize("c", [1.0, 80.0])
    def test_info_nce_gradients(self, rng, c):
        curv = Curvature(c, learnable=True)

        def loss_fn(params):
            batch = obj.ContrastiveBatch(
                anchors=params["anchors"],
                positives=params["positives"],
                negatives=params["negatives"],
            )
            live = Curvature.from_raw(float(params["curvature"]), learnable=True)
            return obj.info_nce(batch, live, 0.1)

        params = {
            "anchors": random_tangents(rng, 4, 3, curv, hi=0.4),
            "positives": random_tangents(rng, 4, 3, curv, hi=0.4),
            "negatives": random_tangents(rng, 6, 3, curv, hi=0.4),
            "curvature": np.float64(curv.raw),
        }
        report = obj.check_gradients(loss_fn, params)
        assert not report.failures
        assert report.max_rel_err <= 1e-4

    @pytest.mark.parametrize("c", [1.0, 80.0])
    def test_entailment_gradients_away_from_hinge(self, rng, c):
        curv = Curvature(c, learnable=True)
        places, objects = away_from_boundaries(rng, curv)

        def loss_fn(params):
            live = Curvature.from_raw(float(params["curvature"]), learnable=True)
            return obj.entailment_batch_loss(
                list(zip(params["places"], params["objects"])), live, ConeParams()
            )

        params = {
            "places": places,
            "objects": objects,
            "curvature": np.float64(curv.raw),
        }
        report = obj.check_gradients(loss_fn, params)
        assert not report.failures
        assert report.max_rel_err <= 1e-4

    def test_euclidean_ablation_gradients(self, rng):
        curv = Curvature(1.0)

        def loss_fn(params):
            batch = obj.ContrastiveBatch(
                anchors=params["anchors"],
                positives=params["positives"],
                negatives=params["negatives"],
            )
            return obj.info_nce(batch, curv, 0.5, squared_euclidean=True)

        params = {
            "anchors": rng.normal(size=(3, 4)),
            "positives": rng.normal(size=(3, 4)),
            "negatives": rng.normal(size=(5, 4)),
        }
        report = obj.check_gradients(loss_fn, params)
        assert report.max_rel_err <= 1e-4

    def test_nonfinite_gradient_reported_by_name(self):
        def broken(params):
            return obj.DifferentiableScalar(
                value=1.0, partials={"x": np.array([np.nan])}
            )

        report = obj.check_gradients(broken, {"x": np.zeros(1)})
        assert report.failures and "x" in report.failures[0]
        assert not report.ok
