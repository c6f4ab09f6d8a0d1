import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_rng, random_image
from scbench.errors import ValidationError
from scbench.scorers import (
    SyntheticSpec,
    linear_ground_truth,
    linear_logit_scorer,
    linear_softmax_scorer,
    region_indicator,
    region_mean_scorer,
)


def hand_softmax_row(logits):
    # independent reimplementation: plain math.exp over a python list
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


class TestLinearSoftmax:
    def test_all_zero_weights_give_uniform(self):
        spec = SyntheticSpec(kind="linear_softmax", weights=np.zeros((4, 3, 3)))
        scorer = linear_softmax_scorer(spec)
        rows = scorer.score(random_image(make_rng(0), 1, 3, 3)[None])
        np.testing.assert_allclose(rows, 0.25, atol=1e-12)

    def test_single_pixel_weight_separates_logits_by_one(self):
        weights = np.zeros((3, 2, 2))
        weights[1, 0, 0] = 1.0
        spec = SyntheticSpec(kind="linear_softmax", weights=weights)
        image = np.zeros((1, 2, 2), dtype=np.float32)
        image[0, 0, 0] = 1.0
        logit_rows = linear_logit_scorer(spec).score(image[None])
        assert logit_rows[0, 1] - logit_rows[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert logit_rows[0, 1] - logit_rows[0, 2] == pytest.approx(1.0, abs=1e-12)

    def test_matches_hand_rolled_softmax(self):
        rng = make_rng(5)
        weights = rng.normal(size=(5, 4, 4))
        spec = SyntheticSpec(kind="linear_softmax", weights=weights)
        scorer = linear_softmax_scorer(spec)
        image = random_image(rng, 1, 4, 4)
        row = scorer.score_one(image)
        logits = [
            float(sum(weights[c, y, x] * float(image[0, y, x]) for y in range(4) for x in range(4)))
            for c in range(5)
        ]
        np.testing.assert_allclose(row, hand_softmax_row(logits), atol=1e-6)

    def test_shift_invariance(self):
        # adding the same weight map to every class shifts all logits of an
        # image by one constant, which softmax must ignore
        rng = make_rng(6)
        weights = rng.normal(size=(3, 3, 3))
        bump = rng.normal(size=(3, 3))
        image = random_image(rng, 1, 3, 3)
        base = linear_softmax_scorer(
            SyntheticSpec(kind="linear_softmax", weights=weights)
        ).score_one(image)
        shifted = linear_softmax_scorer(
            SyntheticSpec(kind="linear_softmax", weights=weights + bump[None, :, :])
        ).score_one(image)
        np.testing.assert_allclose(base, shifted, atol=1e-6)

    def test_channel_mean_intensity(self):
        weights = np.ones((1, 2, 2))
        spec = SyntheticSpec(kind="linear_softmax", weights=weights, channels=3)
        scorer = linear_logit_scorer(spec)
        image = np.zeros((3, 2, 2), dtype=np.float32)
        image[0] = 0.9  # one bright channel -> intensity 0.3 per pixel
        assert scorer.score_one(image)[0] == pytest.approx(0.3 * 4, abs=1e-6)

    def test_ground_truth_importance(self):
        rng = make_rng(7)
        weights = rng.normal(size=(2, 3, 3))
        image = random_image(rng, 1, 3, 3)
        gt = linear_ground_truth(
            SyntheticSpec(kind="linear_softmax", weights=weights), image, 1
        )
        np.testing.assert_allclose(gt, weights[1] * image[0].astype(np.float64), atol=1e-12)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValidationError):
            linear_softmax_scorer(SyntheticSpec(kind="linear_softmax", weights=np.ones((3, 3))))
        with pytest.raises(ValidationError):
            linear_softmax_scorer(
                SyntheticSpec(kind="linear_softmax", weights=np.full((1, 2, 2), np.nan))
            )
        with pytest.raises(ValidationError):
            linear_softmax_scorer(SyntheticSpec(kind="region_mean", weights=np.ones((1, 2, 2))))

    def test_rejects_mismatched_batch_shape(self):
        spec = SyntheticSpec(kind="linear_softmax", weights=np.ones((2, 3, 3)))
        scorer = linear_softmax_scorer(spec)
        with pytest.raises(ValidationError):
            scorer.score(np.zeros((1, 1, 4, 4), dtype=np.float32))


class TestRegionMean:
    def test_all_ones_image_gives_equal_scores(self):
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (2, 2, 4, 4)))
        scorer = region_mean_scorer(spec, 4, 4)
        row = scorer.score_one(np.ones((1, 4, 4), dtype=np.float32))
        np.testing.assert_allclose(row, 0.5, atol=1e-12)

    def test_ones_only_inside_region_zero(self):
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (2, 2, 4, 4)))
        scorer = region_mean_scorer(spec, 4, 4)
        image = np.zeros((1, 4, 4), dtype=np.float32)
        image[0, :2, :2] = 1.0
        row = scorer.score_one(image)
        assert row[0] == pytest.approx(1.0, abs=1e-12)
        assert row[1] == pytest.approx(0.0, abs=1e-12)

    def test_half_filled_region_is_proportional(self):
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (2, 2, 4, 4)))
        scorer = region_mean_scorer(spec, 4, 4)
        image = np.zeros((1, 4, 4), dtype=np.float32)
        image[0, 0, :2] = 1.0  # half of region 0
        image[0, 2:, 2:] = 1.0  # all of region 1
        row = scorer.score_one(image)
        # means are 0.5 and 1.0 -> probabilities 1/3 and 2/3
        np.testing.assert_allclose(row, [1 / 3, 2 / 3], atol=1e-12)

    def test_all_zero_image_gives_uniform(self):
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (2, 2, 4, 4)))
        scorer = region_mean_scorer(spec, 4, 4)
        row = scorer.score_one(np.zeros((1, 4, 4), dtype=np.float32))
        np.testing.assert_allclose(row, 0.5, atol=1e-12)

    def test_degenerate_region_rejected(self):
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 0, 2),))
        with pytest.raises(ValidationError):
            region_mean_scorer(spec, 4, 4)
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 5),))
        with pytest.raises(ValidationError):
            region_mean_scorer(spec, 4, 4)

    def test_indicator_map(self):
        spec = SyntheticSpec(kind="region_mean", regions=((1, 1, 3, 3),))
        ind = region_indicator(spec, 4, 4, 0)
        assert ind.sum() == 4.0
        assert ind[1, 1] == 1.0 and ind[0, 0] == 0.0


class TestScorerInvariants:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_probability_rows_are_distributions(self, seed):
        rng = make_rng(seed)
        weights = rng.normal(size=(4, 3, 3)) * 3
        batch = rng.random((5, 1, 3, 3)).astype(np.float32)
        for scorer in (
            linear_softmax_scorer(SyntheticSpec(kind="linear_softmax", weights=weights)),
            region_mean_scorer(
                SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (1, 1, 3, 3))), 3, 3
            ),
        ):
            rows = scorer.score(batch)
            assert rows.min() >= 0.0
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-5)

    def test_batch_invariance(self):
        rng = make_rng(9)
        weights = rng.normal(size=(3, 4, 4))
        scorer = linear_softmax_scorer(SyntheticSpec(kind="linear_softmax", weights=weights))
        batch = rng.random((6, 1, 4, 4)).astype(np.float32)
        whole = scorer.score(batch)
        single = np.stack([scorer.score_one(img) for img in batch])
        np.testing.assert_allclose(whole, single, atol=1e-6)

    def test_purity_same_batch_same_output(self):
        spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (1, 1, 3, 3)))
        scorer = region_mean_scorer(spec, 3, 3)
        batch = random_image(make_rng(2), 1, 3, 3)[None]
        assert np.array_equal(scorer.score(batch), scorer.score(batch))
