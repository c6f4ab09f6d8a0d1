import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_scorer, make_rng, random_image
from scbench.errors import ValidationError
from scbench.images import ImageTensor
from scbench.masks import MaskConfig
from scbench.metrics import (
    GameConfig,
    ProbabilityCurve,
    auc,
    deletion_curve,
    insertion_curve,
    rank_pixels,
    run_benchmark,
    write_curve_csv,
)
from scbench.saliency import SaliencyMap
from scbench.scorers import SyntheticSpec, region_indicator, region_mean_scorer


def make_map(scores, class_id=0, method="external"):
    return SaliencyMap(scores=np.asarray(scores, float), class_id=class_id, method=method)


def region_setup(h=16, w=16):
    spec = SyntheticSpec(
        kind="region_mean", regions=((2, 2, 6, 6), (10, 10, 14, 14))
    )
    return spec, region_mean_scorer(spec, h, w)


class TestGameConfig:
    def test_defaults(self):
        cfg = GameConfig()
        assert cfg.steps == 224
        assert cfg.deletion_baseline == "black"
        assert cfg.insertion_start == "blur"
        assert cfg.blur_sigma == 5.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            GameConfig(steps=0)
        with pytest.raises(ValidationError):
            GameConfig(deletion_baseline="gray")
        with pytest.raises(ValidationError):
            GameConfig(insertion_start="blur", blur_sigma=0.0)


class TestRankPixels:
    def test_all_equal_scores_rank_row_major(self):
        order = rank_pixels(make_map(np.zeros((3, 4))))
        np.testing.assert_array_equal(order, np.arange(12))

    def test_strictly_decreasing_scores_rank_row_major(self):
        h, w = 3, 4
        scores = -(np.arange(h * w).reshape(h, w)).astype(float)
        order = rank_pixels(make_map(scores))
        np.testing.assert_array_equal(order, np.arange(h * w))

    def test_permutation_sorts_scores_non_increasingly(self):
        rng = make_rng(0)
        scores = rng.normal(size=(7, 5))
        order = rank_pixels(make_map(scores))
        ranked = scores.ravel()[order]
        # independent check: a plain descending sort of the values
        np.testing.assert_array_equal(np.sort(scores.ravel())[::-1], ranked)
        assert sorted(order.tolist()) == list(range(35))

    def test_non_finite_score_names_the_coordinate(self):
        scores = np.zeros((3, 3))
        scores[1, 2] = np.inf
        smap = SaliencyMap.__new__(SaliencyMap)
        smap.scores = scores
        smap.class_id = 0
        smap.method = "external"
        smap.image_id = ""
        smap.config_digest = 0
        smap.degenerate_pixels = 0
        with pytest.raises(ValidationError) as err:
            rank_pixels(smap)
        assert "(1, 2)" in str(err.value)


class TestAuc:
    def test_constant_curve_is_exact(self):
        for c in (0.0, 1.0, 0.37, 0.625):
            curve = ProbabilityCurve(
                [0.0, 0.25, 0.5, 0.75, 1.0], [c] * 5, "deletion", 0
            )
            assert auc(curve) == c

    def test_triangle(self):
        assert auc(ProbabilityCurve([0.0, 1.0], [0.0, 1.0], "insertion", 0)) == 0.5

    def test_hand_trapezoid_sum(self):
        # (0,1),(0.5,1),(1,0): 0.5*1 + 0.5*(1+0)/2 = 0.75
        curve = ProbabilityCurve([0.0, 0.5, 1.0], [1.0, 1.0, 0.0], "deletion", 0)
        assert auc(curve) == 0.75
        # the 0.875 figure corresponds to the knee sitting at 0.75 instead
        curve = ProbabilityCurve([0.0, 0.75, 1.0], [1.0, 1.0, 0.0], "deletion", 0)
        assert auc(curve) == 0.875

    def test_too_few_points(self):
        curve = ProbabilityCurve.__new__(ProbabilityCurve)
        curve.fractions = np.array([0.0])
        curve.probabilities = np.array([1.0])
        curve.game = "deletion"
        curve.class_id = 0
        with pytest.raises(ValidationError):
            auc(curve)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 40))
    @settings(max_examples=200, deadline=None)
    def test_auc_stays_in_unit_interval(self, seed, n):
        rng = make_rng(seed)
        inner = np.sort(rng.random(n - 2)) if n > 2 else np.empty(0)
        fractions = np.unique(np.concatenate([[0.0], inner, [1.0]]))
        probabilities = rng.random(len(fractions))
        value = auc(ProbabilityCurve(fractions, probabilities, "insertion", 0))
        assert 0.0 <= value <= 1.0


class TestCurveValidation:
    def test_fractions_must_span_zero_to_one(self):
        with pytest.raises(ValidationError):
            ProbabilityCurve([0.1, 1.0], [0.5, 0.5], "deletion", 0)
        with pytest.raises(ValidationError):
            ProbabilityCurve([0.0, 0.9], [0.5, 0.5], "deletion", 0)

    def test_fractions_must_increase(self):
        with pytest.raises(ValidationError):
            ProbabilityCurve([0.0, 0.5, 0.5, 1.0], [1, 1, 1, 1], "deletion", 0)

    def test_csv_round_trip(self, tmp_path):
        curve = ProbabilityCurve([0.0, 0.5, 1.0], [0.123456789, 1.0, 0.0], "deletion", 0)
        path = tmp_path / "c.csv"
        write_curve_csv(curve, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "fraction,probability"
        assert lines[1] == "0,0.123456789"
        parsed = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
        for (f, p), (ef, ep) in zip(parsed, curve.points):
            assert f == pytest.approx(ef, abs=1e-9)
            assert p == pytest.approx(ep, abs=1e-8)


class TestGames:
    def test_constant_scorer_gives_flat_curves(self):
        scorer = constant_scorer(np.array([0.8, 0.2]), input_shape=(1, 4, 4))
        image = ImageTensor(data=random_image(make_rng(1), 1, 4, 4))
        smap = make_map(make_rng(2).normal(size=(4, 4)))
        cfg = GameConfig(steps=8, insertion_start="black")
        dele = deletion_curve(image, smap, scorer, 0, cfg)
        ins = insertion_curve(image, smap, scorer, 0, cfg)
        np.testing.assert_array_equal(dele.probabilities, np.full(9, 0.8))
        np.testing.assert_array_equal(ins.probabilities, np.full(9, 0.8))
        assert auc(dele) == pytest.approx(0.8)

    def test_flat_map_on_constant_scorer_is_flat(self):
        scorer = constant_scorer(np.array([0.6, 0.4]), input_shape=(1, 4, 4))
        image = ImageTensor(data=random_image(make_rng(3), 1, 4, 4))
        smap = make_map(np.zeros((4, 4)))
        cfg = GameConfig(steps=4, insertion_start="black")
        ins = insertion_curve(image, smap, scorer, 0, cfg)
        assert np.ptp(ins.probabilities) == 0.0

    def test_insertion_final_point_is_exact(self):
        _, scorer = region_setup()
        rng = make_rng(4)
        image = ImageTensor(data=random_image(rng, 1, 16, 16))
        smap = make_map(rng.normal(size=(16, 16)))
        cfg = GameConfig(steps=7, insertion_start="blur", blur_sigma=2.0)
        ins = insertion_curve(image, smap, scorer, 0, cfg)
        expected = scorer.score_one(image.data)[0]
        assert ins.probabilities[-1] == expected

    def test_deletion_final_point_is_baseline(self):
        _, scorer = region_setup()
        rng = make_rng(5)
        image = ImageTensor(data=random_image(rng, 1, 16, 16))
        smap = make_map(rng.normal(size=(16, 16)))
        for baseline in ("black", "channel_mean"):
            cfg = GameConfig(steps=5, deletion_baseline=baseline)
            dele = deletion_curve(image, smap, scorer, 0, cfg)
            if baseline == "black":
                target = np.zeros_like(image.data)
            else:
                means = image.data.mean(axis=(1, 2), keepdims=True, dtype=np.float64)
                target = np.broadcast_to(means.astype(np.float32), image.data.shape)
            expected = scorer.score_one(np.ascontiguousarray(target))[0]
            assert dele.probabilities[-1] == expected

    def test_deletion_reaches_minimum_before_region_exhausted(self):
        # deleting exactly the class region first: probability bottoms out by
        # fraction region_area/(H*W) + 1/steps
        spec, scorer = region_setup()
        image = ImageTensor(data=np.full((1, 16, 16), 0.7, dtype=np.float32))
        indicator = region_indicator(spec, 16, 16, 0)
        smap = make_map(indicator)
        steps = 32
        cfg = GameConfig(steps=steps)
        dele = deletion_curve(image, smap, scorer, 0, cfg)
        region_fraction = indicator.sum() / 256.0
        cutoff = region_fraction + 1.0 / steps
        min_prob = dele.probabilities.min()
        reached = dele.fractions[dele.probabilities == min_prob].min()
        assert reached <= cutoff

    def test_insertion_saturates_once_region_restored(self):
        # content lives only inside the class region, so once the indicator
        # map has restored it the probability is pinned at its maximum
        spec, scorer = region_setup()
        rng = make_rng(12)
        data = np.zeros((1, 16, 16), dtype=np.float32)
        data[0, 2:6, 2:6] = (rng.random((4, 4)) * 0.5 + 0.5).astype(np.float32)
        image = ImageTensor(data=data)
        indicator = region_indicator(spec, 16, 16, 0)
        smap = make_map(indicator)
        steps = 32
        cfg = GameConfig(steps=steps, insertion_start="black")
        ins = insertion_curve(image, smap, scorer, 0, cfg)
        region_fraction = indicator.sum() / 256.0
        after = ins.probabilities[ins.fractions >= region_fraction + 1.0 / steps]
        np.testing.assert_allclose(after, after[0], atol=1e-12)
        assert after[0] == ins.probabilities.max()
        assert after[0] == scorer.score_one(image.data)[0]
        assert ins.probabilities[0] < after[0]

    def test_rank_only_dependence(self):
        # any strictly increasing transform of the scores leaves both games
        # bit-identical
        _, scorer = region_setup()
        rng = make_rng(6)
        image = ImageTensor(data=random_image(rng, 1, 16, 16))
        scores = rng.normal(size=(16, 16))
        cfg = GameConfig(steps=9, insertion_start="blur", blur_sigma=1.5)
        base_ins = insertion_curve(image, make_map(scores), scorer, 0, cfg)
        base_del = deletion_curve(image, make_map(scores), scorer, 0, cfg)
        warped = make_map(np.exp(scores * 0.5) + 3.0)
        warp_ins = insertion_curve(image, warped, scorer, 0, cfg)
        warp_del = deletion_curve(image, warped, scorer, 0, cfg)
        assert np.array_equal(base_ins.probabilities, warp_ins.probabilities)
        assert np.array_equal(base_del.probabilities, warp_del.probabilities)
        assert auc(base_ins) == auc(warp_ins)
        assert auc(base_del) == auc(warp_del)

    def test_step_pixel_counts_cover_everything_once(self):
        scorer = constant_scorer(np.array([1.0]), input_shape=(1, 5, 5))
        image = ImageTensor(data=np.zeros((1, 5, 5), dtype=np.float32))
        smap = make_map(make_rng(7).normal(size=(5, 5)))
        for steps in (1, 3, 7, 25, 30):
            cfg = GameConfig(steps=steps, insertion_start="black")
            curve = insertion_curve(image, smap, scorer, 0, cfg)
            assert len(curve.fractions) == steps + 1
            assert curve.fractions[0] == 0.0 and curve.fractions[-1] == 1.0

    def test_shape_mismatch_rejected(self):
        _, scorer = region_setup()
        image = ImageTensor(data=random_image(make_rng(8), 1, 16, 16))
        smap = make_map(np.zeros((4, 4)))
        with pytest.raises(ValidationError):
            deletion_curve(image, smap, scorer, 0, GameConfig(steps=2))


class TestMonotoneSanity:
    def test_indicator_beats_random_maps(self):
        # the class region is bright against a dim background, so finding it
        # early matters for both games
        spec, scorer = region_setup()
        rng = make_rng(9)
        data = (rng.random((1, 16, 16)) * 0.1 + 0.05).astype(np.float32)
        data[0, 2:6, 2:6] = (rng.random((4, 4)) * 0.2 + 0.8).astype(np.float32)
        image = ImageTensor(data=data)
        indicator = make_map(region_indicator(spec, 16, 16, 0))
        cfg = GameConfig(steps=16, blur_sigma=2.0)
        ind_del = auc(deletion_curve(image, indicator, scorer, 0, cfg))
        ind_ins = auc(insertion_curve(image, indicator, scorer, 0, cfg))
        wins = 0
        for _ in range(10):
            rand_map = make_map(rng.normal(size=(16, 16)))
            r_del = auc(deletion_curve(image, rand_map, scorer, 0, cfg))
            r_ins = auc(insertion_curve(image, rand_map, scorer, 0, cfg))
            if ind_del <= r_del and ind_ins >= r_ins:
                wins += 1
        assert wins >= 9


def write_png(path, data):
    from scbench.images import save_image

    save_image(data, path)


class TestRunBenchmark:
    def build_dataset(self, tmp_path, n=3, with_maps=2):
        from scbench.images import scan_dataset
        from scbench.saliency import SaliencyMap, save_map

        rng = make_rng(11)
        for i in range(n):
            img = (rng.random((1, 16, 16)) * 0.6 + 0.2).astype(np.float32)
            write_png(tmp_path / f"img{i}.png", img)
            if i < with_maps:
                smap = SaliencyMap(
                    scores=rng.normal(size=(16, 16)),
                    class_id=0,
                    method="external",
                )
                save_map(smap, tmp_path / f"img{i}.smap")
        return scan_dataset(tmp_path)

    def test_report_rows_and_aggregates(self, tmp_path):
        _, scorer = region_setup()
        dataset = self.build_dataset(tmp_path)
        mask_cfg = MaskConfig(4, 4, 0.2, 80, 16, 16, seed=3)
        game_cfg = GameConfig(steps=8)
        report = run_benchmark(
            dataset, ["shape", "rise", "external"], scorer, mask_cfg, game_cfg
        )
        assert len(report.per_image) == 3 + 3 + 2
        assert len(report.exclusions) == 1
        assert report.exclusions[0]["image_id"] == "img2"
        for agg in report.aggregates:
            rows = [r for r in report.per_image if r.method == agg.method]
            assert agg.n_images == len(rows)
            mean_ins = sum(r.insertion_auc for r in rows) / len(rows)
            mean_del = sum(r.deletion_auc for r in rows) / len(rows)
            assert abs(agg.mean_insertion - mean_ins) <= 1e-9
            assert abs(agg.mean_deletion - mean_del) <= 1e-9

    def test_json_and_table_outputs(self, tmp_path):
        _, scorer = region_setup()
        dataset = self.build_dataset(tmp_path, n=2, with_maps=0)
        report = run_benchmark(
            dataset, ["shape"], scorer, MaskConfig(4, 4, 0.2, 40, 16, 16, seed=1),
            GameConfig(steps=4),
        )
        payload = report.to_dict()
        assert payload["mask_config"]["count"] == 40
        assert payload["game_config"]["steps"] == 4
        assert len(payload["per_image"]) == 2
        table = report.to_table()
        assert "Method" in table and "shape" in table
        import json

        json.loads(report.to_json())

    def test_rerun_is_identical(self, tmp_path):
        _, scorer = region_setup()
        dataset = self.build_dataset(tmp_path, n=2, with_maps=0)
        args = (dataset, ["shape", "rise"], scorer,
                MaskConfig(4, 4, 0.2, 60, 16, 16, seed=9), GameConfig(steps=6))
        assert run_benchmark(*args).to_json() == run_benchmark(*args).to_json()

    def test_fresh_masks_use_derived_seeds(self, tmp_path):
        _, scorer = region_setup()
        dataset = self.build_dataset(tmp_path, n=2, with_maps=0)
        mask_cfg = MaskConfig(4, 4, 0.2, 60, 16, 16, seed=9)
        shared = run_benchmark(dataset, ["shape"], scorer, mask_cfg, GameConfig(steps=6))
        fresh = run_benchmark(
            dataset, ["shape"], scorer, mask_cfg, GameConfig(steps=6), reuse_masks=False
        )
        assert shared.reuse_masks and not fresh.reuse_masks
        assert any(
            a.insertion_auc != b.insertion_auc
            for a, b in zip(shared.per_image, fresh.per_image)
        )

    def test_empty_dataset_rejected(self):
        from scbench.images import DatasetHandle

        _, scorer = region_setup()
        with pytest.raises(ValidationError):
            run_benchmark(
                DatasetHandle(entries=[]), ["shape"], scorer,
                MaskConfig(4, 4, 0.2, 10, 16, 16, seed=0), GameConfig(steps=2),
            )

    def test_unknown_method_rejected(self, tmp_path):
        _, scorer = region_setup()
        dataset = self.build_dataset(tmp_path, n=1, with_maps=0)
        with pytest.raises(ValidationError):
            run_benchmark(
                dataset, ["gradcam"], scorer,
                MaskConfig(4, 4, 0.2, 10, 16, 16, seed=0), GameConfig(steps=2),
            )
