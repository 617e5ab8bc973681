"""Depth rendering, masks, corruption, and the mask-agreement metric."""
import numpy as np
import pytest

from traypick.errors import ParameterError
from traypick.perception import (
    CorruptionParams,
    InstanceMaskSet,
    agreement,
    corrupt_masks,
    load_depth,
    load_masks,
    mask_iou,
    render_depth,
    render_masks,
    save_depth,
    save_masks,
)
from traypick.scenegen import SceneConfig, empty_scene, generate_scene, rasterize_stamp, drop_piece


def square_mask(shape, r0, c0, size):
    m = np.zeros(shape, dtype=bool)
    m[r0 : r0 + size, c0 : c0 + size] = True
    return m


class TestRenderDepth:
    def test_identity_when_noise_free(self):
        scene = generate_scene(SceneConfig(), 1)
        depth = render_depth(scene)
        np.testing.assert_array_equal(depth.heights, scene.heightmap)

    def test_quantization_rounds_half_down(self):
        scene = empty_scene(resolution=1.0, tray_dims=(10.0, 10.0, 50.0))
        scene.heightmap[:] = 12.4
        assert render_depth(scene, quant=1.0).heights[0, 0] == pytest.approx(12.0)
        scene.heightmap[:] = 12.5
        assert render_depth(scene, quant=1.0).heights[0, 0] == pytest.approx(12.0)
        scene.heightmap[:] = 12.6
        assert render_depth(scene, quant=1.0).heights[0, 0] == pytest.approx(13.0)

    def test_noise_mean_within_standard_error(self):
        scene = empty_scene(resolution=1.0, tray_dims=(100.0, 100.0, 50.0))
        scene.heightmap[:] = 30.0
        depth = render_depth(scene, sigma=0.5, rng=np.random.default_rng(0))
        assert depth.heights.mean() == pytest.approx(30.0, abs=0.02)

    def test_noise_requires_rng(self):
        scene = empty_scene(resolution=1.0, tray_dims=(10.0, 10.0, 50.0))
        with pytest.raises(ParameterError):
            render_depth(scene, sigma=0.5)

    def test_clamped_at_zero(self):
        scene = empty_scene(resolution=1.0, tray_dims=(50.0, 50.0, 50.0))
        depth = render_depth(scene, sigma=2.0, rng=np.random.default_rng(1))
        assert (depth.heights >= 0).all()

    def test_negative_params_rejected(self):
        scene = empty_scene(resolution=1.0, tray_dims=(10.0, 10.0, 50.0))
        with pytest.raises(ParameterError):
            render_depth(scene, sigma=-1.0)


class TestRenderMasks:
    def test_single_piece_mask_equals_footprint(self):
        scene = empty_scene(resolution=1.0, tray_dims=(100.0, 100.0, 50.0))
        stamp = rasterize_stamp(10.0, 8.0, 2.0, 5.0, 0.0, 1.0)
        piece = drop_piece(scene, stamp, 50.0, 50.0)
        masks = render_masks(scene)
        assert masks.ids() == [piece.id]
        np.testing.assert_array_equal(masks.masks[0][1], scene.owner_map == piece.id)

    def test_disjoint_and_complete(self):
        scene = generate_scene(SceneConfig(), 6)
        masks = render_masks(scene)
        union = np.zeros(scene.shape, dtype=bool)
        for _, m in masks.masks:
            assert not (union & m).any()
            union |= m
        np.testing.assert_array_equal(union, scene.owner_map > 0)

    def test_buried_piece_excluded_and_flagged(self):
        scene = empty_scene(resolution=1.0, tray_dims=(100.0, 100.0, 80.0))
        small = rasterize_stamp(4.0, 4.0, 2.0, 1.0, 0.0, 1.0)
        buried = drop_piece(scene, small, 50.0, 50.0)
        big = rasterize_stamp(15.0, 15.0, 2.0, 10.0, 0.0, 1.0)
        drop_piece(scene, big, 50.0, 50.0)
        masks = render_masks(scene)
        assert buried.id not in masks.ids()
        assert scene.pieces[buried.id].fully_occluded


class TestCorruptMasks:
    def two_touching(self):
        shape = (40, 40)
        a = square_mask(shape, 10, 10, 10)
        b = square_mask(shape, 10, 20, 10)
        return InstanceMaskSet([(1, a), (2, b)], source="ground_truth")

    def test_identity_params(self):
        masks = self.two_touching()
        out = corrupt_masks(masks, CorruptionParams(), np.random.default_rng(0))
        assert out.source == "corrupted"
        assert out.ids() == masks.ids()
        for (_, a), (_, b) in zip(out.masks, masks.masks):
            np.testing.assert_array_equal(a, b)

    def test_drop_all(self):
        out = corrupt_masks(
            self.two_touching(), CorruptionParams(drop_prob=1.0), np.random.default_rng(0)
        )
        assert out.masks == []

    def test_merge_touching_pair(self):
        masks = self.two_touching()
        out = corrupt_masks(
            masks, CorruptionParams(merge_prob=1.0), np.random.default_rng(0)
        )
        assert len(out.masks) == 1
        np.testing.assert_array_equal(
            out.masks[0][1], masks.masks[0][1] | masks.masks[1][1]
        )

    def test_non_adjacent_never_merged(self):
        shape = (40, 40)
        masks = InstanceMaskSet(
            [(1, square_mask(shape, 5, 5, 5)), (2, square_mask(shape, 25, 25, 5))],
            source="ground_truth",
        )
        out = corrupt_masks(masks, CorruptionParams(merge_prob=1.0), np.random.default_rng(0))
        assert len(out.masks) == 2

    def test_jitter_bounded(self):
        masks = self.two_touching()
        for seed in range(10):
            out = corrupt_masks(
                masks, CorruptionParams(boundary_jitter=2), np.random.default_rng(seed)
            )
            for pid, m in out.masks:
                orig = dict(masks.masks)[pid]
                # dilation/erosion by at most 2 px changes the bounding box by <= 2
                assert abs(int(m.sum()) - int(orig.sum())) <= orig.sum() * 3

    def test_requires_ground_truth_source(self):
        masks = self.two_touching()
        masks.source = "corrupted"
        with pytest.raises(ParameterError):
            corrupt_masks(masks, CorruptionParams(), np.random.default_rng(0))

    def test_confidences_respect_floor(self):
        out = corrupt_masks(
            self.two_touching(),
            CorruptionParams(boundary_jitter=1, confidence_floor=0.7),
            np.random.default_rng(2),
        )
        for pid in out.ids():
            assert 0.7 <= out.confidences[pid] <= 1.0


class TestMaskIou:
    def test_identical(self):
        m = square_mask((20, 20), 5, 5, 10)
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = square_mask((20, 20), 0, 0, 5)
        b = square_mask((20, 20), 10, 10, 5)
        assert mask_iou(a, b) == 0.0

    def test_shifted_square_is_one_third(self):
        a = square_mask((30, 30), 10, 5, 10)
        b = square_mask((30, 30), 10, 10, 10)
        assert mask_iou(a, b) == pytest.approx(50 / 150)

    def test_both_empty(self):
        z = np.zeros((10, 10), dtype=bool)
        assert mask_iou(z, z) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            mask_iou(np.zeros((5, 5), bool), np.zeros((6, 6), bool))

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a = rng.random((15, 15)) > 0.5
        b = rng.random((15, 15)) > 0.5
        assert mask_iou(a, b) == mask_iou(b, a)


def fraction_overlap_set(iou_target):
    """Two masks engineered so one prediction hits gt at a chosen IoU."""
    shape = (60, 60)
    gt = square_mask(shape, 10, 10, 10)  # 100 px
    # overlap o of a 100-px square: iou = o / (200 - o)
    o = round(200 * iou_target / (1 + iou_target))
    pred = np.zeros(shape, dtype=bool)
    pred[10 : 10 + 10, 10 + (10 - o // 10) : 10 + (10 - o // 10) + 10] = True
    return pred, gt


class TestAgreement:
    def test_self_agreement_is_one(self):
        scene = generate_scene(SceneConfig(), 2)
        masks = render_masks(scene)
        score = agreement(masks, masks)
        assert score.value == 1.0
        assert all(v == 1.0 for v in score.per_threshold.values())

    def test_disjoint_sets_zero(self):
        shape = (40, 40)
        a = InstanceMaskSet([(1, square_mask(shape, 0, 0, 5))])
        b = InstanceMaskSet([(1, square_mask(shape, 20, 20, 5))])
        assert agreement(a, b).value == 0.0

    def test_single_match_at_iou_062(self):
        # one of two predictions matches gt at IoU ~0.62: precision 0.5 at
        # thresholds 0.50/0.55/0.60, zero above -> score 3 * 0.5 / 10 = 0.15
        shape = (60, 60)
        gt_mask = square_mask(shape, 10, 10, 10)
        # 10x10 square shifted 2 columns, minus 3 overlap pixels:
        # overlap 77, union 120 -> iou ~0.642, between 0.60 and 0.65
        pred_hit = np.zeros(shape, dtype=bool)
        pred_hit[10:20, 12:22] = True
        pred_hit[10:13, 12] = False
        iou = mask_iou(pred_hit, gt_mask)
        assert 0.60 <= iou < 0.65
        pred_miss = square_mask(shape, 40, 40, 10)
        pred = InstanceMaskSet([(1, pred_hit), (2, pred_miss)])
        gt = InstanceMaskSet([(1, gt_mask)])
        score = agreement(pred, gt)
        assert score.per_threshold[0.50] == 0.5
        assert score.per_threshold[0.60] == 0.5
        assert score.per_threshold[0.65] == 0.0
        assert score.value == pytest.approx(0.15)

    def test_empty_pred_vs_empty_gt(self):
        empty = InstanceMaskSet([])
        assert agreement(empty, empty).value == 1.0

    def test_empty_pred_vs_nonempty_gt(self):
        empty = InstanceMaskSet([])
        gt = InstanceMaskSet([(1, square_mask((20, 20), 5, 5, 5))])
        assert agreement(empty, gt).value == 0.0

    def test_precision_normalizes_by_pred_count(self):
        shape = (40, 40)
        m = square_mask(shape, 5, 5, 8)
        pred = InstanceMaskSet([(1, m), (2, square_mask(shape, 25, 25, 8))])
        gt = InstanceMaskSet([(1, m)])
        assert agreement(pred, gt).value == pytest.approx(0.5)
        # swapping roles changes the normalizer: 1 pred, 1 match -> 1.0
        assert agreement(gt, pred).value == pytest.approx(1.0)

    def test_invariant_under_relabeling(self):
        scene = generate_scene(SceneConfig(), 8)
        masks = render_masks(scene)
        relabeled = InstanceMaskSet(
            [(1000 + i, m) for i, (_, m) in enumerate(reversed(masks.masks))]
        )
        assert agreement(relabeled, masks).value == 1.0

    def test_one_to_one_matching(self):
        # two predictions over one gt: only one can match per threshold
        shape = (40, 40)
        m = square_mask(shape, 5, 5, 10)
        pred = InstanceMaskSet([(1, m), (2, m.copy())])
        gt = InstanceMaskSet([(9, m)])
        assert agreement(pred, gt).value == pytest.approx(0.5)


class TestMaskAndDepthFiles:
    def test_depth_round_trip(self, tmp_path):
        scene = generate_scene(SceneConfig(), 5)
        depth = render_depth(scene)
        save_depth(depth, tmp_path / "d.pgm")
        loaded = load_depth(tmp_path / "d.pgm", scene.resolution)
        np.testing.assert_allclose(loaded.heights, depth.heights, atol=0.005 + 1e-12)

    def test_disjoint_masks_round_trip_as_id_map(self, tmp_path):
        scene = generate_scene(SceneConfig(), 5)
        masks = render_masks(scene)
        manifest = save_masks(masks, tmp_path)
        assert (tmp_path / "masks_idmap.pgm").exists()
        loaded = load_masks(manifest)
        assert loaded.ids() == masks.ids()
        for (_, a), (_, b) in zip(loaded.masks, masks.masks):
            np.testing.assert_array_equal(a, b)

    def test_overlapping_masks_round_trip_per_instance(self, tmp_path):
        shape = (30, 30)
        a = square_mask(shape, 5, 5, 10)
        b = square_mask(shape, 8, 8, 10)
        masks = InstanceMaskSet([(1, a), (2, b)], source="corrupted",
                                confidences={1: 0.9, 2: 0.8})
        manifest = save_masks(masks, tmp_path)
        loaded = load_masks(manifest)
        assert loaded.source == "corrupted"
        assert loaded.confidences == {1: 0.9, 2: 0.8}
        np.testing.assert_array_equal(loaded.masks[0][1], a)
        np.testing.assert_array_equal(loaded.masks[1][1], b)
