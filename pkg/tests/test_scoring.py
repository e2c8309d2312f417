"""Tests for the per-frame score and its batch distribution summary."""

from __future__ import annotations

import numpy as np
import pytest

from pqi.detections import Detection, DetectionSet
from pqi.saliency import SaliencyMap
from pqi.scoring import (
    PqiScore,
    compute_pqi,
    object_saliency_term,
    pqi_distribution,
)


def random_case(rng: np.random.Generator, with_dets: bool = True):
    h = int(rng.integers(2, 24))
    w = int(rng.integers(2, 24))
    sm = SaliencyMap(rng.random((h, w)) * 50)
    dets = []
    if with_dets:
        for _ in range(int(rng.integers(0, 6))):
            x0 = int(rng.integers(0, w))
            x1 = int(rng.integers(x0, w))
            y0 = int(rng.integers(0, h))
            y1 = int(rng.integers(y0, h))
            conf = float(rng.uniform(0.05, 1.0))
            dets.append(Detection(x0, y0, x1, y1, int(rng.integers(0, 10)), conf))
    return sm, DetectionSet("case", tuple(dets))


class TestObjectTerm:
    def test_hand_value(self):
        sm = SaliencyMap(np.ones((2, 2)))
        d = Detection(0, 0, 1, 1, 0, 0.5)
        assert object_saliency_term(sm, d) == pytest.approx(2.0)

    def test_box_outside_map_contributes_zero(self):
        sm = SaliencyMap(np.ones((4, 4)))
        d = Detection(10, 10, 12, 12, 0, 0.9)
        assert object_saliency_term(sm, d) == 0.0

    def test_clamped_box_uses_overlap_only(self):
        sm = SaliencyMap(np.ones((4, 4)))
        d = Detection(2, 2, 9, 9, 0, 1.0)
        # Overlap is the bottom-right 2x2 block.
        assert object_saliency_term(sm, d) == pytest.approx(4.0)


class TestComputePqi:
    def test_hand_value_uniform_map(self):
        sm = SaliencyMap(np.full((2, 2), 10.0))
        ds = DetectionSet("img", (Detection(0, 0, 1, 1, 0, 1.0),))
        score = compute_pqi(sm, ds)
        assert score.value == pytest.approx(20.0)
        assert score.k_used == 1
        assert score.image_id == "img"

    def test_no_detections_reduces_to_map_mean(self):
        rng = np.random.default_rng(0)
        sm = SaliencyMap(rng.random((5, 7)))
        score = compute_pqi(sm, DetectionSet("img"))
        assert score.value == pytest.approx(sm.mean())
        assert score.k_used == 0

    def test_decomposition_identity(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            sm, ds = random_case(rng)
            expected = sm.mean() + sum(
                object_saliency_term(sm, d) for d in ds.detections
            ) / (sm.width * sm.height)
            got = compute_pqi(sm, ds).value
            assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_overlapping_boxes_count_twice(self):
        sm = SaliencyMap(np.ones((4, 4)))
        d = Detection(0, 0, 3, 3, 0, 1.0)
        once = compute_pqi(sm, DetectionSet("img", (d,))).value
        twice = compute_pqi(sm, DetectionSet("img", (d, d))).value
        assert twice == pytest.approx(2 * once - sm.mean())

    def test_adding_detection_never_decreases(self):
        rng = np.random.default_rng(33)
        for _ in range(30):
            sm, ds = random_case(rng)
            base = compute_pqi(sm, ds).value
            extra = Detection(0, 0, sm.width - 1, sm.height - 1, 0, 0.5)
            grown = compute_pqi(
                sm, DetectionSet(ds.image_id, ds.detections + (extra,))
            ).value
            assert grown >= base - 1e-12

    def test_raising_confidence_never_decreases(self):
        rng = np.random.default_rng(34)
        for _ in range(30):
            sm, ds = random_case(rng)
            if ds.k == 0:
                continue
            boosted = tuple(
                Detection(d.x0, d.y0, d.x1, d.y1, d.class_id,
                          min(1.0, d.confidence + 0.3), d.normalized)
                for d in ds.detections
            )
            low = compute_pqi(sm, ds).value
            high = compute_pqi(sm, DetectionSet(ds.image_id, boosted)).value
            assert high >= low - 1e-12

    def test_order_invariance(self):
        rng = np.random.default_rng(35)
        sm, ds = random_case(rng)
        while ds.k < 2:
            sm, ds = random_case(rng)
        shuffled = DetectionSet(ds.image_id, tuple(reversed(ds.detections)))
        assert compute_pqi(sm, ds).value == compute_pqi(sm, shuffled).value

    def test_k_used_skips_missing_boxes(self):
        sm = SaliencyMap(np.ones((4, 4)))
        ds = DetectionSet("img", (
            Detection(0, 0, 1, 1, 0, 0.5),
            Detection(40, 40, 50, 50, 0, 0.5),
        ))
        assert compute_pqi(sm, ds).k_used == 1


class TestDistribution:
    def scores(self, values):
        return [PqiScore(value=v, image_id=str(i), k_used=0)
                for i, v in enumerate(values)]

    def test_single_score_has_zero_std(self):
        dist = pqi_distribution(self.scores([4.5]))
        assert dist.mean == 4.5
        assert dist.std == 0.0
        assert dist.n == 1

    def test_two_known_scores(self):
        dist = pqi_distribution(self.scores([1.0, 3.0]))
        assert dist.mean == pytest.approx(2.0)
        assert dist.std == pytest.approx(1.0)  # population std

    def test_histogram_counts_sum_to_n(self):
        rng = np.random.default_rng(8)
        values = list(rng.normal(10, 3, size=200))
        dist = pqi_distribution(self.scores(values), bucket_width=0.5)
        assert sum(c for _, c in dist.histogram) == 200

    def test_histogram_buckets_aligned_to_width(self):
        dist = pqi_distribution(self.scores([2.2, 2.4, 3.7]), bucket_width=1.0)
        starts = [edge for edge, _ in dist.histogram]
        assert starts[0] == 2.0
        counts = {edge: c for edge, c in dist.histogram}
        assert counts[2.0] == 2
        assert counts[3.0] == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            pqi_distribution([])
        with pytest.raises(ValueError):
            pqi_distribution(self.scores([1.0]), bucket_width=0.0)
