"""Phantom geometry, rendering and dataset generation contracts."""

import math

import numpy as np
import pytest

from hipgraf.config import GeneratorConfig
from hipgraf.dataset import read_manifest, read_pgm
from hipgraf.errors import DataError
from hipgraf.metrics import classify_graf, graf_angles
from hipgraf.phantom import (
    border_margin,
    generate_dataset,
    render_phantom,
    sample_geometry,
)


class TestSampleGeometry:
    def test_vertical_baseline_at_65_degrees_yields_65(self):
        # analytic construction: exactly vertical baseline, roof at 65 degrees
        angle = math.radians(65.0)
        landmarks = np.array(
            [
                [60.0, 20.0],
                [60.0, 90.0],
                [58.0, 40.0],
                [58.0 - 40.0 * math.sin(angle), 40.0 + 40.0 * math.cos(angle)],
                [55.0, 30.0],
                [55.0 - 30.0 * math.sin(angle), 30.0 - 30.0 * math.cos(angle)],
            ]
        )
        measured = graf_angles(landmarks)
        assert measured.alpha == pytest.approx(65.0, abs=0.1)

    def test_requested_class_is_honored(self):
        rng = np.random.default_rng(1)
        for request, expected in (("normal", 0), ("abnormal", 1)):
            for _ in range(10):
                geometry = sample_geometry(request, rng=rng)
                assert geometry.label == expected

    def test_label_rule_on_drawn_angles(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            g = sample_geometry("any", rng=rng)
            expected = 0 if (g.angles.alpha > 60.0 and g.angles.beta < 77.0) else 1
            assert g.label == expected

    def test_alpha_70_beta_60_is_normal(self):
        from hipgraf.metrics import GrafAngles

        assert classify_graf(GrafAngles(70.0, 60.0)) == 0

    def test_alpha_55_is_abnormal_for_any_beta(self):
        from hipgraf.metrics import GrafAngles

        for beta in (40.0, 60.0, 76.9, 90.0):
            assert classify_graf(GrafAngles(55.0, beta)) == 1

    def test_margins_and_pair_separation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = sample_geometry("any", rng=rng, size=128)
            assert g.landmarks.min() >= 10 and g.landmarks.max() <= 117
            for a, b in ((0, 1), (2, 3), (4, 5)):
                assert np.linalg.norm(g.landmarks[a] - g.landmarks[b]) >= 8

    def test_recomputed_angles_match_construction(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            g = sample_geometry("any", rng=rng)
            measured = graf_angles(g.landmarks)
            assert measured.alpha == pytest.approx(g.angles.alpha, abs=0.1)
            assert measured.beta == pytest.approx(g.angles.beta, abs=0.1)

    def test_unknown_request_rejected(self):
        with pytest.raises(DataError, match="class request"):
            sample_geometry("weird")

    def test_margin_scales_down_for_small_images(self):
        assert border_margin(128) == 10
        assert border_margin(256) == 10
        assert border_margin(32) >= 2


class TestRenderPhantom:
    def test_noiseless_render_is_deterministic(self):
        g = sample_geometry("any", rng=np.random.default_rng(5))
        a = render_phantom(g.landmarks, rng=np.random.default_rng(1), speckle_gamma=0.0)
        b = render_phantom(g.landmarks, rng=np.random.default_rng(2), speckle_gamma=0.0)
        np.testing.assert_array_equal(a, b)

    def test_landmarks_brighter_than_empty_background(self):
        g = sample_geometry("any", rng=np.random.default_rng(6))
        img = render_phantom(g.landmarks, speckle_gamma=0.0)
        ys, xs = np.mgrid[0:128, 0:128]
        far = np.ones((128, 128), dtype=bool)
        for x, y in g.landmarks:
            far &= (xs - x) ** 2 + (ys - y) ** 2 > 100.0
        # also stay away from the three segments
        from hipgraf.phantom import _segment_distance_field

        for a, b in ((0, 1), (2, 3), (4, 5)):
            far &= _segment_distance_field(128, g.landmarks[a].astype(float), g.landmarks[b].astype(float)) > 10.0
        assert far.any()
        far_max = img[far].max()
        for x, y in np.round(g.landmarks).astype(int):
            assert img[y, x] >= far_max

    def test_same_landmarks_different_seeds_share_structure(self):
        g = sample_geometry("any", rng=np.random.default_rng(7))
        clean = render_phantom(g.landmarks, speckle_gamma=0.0)
        noisy_a = render_phantom(g.landmarks, rng=np.random.default_rng(8), speckle_gamma=0.3)
        noisy_b = render_phantom(g.landmarks, rng=np.random.default_rng(9), speckle_gamma=0.3)
        assert not np.array_equal(noisy_a, noisy_b)
        # speckle is multiplicative: noisy/clean stays within 1 +- gamma where unclamped
        ratio = noisy_a[clean > 0.05] / clean[clean > 0.05]
        assert ratio.min() >= 0.7 - 1e-6 and ratio.max() <= 1.3 + 1e-6

    def test_values_clamped_to_unit_interval(self):
        g = sample_geometry("any", rng=np.random.default_rng(10))
        img = render_phantom(g.landmarks, rng=np.random.default_rng(11), speckle_gamma=0.3)
        assert img.min() >= 0.0 and img.max() <= 1.0


class TestGenerateDataset:
    def test_balance_and_manifest_rows(self, tmp_path):
        cfg = GeneratorConfig(n_samples=10, class_balance=0.5, seed=3)
        manifest = generate_dataset(tmp_path / "ds", cfg)
        samples = read_manifest(manifest)
        labels = [s.label for s in samples]
        assert len(labels) == 10 and sum(labels) == 5

    def test_paper_like_imbalance(self, tmp_path):
        # 0.084 of 500 rounds to 42 abnormal; checked on a small n with the same rule
        cfg = GeneratorConfig(n_samples=500, class_balance=0.084, seed=0)
        requests = __import__("hipgraf.phantom", fromlist=["_class_requests"])._class_requests(500, 0.084, 0)
        assert sum(1 for r in requests if r == "abnormal") == 42
        del cfg

    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = GeneratorConfig(n_samples=4, class_balance=0.5, seed=9, size=64)
        m1 = generate_dataset(tmp_path / "a", cfg)
        m2 = generate_dataset(tmp_path / "b", cfg)
        assert m1.read_bytes() == m2.read_bytes()
        for i in range(4):
            assert (tmp_path / "a" / f"sample_{i:04d}.tgt").read_bytes() == (tmp_path / "b" / f"sample_{i:04d}.tgt").read_bytes()
            assert (tmp_path / "a" / f"sample_{i:04d}.pgm").read_bytes() == (tmp_path / "b" / f"sample_{i:04d}.pgm").read_bytes()

    def test_manifest_angles_match_stored_landmarks(self, tmp_path):
        cfg = GeneratorConfig(n_samples=6, class_balance=0.5, seed=4, size=64)
        samples = read_manifest(generate_dataset(tmp_path / "ds", cfg))
        for s in samples:
            measured = graf_angles(s.landmarks)
            assert measured.alpha == pytest.approx(s.alpha, abs=0.1)
            assert measured.beta == pytest.approx(s.beta, abs=0.1)
            assert classify_graf(measured) == s.label

    def test_pgm_matches_tensor_image(self, tmp_path):
        cfg = GeneratorConfig(n_samples=2, class_balance=0.0, seed=5, size=64)
        manifest = generate_dataset(tmp_path / "ds", cfg)
        samples = read_manifest(manifest)
        pgm = read_pgm(tmp_path / "ds" / "sample_0000.pgm")
        assert np.abs(pgm - samples[0].image).max() <= 0.5 / 255.0 + 1e-6

    def test_group_column_optional(self, tmp_path):
        cfg = GeneratorConfig(n_samples=4, class_balance=0.5, seed=6, size=64, group_size=2)
        samples = read_manifest(generate_dataset(tmp_path / "ds", cfg))
        assert [s.group for s in samples] == [0, 0, 1, 1]
