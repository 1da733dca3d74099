import numpy as np
import pytest

from eodf.imageio import Image, read_image
from eodf.saliency import (
    MaskedImage,
    SaliencyMap,
    binarize,
    compress,
    compute_saliency,
    srvs_compress,
    threshold_for_ratio,
)
from oracles import saliency_reference


def gray_image(array_2d):
    return Image(np.asarray(array_2d, dtype=np.uint8)[:, :, None])


class TestComputeSaliency:
    def test_constant_input_is_well_defined(self):
        # Degenerate input: exact scores are unspecified, but the map must
        # be finite and stay inside the normalized range.
        for level in (0, 128, 255):
            scores = compute_saliency(gray_image(np.full((8, 8), level))).scores
            assert np.isfinite(scores).all()
            assert scores.min() >= 0.0 and scores.max() <= 1.0

    def test_scores_normalized(self):
        rng = np.random.default_rng(21)
        scores = compute_saliency(
            gray_image(rng.integers(0, 256, size=(16, 16)))
        ).scores
        assert scores.min() == 0.0
        assert scores.max() == 1.0

    def test_minimum_dimension_enforced(self):
        with pytest.raises(ValueError):
            compute_saliency(gray_image(np.zeros((7, 8))))
        compute_saliency(gray_image(np.random.default_rng(0).integers(0, 256, (8, 8))))

    def test_rejects_color_input(self):
        with pytest.raises(ValueError):
            compute_saliency(Image(np.zeros((8, 8, 3), dtype=np.uint8)))

    def test_even_filter_size_rejected(self):
        with pytest.raises(ValueError):
            compute_saliency(gray_image(np.zeros((8, 8))), spectrum_filter_size=4)

    def test_matches_direct_transform_reference(self):
        rng = np.random.default_rng(33)
        for size in (8, 16):
            for _ in range(3):
                g = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
                mine = compute_saliency(gray_image(g)).scores
                ref = saliency_reference(g)
                assert float(np.abs(mine - ref).max()) < 1e-6

    def test_smooth_sky_rows_discarded_before_textured_rows(self, small_corpus_dir):
        # Street-scene selectivity: at a moderate discard target the smooth
        # top-of-frame rows must lose more pixels than the textured middle
        # band where the objects sit.
        for path in sorted(small_corpus_dir.glob("*.ppm"))[:2]:
            masked = srvs_compress(read_image(path), 0.3)
            bits = masked.mask.bits
            h = bits.shape[0]
            top_ones = bits[: int(h * 0.25)].mean()
            middle_ones = bits[int(h * 0.4) : int(h * 0.75)].mean()
            assert top_ones < middle_ones


class TestThreshold:
    def map_of(self, values):
        return SaliencyMap(np.asarray(values, dtype=np.float64))

    def test_frozen_quartile(self):
        choice = threshold_for_ratio(self.map_of([[0.1, 0.2], [0.3, 0.4]]), 0.5)
        assert choice.threshold == 0.2
        assert choice.achieved_discard == 0.5
        assert choice.ties_at_threshold == 1

    def test_zero_target_keeps_everything(self):
        choice = threshold_for_ratio(self.map_of([[0.0, 0.5], [0.9, 1.0]]), 0.0)
        assert choice.threshold == -1.0
        assert choice.achieved_discard == 0.0
        mask = binarize(self.map_of([[0.0, 0.5], [0.9, 1.0]]), choice.threshold)
        assert mask.bits.sum() == 4  # score 0.0 survives a -1 threshold

    def test_full_target_discards_everything(self):
        sal = self.map_of([[0.1, 0.2], [0.3, 0.4]])
        choice = threshold_for_ratio(sal, 1.0)
        assert choice.threshold == 0.4
        assert binarize(sal, choice.threshold).bits.sum() == 0

    def test_ties_push_achieved_above_target(self):
        sal = self.map_of([[0.5, 0.5], [0.5, 0.7]])
        choice = threshold_for_ratio(sal, 0.25)
        assert choice.threshold == 0.5
        assert choice.achieved_discard == 0.75
        assert choice.ties_at_threshold == 3
        assert choice.achieved_discard <= 0.25 + choice.ties_at_threshold / 4

    def test_small_target_rounds_down_to_zero(self):
        choice = threshold_for_ratio(self.map_of([[0.1, 0.2], [0.3, 0.4]]), 0.2)
        assert choice.threshold == -1.0  # floor(0.2 * 4) = 0 pixels

    def test_range_validation(self):
        with pytest.raises(ValueError):
            threshold_for_ratio(self.map_of([[0.5]]), 1.5)


class TestBinarize:
    def test_strictly_above_survives(self):
        sal = SaliencyMap(np.array([[0.2, 0.5, 0.8]], dtype=np.float64))
        assert binarize(sal, 0.5).bits.tolist() == [[0, 0, 1]]

    def test_achieved_ratio_consistent_with_mask(self):
        rng = np.random.default_rng(55)
        for _ in range(20):
            sal = SaliencyMap(rng.random((12, 12)))
            target = float(rng.uniform(0, 1))
            choice = threshold_for_ratio(sal, target)
            mask = binarize(sal, choice.threshold)
            discarded = mask.bits.size - int(mask.bits.sum())
            assert discarded / mask.bits.size == choice.achieved_discard


class TestCompress:
    def test_zero_ratio_is_identity(self, small_corpus_dir):
        image = read_image(sorted(small_corpus_dir.glob("*.ppm"))[0])
        masked = srvs_compress(image, 0.0)
        assert np.array_equal(masked.image.pixels, image.pixels)
        assert masked.discard_ratio == 0.0
        assert masked.mask.bits.all()

    def test_discarded_pixels_are_zero_across_channels(self, small_corpus_dir):
        image = read_image(sorted(small_corpus_dir.glob("*.ppm"))[1])
        masked = srvs_compress(image, 0.3)
        discarded = masked.mask.bits == 0
        assert np.all(masked.image.pixels[discarded] == 0)
        retained = masked.mask.bits == 1
        assert np.array_equal(masked.image.pixels[retained], image.pixels[retained])

    def test_reported_ratio_measured_on_upsampled_mask(self):
        rng = np.random.default_rng(77)
        image = Image(rng.integers(0, 256, size=(30, 50, 3), dtype=np.uint8))
        from eodf.imageio import Mask

        analysis = Mask((rng.random((8, 8)) < 0.5).astype(np.uint8))
        masked = compress(image, analysis)
        zeros = masked.mask.bits.size - int(masked.mask.bits.sum())
        assert masked.discard_ratio == zeros / (30 * 50)

    def test_masks_nest_as_ratio_grows(self, small_corpus_dir):
        image = read_image(sorted(small_corpus_dir.glob("*.ppm"))[2])
        previous = srvs_compress(image, 0.1).mask.bits
        for ratio in (0.2, 0.35, 0.5):
            current = srvs_compress(image, ratio).mask.bits
            # Every pixel retained at the higher ratio was retained before.
            assert np.all(previous[current == 1] == 1)
            previous = current

    def test_ratio_control_two_frames(self, small_corpus_dir):
        for path in sorted(small_corpus_dir.glob("*.ppm"))[:2]:
            image = read_image(path)
            for target in (0.1, 0.3):
                masked = srvs_compress(image, target)
                assert abs(masked.discard_ratio - target) <= 0.02

    def test_masked_image_validation(self):
        from eodf.imageio import Mask

        image = Image(np.zeros((4, 4, 1), dtype=np.uint8))
        with pytest.raises(ValueError):
            MaskedImage(image, Mask(np.ones((2, 4), dtype=np.uint8)), 0.0)
        with pytest.raises(ValueError):
            MaskedImage(image, Mask(np.ones((4, 4), dtype=np.uint8)), 1.5)
