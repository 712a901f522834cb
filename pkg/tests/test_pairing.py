import numpy as np
import pytest

from src.core.config import CorpusConfig
from src.core.exceptions import EmptyCorpusError, PairingError, ParameterRangeError
from src.pairing.corpus import corpus_stats, render_image
from src.pairing.mos import mos_from_values, parametric_mos, thirds_distance
from src.pairing.pairs import make_triplet, select_pairs, split_entries
from src.pairing.params import AestheticParams
from src.pairing.scenes import (
    PALETTES,
    SEMANTIC_KEYS,
    SceneSpec,
    SemanticKey,
    base_rendering,
    fit_params,
    generate_scene,
    shape_geometry,
)
from src.persistence.models import ImageRecord, TripletIndexEntry


def record(image_id: int, key: SemanticKey, mos: float) -> ImageRecord:
    return ImageRecord(
        id=image_id,
        semantic_key=key.value,
        params=AestheticParams(),
        mos=mos,
        caption=key.value,
        assessment_string="Color: warm tone. Structure: none.",
        image_png_path=f"images/{image_id:06d}.png",
        mask_png_path=f"masks/{image_id:06d}.png",
        scene=SceneSpec(semantic_key=key),
    )


class TestMos:
    def test_ideal_parameters_score_ten(self):
        assert parametric_mos(AestheticParams(cx=1 / 3, cy=2 / 3)) == pytest.approx(10.0)

    def test_clamped_to_one(self):
        assert mos_from_values(0.0, 0.0, 0.0, 0.0, 2.0) == 1.0

    def test_blur_penalty_saturates(self):
        assert mos_from_values(0.75, 0.65, 1 / 3, 1 / 3, 1.0) == mos_from_values(0.75, 0.65, 1 / 3, 1 / 3, 2.0)

    def test_corner_is_farthest_from_thirds(self):
        assert thirds_distance(0.0, 0.0) == pytest.approx(1.0)
        assert thirds_distance(2 / 3, 1 / 3) == pytest.approx(0.0)

    def test_out_of_range_parameters(self):
        with pytest.raises(ParameterRangeError):
            AestheticParams.create(saturation=1.5)


class TestSelectPairs:
    def test_best_reference_and_low_band_inputs(self):
        star, cross = SemanticKey.STAR, SemanticKey.CROSS
        records = {
            star.value: [record(0, star, 3.0), record(1, star, 8.0), record(2, star, 9.0), record(3, star, 9.0),
                         record(4, star, 5.5), record(5, star, 2.0)],
            # no reference in this class
            cross.value: [record(6, cross, 2.0), record(7, cross, 6.0)],
        }
        entries = select_pairs(records, low_max=4.0, high_min=7.0)
        assert entries == [
            TripletIndexEntry(input_id=0, reference_id=2),
            TripletIndexEntry(input_id=5, reference_id=2),
        ]

    def test_order_independent(self):
        star = SemanticKey.STAR
        group = [record(i, star, mos) for i, mos in enumerate([1.0, 9.5, 3.0, 7.5])]
        forward = select_pairs({star.value: group}, 4.0, 7.0)
        backward = select_pairs({star.value: list(reversed(group))}, 4.0, 7.0)
        assert forward == backward

    def test_errors(self):
        with pytest.raises(EmptyCorpusError):
            select_pairs({}, 4.0, 7.0)
        with pytest.raises(PairingError):
            select_pairs({"star": [record(0, SemanticKey.STAR, 2.0)]}, 7.0, 7.0)


class TestSplit:
    def entries(self, n: int):
        return [TripletIndexEntry(input_id=i, reference_id=1000) for i in range(n)]

    def test_disjoint_and_sized(self):
        train, test = split_entries(self.entries(50), 30, 10, seed=3)
        assert len(train) == 30 and len(test) == 10
        assert not {e.input_id for e in train} & {e.input_id for e in test}

    def test_test_split_stable_when_train_size_changes(self):
        _, small = split_entries(self.entries(50), 5, 10, seed=3)
        _, large = split_entries(self.entries(50), 40, 10, seed=3)
        assert small == large

    def test_short_corpus_truncates(self):
        train, test = split_entries(self.entries(12), 100, 10, seed=0)
        assert len(test) == 10 and len(train) == 2


class TestCorpus:
    def test_render_is_deterministic(self):
        config = CorpusConfig(num_images=4, seed=7)
        first, second = render_image(3, config), render_image(3, config)
        assert np.array_equal(first.image, second.image)
        assert first.record == second.record
        assert first.record.mos == parametric_mos(first.record.params)

    def test_render_shapes(self):
        item = render_image(0, CorpusConfig(side=32))
        assert item.image.shape == (32, 32, 3)
        assert item.mask.shape == (32, 32)
        assert item.image.min() >= 0.0 and item.image.max() <= 1.0

    def test_triplet_requires_shared_key(self):
        config = CorpusConfig()
        with pytest.raises(PairingError):
            make_triplet(render_image(0, config), render_image(1, config))

    def test_stats_count_bands(self):
        star = SemanticKey.STAR
        records = [record(0, star, 2.0), record(1, star, 5.0), record(2, star, 8.0)]
        stats = corpus_stats(records, CorpusConfig())
        assert stats.num_images == 3
        assert (stats.bands.low, stats.bands.middle, stats.bands.high) == (1, 1, 1)
        assert stats.per_key == {"star": 3}


def _centroid(mask: np.ndarray):
    rows, cols = np.nonzero(mask)
    side = mask.shape[0]
    return (cols.mean() + 0.5) / side, (rows.mean() + 0.5) / side


def _fitted(key: SemanticKey, cx: float, cy: float, size: float = 0.15, seed: int = 3):
    spec = SceneSpec(semantic_key=key, layout_seed=seed, palette_id=seed % len(PALETTES))
    return spec, fit_params(spec, AestheticParams(cx=cx, cy=cy, size=size))


class TestScenes:
    @pytest.mark.parametrize("cx, cy", [(1 / 3, 1 / 3), (2 / 3, 0.5), (0.5, 0.5)])
    @pytest.mark.parametrize("key", SEMANTIC_KEYS)
    def test_mask_matches_size_and_centroid(self, key, cx, cy):
        spec, params = _fitted(key, cx, cy)
        _, mask = generate_scene(spec, params, 64)
        assert mask.any()
        assert abs(mask.mean() - params.size) <= 0.1 * params.size
        mx, my = _centroid(mask)
        assert abs(mx - cx) <= 1 / 64
        assert abs(my - cy) <= 1 / 64

    def test_subject_near_the_edge_stays_visible(self):
        spec = SceneSpec(semantic_key=SemanticKey.PILLAR_PAIR, layout_seed=136545)
        params = AestheticParams(cx=0.5, cy=0.19, size=0.42)
        _, mask = generate_scene(spec, params, 32)
        assert mask.any()
        assert mask.mean() >= 0.5 * params.size
        assert fit_params(spec, params).size < params.size

    def test_fit_keeps_parameters_that_already_fit(self):
        spec = SceneSpec(semantic_key=SemanticKey.HEXAGON, layout_seed=5)
        params = AestheticParams(size=0.05)
        assert fit_params(spec, params) == params

    @pytest.mark.parametrize("key", SEMANTIC_KEYS)
    def test_fitted_subject_fits_inside_frame(self, key):
        spec, params = _fitted(key, 0.2, 0.8, size=0.9)
        geometry = shape_geometry(spec)
        assert params.size <= geometry.max_size(0.2, 0.8)

    def test_identity_parameters_reproduce_base_rendering(self):
        spec = SceneSpec(semantic_key=SemanticKey.HOUSE, layout_seed=11, palette_id=2)
        params = AestheticParams(saturation=1.0, brightness=1.0, hue_shift=0.0, blur=0.0, size=0.15)
        image, _ = generate_scene(spec, params, 32)
        assert np.array_equal(image, base_rendering(spec, params, 32))

    def test_generation_is_bit_identical(self):
        spec = SceneSpec(semantic_key=SemanticKey.STAR, layout_seed=42, palette_id=1)
        params = AestheticParams(saturation=0.3, hue_shift=0.4, cx=0.6, cy=0.4, blur=1.2, size=0.12)
        first, first_mask = generate_scene(spec, params, 48)
        second, second_mask = generate_scene(spec, params, 48)
        assert first.tobytes() == second.tobytes()
        assert np.array_equal(first_mask, second_mask)

    def test_corpus_subjects_are_visible_and_placed(self):
        config = CorpusConfig(side=32, seed=5)
        for image_id in range(2 * len(SEMANTIC_KEYS)):
            item = render_image(image_id, config)
            assert item.mask.any(), image_id
            mx, my = _centroid(item.mask)
            assert abs(mx - item.record.params.cx) <= 1 / 32, image_id
            assert abs(my - item.record.params.cy) <= 1 / 32, image_id
