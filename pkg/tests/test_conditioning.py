import numpy as np
import pytest

from src.cli.selftest import zero_init_check
from src.conditioning.adapter import TEXT_TABLE, assemble_control, encode_assessment, encode_visual
from src.conditioning.assessment import Assessment
from src.conditioning.assessment import TOKEN_IDS
from src.conditioning.maps import aesthetic_maps, contour_map, hsv_map_to_rgb, rgb_to_hsv_map, sobel_magnitude
from src.core.config import MapMode
from src.core.exceptions import AdapterNotInitializedError, MissingComponentError, PixelRangeError, UnknownTokenError
from src.evaluation.ablations import withdrawn_parts
from src.numerics.ops import embedding_mean
from src.numerics.tensor import Tensor, as_tensors
from src.pairing.mos import assessment_text
from src.pairing.params import AestheticParams
from src.training.model import DenoiserModel

CANONICAL = (
    "Color: well-saturated; balanced light; warm tone. "
    "Structure: sharp focus; medium shot; rule-of-thirds composition; none."
)


class TestAssessment:
    def test_parse_render_canonical_form(self):
        assessment = Assessment.parse(CANONICAL)
        assert assessment.color == ["well-saturated", "balanced light", "warm tone"]
        assert assessment.render() == CANONICAL

    def test_tokens_are_put_in_vocabulary_order(self):
        assessment = Assessment(color=["warm tone", "undersaturated"], structure=["none", "soft focus"])
        assert assessment.color == ["undersaturated", "warm tone"]
        assert assessment.structure == ["soft focus", "none"]

    def test_unknown_token(self):
        with pytest.raises(UnknownTokenError):
            Assessment(color=["glowing"], structure=[])
        with pytest.raises(UnknownTokenError):
            Assessment.parse("Colour: warm tone.")

    def test_ideal_parameters_produce_canonical_assessment(self):
        params = AestheticParams.create(saturation=0.75, brightness=0.65, cx=1 / 3, cy=1 / 3, size=0.2)
        assert assessment_text(params).render() == CANONICAL

    def test_framed_scene_uses_framing_technique(self):
        assert "framing" in assessment_text(AestheticParams(), framed=True).structure


class TestMaps:
    def test_hsv_round_trip_of_pure_red(self):
        image = np.zeros((2, 2, 3))
        image[..., 0] = 1.0
        hsv = rgb_to_hsv_map(image)
        np.testing.assert_allclose(hsv[0, 0], [0.0, 1.0, 1.0])
        np.testing.assert_allclose(hsv_map_to_rgb(hsv), image)

    def test_hsv_examples(self):
        image = np.array([[[0.0, 0.5, 1.0], [0.5, 0.5, 0.5]]])
        hsv = rgb_to_hsv_map(image)
        np.testing.assert_allclose(hsv[0, 0], [210.0 / 360.0, 1.0, 1.0])
        assert hsv[0, 1].tolist() == [0.0, 0.0, 0.5]
        assert hsv_map_to_rgb(hsv)[0, 1].tolist() == [0.5, 0.5, 0.5]

    def test_hsv_round_trip_of_random_colours(self):
        image = np.random.default_rng(0).uniform(0.0, 1.0, size=(16, 16, 3))
        hsv = rgb_to_hsv_map(image)
        assert (hsv[..., 1] > 0.0).all()
        assert np.abs(hsv_map_to_rgb(hsv) - image).max() <= 1e-5

    def test_sobel_of_hand_computed_patch(self):
        patch = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]])
        # centre: gx = 0.2 + 2 * 0.2 + 0.2 = 0.8, gy = 0.6 + 2 * 0.6 + 0.6 = 2.4
        expected = np.sqrt(0.8**2 + 2.4**2) / (4.0 * np.sqrt(2.0))
        assert sobel_magnitude(patch)[1, 1] == pytest.approx(expected, abs=1e-6)
        gray = np.repeat(patch[..., None], 3, axis=-1)
        assert contour_map(gray)[1, 1] == pytest.approx(expected, abs=1e-6)

    def test_contour_follows_a_one_pixel_shift(self):
        wide = np.random.default_rng(1).uniform(0.0, 1.0, size=(12, 13, 3))
        left, right = contour_map(wide[:, :-1]), contour_map(wide[:, 1:])
        np.testing.assert_allclose(right[1:-1, 1:-2], left[1:-1, 2:-1], atol=1e-12)

    def test_contour_of_flat_image_is_zero(self):
        assert not contour_map(np.full((8, 8, 3), 0.4)).any()

    def test_contour_peaks_on_edges(self):
        image = np.zeros((8, 8, 3))
        image[:, 4:] = 1.0
        contour = contour_map(image)
        assert contour[:, 3:5].min() > 0.5
        assert contour[:, 0].max() == 0.0
        assert contour.max() <= 1.0

    def test_rejects_out_of_range(self):
        with pytest.raises(PixelRangeError):
            rgb_to_hsv_map(np.full((4, 4, 3), -0.1))
        with pytest.raises(PixelRangeError):
            contour_map(np.zeros((4, 4)))

    def test_batch_shapes(self):
        hsv, contour = aesthetic_maps(np.zeros((3, 8, 8, 3)))
        assert hsv.shape == (3, 8, 8, 3)
        assert contour.shape == (3, 8, 8)


class TestAssessmentEncoding:
    @pytest.fixture
    def tensors(self, tiny_config):
        return as_tensors(DenoiserModel.from_config(tiny_config).init_params(tiny_config.seed))

    def test_empty_list_gives_zero_vector(self, tensors):
        colour, structure = encode_assessment(tensors, [Assessment(color=[], structure=["sharp focus"])])
        assert not colour.data.any()
        np.testing.assert_array_equal(structure.data[0], tensors[TEXT_TABLE].data[TOKEN_IDS["sharp focus"]])

    def test_two_tokens_average_their_rows(self, tensors):
        colour, _ = encode_assessment(tensors, [Assessment(color=["warm tone", "balanced light"], structure=[])])
        table = tensors[TEXT_TABLE].data
        expected = (table[TOKEN_IDS["warm tone"]] + table[TOKEN_IDS["balanced light"]]) / 2.0
        np.testing.assert_allclose(colour.data[0], expected, rtol=1e-6)

    def test_token_order_does_not_matter(self, tensors):
        forward = Assessment(color=["undersaturated", "poor light", "cool tone"], structure=["soft focus", "none"])
        backward = Assessment(color=["cool tone", "poor light", "undersaturated"], structure=["none", "soft focus"])
        a = encode_assessment(tensors, [forward])
        b = encode_assessment(tensors, [backward])
        assert np.array_equal(a[0].data, b[0].data) and np.array_equal(a[1].data, b[1].data)
        table = Tensor(np.random.default_rng(2).normal(size=(6, 4)))
        np.testing.assert_allclose(
            embedding_mean(table, [[4, 0, 2]]).data, embedding_mean(table, [[2, 4, 0]]).data, rtol=1e-6
        )


class TestAdapter:
    @pytest.fixture
    def parts(self, tiny_config, prepared):
        model = DenoiserModel.from_config(tiny_config)
        tensors = as_tensors(model.init_params(tiny_config.seed))
        colour, structure = encode_visual(tensors, model.adapter, prepared.hsv, prepared.contour)
        text_colour, text_structure = encode_assessment(tensors, [prepared.assessment])
        return colour, text_colour, structure, text_structure

    def test_pyramid_sides_follow_unet_levels(self, parts, tiny_config):
        colour, text_colour, structure, _ = parts
        assert [f.shape[2] for f in colour] == tiny_config.unet_config().level_sides()
        assert [f.shape[1] for f in structure] == [tiny_config.adapter_channels] * 2
        assert text_colour.shape == (1, tiny_config.caption_dim)

    def test_full_mode_keeps_every_modality(self, parts):
        signal = assemble_control(*parts, MapMode.FULL)
        assert withdrawn_parts(signal) == {"visual": False, "text": False}

    def test_text_only_withdraws_visual_features(self, parts):
        signal = assemble_control(*parts, MapMode.TEXT_ONLY)
        assert withdrawn_parts(signal) == {"visual": True, "text": False}

    def test_visual_only_withdraws_text(self, parts):
        signal = assemble_control(*parts, MapMode.VISUAL_ONLY)
        assert withdrawn_parts(signal) == {"visual": False, "text": True}

    def test_missing_component(self, parts):
        colour, text_colour, structure, _ = parts
        with pytest.raises(MissingComponentError):
            assemble_control(colour, text_colour, structure, None)

    def test_missing_parameters(self, prepared, tiny_config):
        model = DenoiserModel.from_config(tiny_config)
        with pytest.raises(AdapterNotInitializedError):
            encode_visual({}, model.adapter, prepared.hsv, prepared.contour)

    def test_fresh_adapter_leaves_prediction_unchanged(self, tiny_config):
        assert zero_init_check(tiny_config).passed
