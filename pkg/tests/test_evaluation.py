import json

import numpy as np
import pytest

from src.core.exceptions import BudgetExceededError, EvaluationError, ShapeMismatchError
from src.evaluation.ablations import (
    GridCell,
    check_budget,
    map_verdict,
    ts_verdict,
    verify_variant,
    with_overrides,
)
from src.evaluation.measure import measure_stats, otsu_threshold, segment_subject, sharp_edge_strength
from src.evaluation.report import EvalRow, build_report, read_rows, write_report
from src.evaluation.runner import Evaluator, derangement, run_eval
from src.evaluation.scores import mask_iou, normalized_cross_correlation, pas_score, scs_score
from src.pairing.mos import THIRDS, mos_from_values
from src.pairing.params import AestheticParams
from src.pairing.scenes import PALETTES, SEMANTIC_KEYS, SceneSpec, SemanticKey, fit_params, generate_scene
from src.persistence.checkpoint import Checkpoint
from src.training.model import DenoiserModel
from tests.conftest import square_image


def ideal_render(index: int, **changes) -> np.ndarray:
    """Sharp render with ideal colour on a thirds point; ``changes`` override parameters."""
    spec = SceneSpec(
        semantic_key=SEMANTIC_KEYS[index % len(SEMANTIC_KEYS)],
        layout_seed=1000 + index,
        palette_id=index % len(PALETTES),
    )
    corner = index % 4
    params = fit_params(spec, AestheticParams(cx=THIRDS[corner % 2], cy=THIRDS[corner // 2], size=0.12))
    image, _ = generate_scene(spec, params.replace(**changes), 32)
    return image


class TestMeasure:
    def test_otsu_splits_two_modes(self):
        values = np.concatenate([np.full(50, 0.1), np.full(30, 0.8)])
        threshold = otsu_threshold(values)
        assert 0.1 <= threshold < 0.8
        assert ((values > threshold) == (values == 0.8)).all()

    def test_constant_values(self):
        assert otsu_threshold(np.full(10, 0.3)) == 0.3

    def test_flat_image_is_degenerate(self):
        mask, degenerate = segment_subject(np.full((16, 16, 3), 0.5))
        assert degenerate and not mask.any()
        stats = measure_stats(np.full((16, 16, 3), 0.5))
        assert (stats.cx, stats.cy, stats.size) == (0.5, 0.5, 0.0)

    def test_sharp_square(self):
        image, mask = square_image()
        segmented, degenerate = segment_subject(image)
        assert not degenerate
        assert np.array_equal(segmented, mask)
        stats = measure_stats(image)
        assert stats.cx == pytest.approx(12 / 32)
        assert stats.cy == pytest.approx(12 / 32)
        assert stats.size == pytest.approx(64 / 1024)
        assert stats.value == pytest.approx((960 * 0.65 + 64 * 0.25) / 1024)
        assert stats.background_value == pytest.approx(0.65)
        assert stats.saturation == 0.0
        assert stats.blur == 0.0
        assert stats.blur_sigma == 0.0

    def test_calibration_constant_is_positive_and_stable(self):
        strength = sharp_edge_strength()
        assert 0.0 < strength < 1.0
        assert sharp_edge_strength() == strength

    def test_saturation_of_ideal_renders(self):
        for index in range(50):
            assert measure_stats(ideal_render(index)).saturation == pytest.approx(0.75, abs=0.1), index

    def test_sharp_renders_read_as_unblurred(self):
        for index in range(8):
            stats = measure_stats(ideal_render(index))
            assert stats.blur == 0.0 and stats.blur_sigma == 0.0, index

    def test_blurred_render_reads_as_blurred(self):
        spec = SceneSpec(semantic_key=SemanticKey.FRAMED_DISK, layout_seed=4)
        sharp, _ = generate_scene(spec, AestheticParams(size=0.2), 32)
        blurred, _ = generate_scene(spec, AestheticParams(size=0.2, blur=2.0), 32)
        stats = measure_stats(blurred)
        assert stats.blur > 0.0
        assert stats.blur_sigma > 0.5
        assert pas_score(blurred) < pas_score(sharp)


class TestScores:
    def test_pas_reads_measured_values(self):
        image, _ = square_image()
        # brightness is the mean V: 960 background pixels at 0.65, 64 subject pixels at 0.25
        assert pas_score(image) == pytest.approx(mos_from_values(0.0, 0.625, 12 / 32, 12 / 32, 0.0))

    def test_ideal_renders_score_at_least_nine(self):
        scores = [pas_score(ideal_render(index)) for index in range(50)]
        assert min(scores) >= 9.0

    def test_desaturation_lowers_score(self):
        for index in range(5):
            assert pas_score(ideal_render(index, saturation=0.2)) < pas_score(ideal_render(index))

    def test_horizontal_flip_barely_changes_score(self):
        for index in range(10):
            image = ideal_render(index)
            assert abs(pas_score(image[:, ::-1]) - pas_score(image)) <= 0.2

    def test_pas_range(self):
        assert 1.0 <= pas_score(np.zeros((16, 16, 3))) <= 10.0

    def test_scs_of_identical_image_is_one(self):
        image, mask = square_image()
        assert scs_score(image, image, mask) == pytest.approx(1.0)

    def test_scs_of_flat_output_is_zero(self):
        image, mask = square_image()
        assert scs_score(np.full_like(image, 0.5), image, mask) == 0.0

    def test_scs_shape_mismatch(self):
        image, mask = square_image()
        with pytest.raises(ShapeMismatchError):
            scs_score(image[:16], image, mask)

    def test_iou_and_ncc_edge_cases(self):
        empty = np.zeros((4, 4), dtype=bool)
        assert mask_iou(empty, empty) == 0.0
        assert normalized_cross_correlation(np.ones(8), np.arange(8.0)) == 0.0
        assert normalized_cross_correlation(np.arange(8.0), -np.arange(8.0)) == pytest.approx(-1.0)


def row(i, seed, pas_in, pas_out, scs):
    return EvalRow(id=i, pas_in=pas_in, pas_out=pas_out, scs=scs, seed=seed)


class TestReport:
    def test_aggregates_and_bands(self):
        rows = [row(2, 1, 3.0, 5.0, 0.5), row(1, 0, 6.0, 6.5, 0.7), row(1, 1, 6.0, 7.0, 0.9), row(2, 0, 4.5, 4.5, 0.1)]
        report = build_report(rows, [0, 1], num_sample_steps=10)
        assert [(r.seed, r.id) for r in report.rows] == [(0, 1), (0, 2), (1, 1), (1, 2)]
        assert report.mean_pas_in == pytest.approx(4.875)
        assert report.delta_pas == pytest.approx(report.mean_pas_out - report.mean_pas_in)
        assert report.bands["low"].count == 1
        assert report.bands["high"].count == 2
        assert report.per_seed["1"].mean_scs == pytest.approx(0.7)
        assert report.num_sample_steps == 10

    def test_write_report(self, tmp_path):
        report = build_report([row(3, 0, 2.0, 3.0, 0.4)], [0], checkpoint="final.ckpt")
        paths = write_report(report, tmp_path)
        assert read_rows(paths["rows"]) == report.rows
        summary = json.loads(paths["summary"].read_text())
        assert summary["checkpoint"] == "final.ckpt"
        assert "rows" not in summary


class TestEvaluator:
    def test_derangement_has_no_fixed_points(self):
        perm = derangement(5)
        assert sorted(perm) == list(range(5))
        assert all(i != j for i, j in enumerate(perm))

    def test_identity_baseline(self, tiny_config, triplet, tmp_path):
        config = tiny_config.model_copy(update={"identity_baseline": True, "eval_seeds": [0, 1]})
        report = run_eval(None, [triplet, triplet], config.eval_config(), out_dir=tmp_path, config=config, num_threads=1)
        assert len(report.rows) == 4
        assert report.delta_pas == 0.0
        assert report.identity_baseline
        assert report.mean_scs_null is not None
        assert (tmp_path / "eval.csv").exists() and (tmp_path / "config.txt").exists()

    @pytest.fixture
    def fresh_checkpoint(self, tiny_config):
        params = DenoiserModel.from_config(tiny_config).init_params(tiny_config.seed)
        return Checkpoint(config=tiny_config, params=params)

    def test_sampled_evaluation_is_reproducible(self, tiny_config, fresh_checkpoint, triplet):
        config = tiny_config.model_copy(update={"num_sample_steps": 2, "eval_seeds": [0, 1], "sample_batch_size": 1})
        first = run_eval(fresh_checkpoint, [triplet, triplet], config.eval_config(), num_threads=2)
        second = run_eval(fresh_checkpoint, [triplet, triplet], config.eval_config(), num_threads=1)
        assert first.rows == second.rows
        assert first.mean_pas_out == second.mean_pas_out

    def test_non_deterministic_mode_yields_same_rows(self, tiny_config, fresh_checkpoint, triplet):
        config = tiny_config.model_copy(update={"num_sample_steps": 2, "sample_batch_size": 1})
        ordered = run_eval(fresh_checkpoint, [triplet, triplet], config.eval_config(), num_threads=1)
        loose = config.model_copy(update={"deterministic": False})
        unordered = run_eval(fresh_checkpoint, [triplet, triplet], loose.eval_config(), num_threads=2)
        key = lambda r: (r.seed, r.id, r.pas_out)
        assert sorted(unordered.rows, key=key) == sorted(ordered.rows, key=key)

    def test_checkpoint_required_without_baseline(self, tiny_config):
        with pytest.raises(EvaluationError):
            Evaluator(tiny_config.eval_config())

    def test_empty_test_set(self, tiny_config):
        config = tiny_config.model_copy(update={"identity_baseline": True})
        with pytest.raises(EvaluationError):
            Evaluator(config.eval_config()).run([])


def cell(variant, seed, pas, scs):
    return GridCell(variant=variant, seed=seed, mean_pas_in=3.0, mean_pas_out=pas, mean_scs=scs)


class TestAblations:
    def test_budget(self):
        check_budget(9, 100, 900)
        with pytest.raises(BudgetExceededError):
            check_budget(9, 101, 900)

    def test_ts_verdict_tolerates_one_small_inversion(self):
        cells = [cell("6", 0, 5.0, 0.50), cell("12", 0, 5.0, 0.495), cell("18", 0, 5.0, 0.6)]
        assert ts_verdict(cells, [6, 12, 18]).passed
        cells[1] = cell("12", 0, 5.0, 0.3)
        assert not ts_verdict(cells, [6, 12, 18]).passed

    def test_map_verdict(self):
        cells = [cell("full", 0, 6.0, 0.5), cell("wo_t", 0, 5.0, 0.6), cell("wo_v", 0, 5.5, 0.4)]
        verdict = map_verdict(cells)
        assert verdict.passed
        assert [e.name for e in verdict.expectations] == [
            "pas_full_at_least_wo_t",
            "pas_full_at_least_wo_v",
            "scs_wo_t_at_least_wo_v",
        ]

    def test_overrides_revalidate(self, tiny_config):
        changed = with_overrides(tiny_config, t_s=5, map_mode="text_only")
        assert changed.t_s == 5 and changed.map_mode.value == "text_only"
        with pytest.raises(ValueError):
            with_overrides(tiny_config, t_s=tiny_config.T + 1)

    @pytest.mark.parametrize("mode", ["full", "text_only", "visual_only"])
    def test_variant_signals(self, tiny_config, prepared, mode):
        parts = verify_variant(with_overrides(tiny_config, map_mode=mode), prepared)
        assert parts["visual"] == (mode == "text_only")
        assert parts["text"] == (mode == "visual_only")
