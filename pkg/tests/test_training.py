import numpy as np
import pytest

from src.core.config import FoldPolicy
from src.core.exceptions import FoldPolicyError, TimestepRangeError, TrainingError
from src.diffusion.schedule import build_schedule
from src.pairing.corpus import render_image
from src.pairing.pairs import make_triplet
from src.pairing.scenes import SEMANTIC_KEYS
from src.persistence.checkpoint import CheckpointRepository
from src.training.dual_loss import dual_loss, prepare_sample
from src.training.fold import fold_timestep
from src.training.model import TEXT_TABLES, DenoiserModel
from src.training.trainer import (
    FINAL_CHECKPOINT,
    METRICS_HEADER,
    DualTrainer,
    TrainState,
    batch_indices,
    read_metrics,
    train_step,
)


class TestFold:
    @pytest.mark.parametrize("t, expected", [(3, 3), (4, 4), (8, 4), (10, 2), (1, 1)])
    def test_folded(self, t, expected):
        assert fold_timestep(t, 4, FoldPolicy.FOLDED) == expected

    def test_gated(self):
        assert fold_timestep(4, 4, "gated") == 4
        assert fold_timestep(5, 4, "gated") is None

    def test_threshold_equal_to_T_is_identity(self):
        assert [fold_timestep(t, 10, "folded", T=10) for t in range(1, 11)] == list(range(1, 11))

    @pytest.mark.parametrize("T, t_s", [(20, 18), (20, 7), (13, 13), (9, 1)])
    def test_folded_covers_every_timestep(self, T, t_s):
        for t in range(1, T + 1):
            folded = fold_timestep(t, t_s, "folded", T=T)
            assert 1 <= folded <= t_s
            assert folded % t_s == t % t_s
            if t <= t_s:
                assert folded == t

    @pytest.mark.parametrize("T, t_s", [(20, 18), (20, 7), (13, 13), (9, 1)])
    def test_gated_skips_exactly_the_timesteps_above_threshold(self, T, t_s):
        skipped = [t for t in range(1, T + 1) if fold_timestep(t, t_s, "gated", T=T) is None]
        assert skipped == list(range(t_s + 1, T + 1))
        assert len(skipped) == T - t_s

    def test_errors(self):
        with pytest.raises(FoldPolicyError):
            fold_timestep(3, 4, "wrapped")
        with pytest.raises(TimestepRangeError):
            fold_timestep(0, 4, "folded")
        with pytest.raises(TimestepRangeError):
            fold_timestep(11, 4, "folded", T=10)


def _setup(config):
    model = DenoiserModel.from_config(config)
    params = model.init_params(config.seed)
    trainable = model.trainable_names(params)
    schedule = build_schedule(*config.schedule_args())
    return model, params, trainable, schedule


class TestDualLoss:
    def test_zero_weight_matches_reference_only(self, tiny_config, prepared):
        config = tiny_config.model_copy(update={"lambda_": 0.0}).train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        dual = dual_loss(model, params, prepared, 12, config, schedule, np.random.default_rng(3), trainable)
        ref = dual_loss(
            model, params, prepared, 12, config, schedule, np.random.default_rng(3), trainable, reference_only=True
        )
        assert dual.loss == ref.loss == ref.l_ref
        assert dual.l_inp > 0.0 and ref.t_inp is None
        for name in trainable:
            assert np.array_equal(dual.grads[name], ref.grads[name]), name

    def test_loss_combines_branches(self, tiny_config, prepared):
        config = tiny_config.model_copy(update={"lambda_": 0.5}).train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        result = dual_loss(model, params, prepared, 15, config, schedule, np.random.default_rng(0), trainable)
        assert result.t_inp == fold_timestep(15, config.t_s, config.fold_policy, config.T)
        assert result.loss == pytest.approx(result.l_ref + 0.5 * result.l_inp, rel=1e-5)

    def test_gated_branch_skipped_above_threshold(self, tiny_config, prepared):
        config = tiny_config.model_copy(update={"fold_policy": FoldPolicy.GATED, "t_s": 5}).train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        result = dual_loss(model, params, prepared, 9, config, schedule, np.random.default_rng(0), trainable)
        assert result.t_inp is None
        assert result.l_inp == 0.0
        assert result.loss == result.l_ref

    def test_reference_noise_independent_of_input_branch(self, tiny_config, prepared):
        folded = tiny_config.train_config()
        gated = tiny_config.model_copy(update={"fold_policy": FoldPolicy.GATED, "t_s": 1}).train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        a = dual_loss(model, params, prepared, 19, folded, schedule, np.random.default_rng(4), [])
        b = dual_loss(model, params, prepared, 19, gated, schedule, np.random.default_rng(4), [])
        assert a.l_ref == b.l_ref

    def test_fresh_adapter_projections_receive_gradient(self, tiny_config, prepared):
        config = tiny_config.train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        result = dual_loss(model, params, prepared, 10, config, schedule, np.random.default_rng(0), trainable)
        assert np.abs(result.grads["adapter.proj_h.0.w"]).sum() > 0.0
        # encoders sit behind zero projections
        assert not result.grads["adapter.col.stem.w"].any()

    def test_schedule_mismatch(self, tiny_config, prepared):
        model, params, trainable, _ = _setup(tiny_config)
        with pytest.raises(TrainingError):
            dual_loss(
                model, params, prepared, 1, tiny_config.train_config(), build_schedule(7), np.random.default_rng(0), []
            )


class TestTrainStep:
    def test_batch_indices_depend_only_on_seed_and_step(self):
        assert np.array_equal(batch_indices(1, 5, 10, 4), batch_indices(1, 5, 10, 4))
        assert batch_indices(1, 5, 10, 64).max() < 10

    def test_empty_batch(self, tiny_config):
        model, params, trainable, schedule = _setup(tiny_config)
        with pytest.raises(TrainingError):
            train_step(model, TrainState(params=params), [], tiny_config.train_config(), schedule, trainable)

    def test_thread_count_does_not_change_result(self, tiny_config, prepared):
        config = tiny_config.train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        batch = [prepared, prepared, prepared]
        serial, m1 = train_step(model, TrainState(params=params), batch, config, schedule, trainable, num_threads=1)
        threaded, m2 = train_step(model, TrainState(params=params), batch, config, schedule, trainable, num_threads=3)
        assert m1 == m2
        assert serial.step == threaded.step == 1
        for name in params:
            assert np.array_equal(serial.params[name], threaded.params[name]), name

    def test_zero_weight_trajectory_matches_reference_only(self, tiny_config, prepared):
        config = tiny_config.model_copy(update={"lambda_": 0.0}).train_config()
        model, params, trainable, schedule = _setup(tiny_config)
        batch = [prepared, prepared]
        dual, reference = TrainState(params=params), TrainState(params=params)
        for _ in range(3):
            dual, dual_metrics = train_step(model, dual, batch, config, schedule, trainable)
            reference, reference_metrics = train_step(
                model, reference, batch, config, schedule, trainable, reference_only=True
            )
            assert dual_metrics.l_ref == reference_metrics.l_ref
        assert dual.step == reference.step == 3
        for name in params:
            assert np.array_equal(dual.params[name], reference.params[name]), name

    def test_frozen_text_tables_stay_fixed(self, tiny_config, prepared):
        config = tiny_config.model_copy(update={"freeze_text_tables": True}).train_config()
        model, params, _, schedule = _setup(tiny_config)
        trainable = model.trainable_names(params, freeze_text_tables=True)
        state, _ = train_step(model, TrainState(params=params), [prepared], config, schedule, trainable)
        for name in TEXT_TABLES:
            assert name not in trainable
            assert np.array_equal(state.params[name], params[name])


class TestDualTrainer:
    def test_run_writes_artifacts(self, tiny_config, prepared, tmp_path):
        out = tmp_path / "train"
        result = DualTrainer(tiny_config, out, num_threads=1).run([prepared])
        assert result.state.step == tiny_config.steps
        assert result.checkpoint_path == out / FINAL_CHECKPOINT
        assert (out / "config.txt").exists()
        assert (out / "ckpt_000001.ckpt").exists()
        header = (out / "metrics.csv").read_text().splitlines()[0]
        assert header == ",".join(METRICS_HEADER)
        assert [m.step for m in read_metrics(result.metrics_path)] == [1, 2]
        assert CheckpointRepository().load(result.checkpoint_path).step == 2

    def test_empty_corpus(self, tiny_config, tmp_path):
        with pytest.raises(TrainingError):
            DualTrainer(tiny_config, tmp_path, num_threads=1).run([])

    def test_resume_replays_uninterrupted_run(self, tiny_config, prepared, tmp_path):
        corpus = tiny_config.corpus_config()
        other = prepare_sample(make_triplet(render_image(1, corpus), render_image(1 + len(SEMANTIC_KEYS), corpus)))
        samples = [prepared, other]
        config = tiny_config.model_copy(update={"steps": 3})

        straight = DualTrainer(config, tmp_path / "straight", num_threads=1).run(samples)
        DualTrainer(tiny_config, tmp_path / "first", num_threads=1).run(samples)
        resumed_config = config.model_copy(update={"resume": str(tmp_path / "first" / "ckpt_000002.ckpt")})
        resumed = DualTrainer(resumed_config, tmp_path / "first", num_threads=1).run(samples)

        assert resumed.state.step == 3
        for name, value in straight.state.params.items():
            assert np.array_equal(resumed.state.params[name], value), name
        assert [m.step for m in read_metrics(resumed.metrics_path)] == [1, 2, 3]
