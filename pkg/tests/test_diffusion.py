import numpy as np
import pytest

from src.core.exceptions import PixelRangeError, ScheduleError, ShapeMismatchError, StepCountError, TimestepRangeError
from src.diffusion.pixels import decode_images, encode_images
from src.diffusion.sampler import ancestral_sample, run_chain
from src.diffusion.schedule import build_schedule, forward_noise, sampling_timesteps
from src.numerics.tensor import as_tensors
from src.training.model import DenoiserModel


class TestSchedule:
    def test_sentinel_and_first_step(self):
        schedule = build_schedule(1000)
        assert schedule.alpha_bar(0) == 1.0
        assert schedule.alpha_bar(1) == 1.0 - schedule.beta(1)
        assert schedule.beta(1) == pytest.approx(1e-4)
        assert schedule.beta(1000) == pytest.approx(0.02)

    def test_alpha_bar_strictly_decreasing(self):
        bars = build_schedule(1000).alpha_bars
        assert np.all(np.diff(bars[1:]) < 0)

    def test_alpha_bar_is_running_product(self):
        schedule = build_schedule(50, 1e-3, 0.05)
        expected = np.prod(1.0 - np.linspace(1e-3, 0.05, 50))
        assert schedule.alpha_bar(50) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("args", [(1,), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
    def test_invalid_schedules(self, args):
        with pytest.raises(ScheduleError):
            build_schedule(*args)

    def test_timestep_out_of_range(self):
        schedule = build_schedule(10)
        with pytest.raises(TimestepRangeError):
            schedule.beta(0)
        with pytest.raises(TimestepRangeError):
            schedule.alpha_bar(11)


class TestForwardNoise:
    def test_affine_in_noise(self):
        schedule = build_schedule(100)
        x0 = np.full((2, 3), 0.5)
        eps = np.arange(6, dtype=np.float64).reshape(2, 3)
        out = forward_noise(x0, 40, eps, schedule)
        bar = schedule.alpha_bar(40)
        np.testing.assert_allclose(out, np.sqrt(bar) * 0.5 + np.sqrt(1 - bar) * eps)

    def test_no_clamping(self):
        schedule = build_schedule(100)
        out = forward_noise(np.ones(4), 100, np.full(4, 10.0), schedule)
        assert np.all(out > 1.0)

    def test_errors(self):
        schedule = build_schedule(10)
        with pytest.raises(ShapeMismatchError):
            forward_noise(np.zeros(3), 1, np.zeros(4), schedule)
        with pytest.raises(TimestepRangeError):
            forward_noise(np.zeros(3), 0, np.zeros(3), schedule)


class TestSamplingTimesteps:
    def test_strided_descending(self):
        steps = sampling_timesteps(1000, 50)
        assert len(steps) == 50
        assert steps[0] == 1000 and steps[-1] == 20
        assert steps == sorted(steps, reverse=True)

    def test_full_chain(self):
        assert sampling_timesteps(5, 5) == [5, 4, 3, 2, 1]

    def test_single_step(self):
        assert sampling_timesteps(1000, 1) == [1000]

    @pytest.mark.parametrize("num_steps", [0, 11])
    def test_out_of_range(self, num_steps):
        with pytest.raises(StepCountError):
            sampling_timesteps(10, num_steps)


class TestPixels:
    def test_encode_layout_and_range(self):
        images = np.zeros((2, 4, 4, 3))
        images[..., 0] = 1.0
        x = encode_images(images)
        assert x.shape == (2, 3, 4, 4)
        assert x.dtype == np.float32
        assert np.all(x[:, 0] == 1.0) and np.all(x[:, 1] == -1.0)

    def test_single_image_gets_batch_axis(self):
        assert encode_images(np.zeros((4, 4, 3))).shape == (1, 3, 4, 4)

    def test_encode_rejects_out_of_range(self):
        with pytest.raises(PixelRangeError):
            encode_images(np.full((4, 4, 3), 1.5))
        with pytest.raises(PixelRangeError):
            encode_images(np.zeros((4, 4, 4)))

    def test_decode_clamps(self):
        x = np.array([[[[-3.0]], [[0.0]], [[3.0]]]])
        out = decode_images(x)
        assert out.shape == (1, 1, 1, 3)
        np.testing.assert_allclose(out[0, 0, 0], [0.0, 0.5, 1.0])


class TestSampler:
    def test_single_step_with_zero_prediction_rescales_noise(self):
        schedule = build_schedule(10)
        x_T = np.random.default_rng(0).standard_normal((1, 3, 2, 2))
        out = run_chain(lambda x, t: np.zeros_like(x), schedule, [10], x_T, np.random.default_rng(1))
        np.testing.assert_allclose(out, x_T / np.sqrt(schedule.alpha_bar(10)))

    def test_ancestral_sample_is_reproducible(self, tiny_config, prepared):
        model = DenoiserModel.from_config(tiny_config)
        tensors = as_tensors(model.init_params(tiny_config.seed))
        schedule = build_schedule(*tiny_config.schedule_args())
        args = (tensors, model.unet, schedule, 3, [prepared.caption_id], prepared.x_inp, None)
        first = ancestral_sample(*args, seed=5)
        second = ancestral_sample(*args, seed=5)
        other = ancestral_sample(*args, seed=6)
        assert first.shape == (1, 32, 32, 3)
        assert first.min() >= 0.0 and first.max() <= 1.0
        assert np.array_equal(first, second)
        assert not np.array_equal(first, other)

    def test_ancestral_sample_rejects_bad_step_count(self, tiny_config, prepared):
        model = DenoiserModel.from_config(tiny_config)
        tensors = as_tensors(model.init_params(0))
        schedule = build_schedule(*tiny_config.schedule_args())
        with pytest.raises(StepCountError):
            ancestral_sample(tensors, model.unet, schedule, 0, [prepared.caption_id], prepared.x_inp, None, seed=0)
