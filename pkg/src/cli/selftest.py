"""
Built-in self-tests behind ``selftest grad`` and ``selftest diffusion``.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.core.config import RunConfig
from src.core.logging_config import get_logger
from src.diffusion.schedule import build_schedule, forward_noise
from src.numerics.gradcheck import GradCheckReport, compare_gradients, finite_diff_grad, sample_coordinates
from src.numerics.tensor import Tensor, as_tensors, precision
from src.pairing.corpus import render_image
from src.pairing.pairs import make_triplet
from src.pairing.scenes import SEMANTIC_KEYS
from src.training.dual_loss import PreparedSample, dual_loss, prepare_sample
from src.training.model import DenoiserModel

logger = get_logger(__name__)

# (relative tolerance, relative-error floor) of the analytic gradient against 64-bit central differences
GRAD_TOLERANCES = {"float64": (1e-3, 1e-6), "float32": (1e-3, 1e-4)}
MOMENT_DRAWS = 100_000
MOMENT_TOLERANCE = 0.01


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)


def selftest_sample(config: RunConfig) -> PreparedSample:
    """A prepared triplet of two fresh renders of the same scene class."""
    corpus = config.corpus_config()
    source = render_image(0, corpus)
    reference = render_image(len(SEMANTIC_KEYS), corpus)
    return prepare_sample(make_triplet(source, reference))


def selftest_timesteps(T: int, t_s: int) -> List[int]:
    """Timesteps at which gradients are checked: the ends of the chain and the fold threshold."""
    return sorted({1, t_s, T})


def gradient_selftest(
    config: RunConfig,
    probes_per_param: int = 2,
    h: float = 1e-5,
    timesteps: Optional[Sequence[int]] = None,
    precisions: Sequence[str] = ("float64", "float32"),
) -> Dict[str, GradCheckReport]:
    """
    Compare analytic dual-loss gradients with central differences.

    Central differences always run in 64-bit. The analytic side runs once per
    precision and timestep, so a 32-bit backward pass is checked against the
    64-bit reference too. Timesteps default to 1, t_s and T, which covers
    both sides of the fold threshold whenever t_s < T.

    The zero-initialised projections are perturbed first so gradients reach
    every adapter tensor.

    Returns:
        dict: ``"<precision>/t<t>"`` -> report
    """
    model = DenoiserModel.from_config(config)
    train_config = config.train_config()
    schedule = build_schedule(*config.schedule_args())
    rng = np.random.default_rng([config.seed, 7])
    params = {name: value.astype(np.float64) for name, value in model.init_params(config.seed).items()}
    for name in params:
        if name.startswith("adapter.proj_"):
            params[name] = rng.normal(0.0, 0.05, size=params[name].shape)
    trainable = model.trainable_names(params, train_config.freeze_text_tables)
    sample = selftest_sample(config)
    shape = sample.x_ref.shape
    noise = (rng.standard_normal(shape), rng.standard_normal(shape))
    coords = sample_coordinates({n: params[n] for n in trainable}, probes_per_param, rng)
    steps = list(timesteps) if timesteps is not None else selftest_timesteps(train_config.T, train_config.t_s)

    def loss_at(t: int, values: Dict[str, np.ndarray], names: List[str]):
        return dual_loss(model, values, sample, t, train_config, schedule, np.random.default_rng(0), names, noise=noise)

    reports: Dict[str, GradCheckReport] = {}
    for t in steps:
        with precision(np.float64):
            numeric = finite_diff_grad(lambda values: loss_at(t, values, []).loss, params, h=h, coords=coords)
        for name in precisions:
            dtype = np.dtype(name).type
            tolerance, floor = GRAD_TOLERANCES[name]
            with precision(dtype):
                analytic = loss_at(t, {n: v.astype(dtype) for n, v in params.items()}, trainable).grads
            report = compare_gradients(analytic, numeric, coords, tolerance, floor=floor)
            reports[f"{name}/t{t}"] = report
            logger.info(
                "gradient_selftest_completed",
                precision=name,
                t=t,
                passed=report.passed,
                max_relative_error=report.max_relative_error,
                probed=report.probed,
                worst=report.worst(3),
            )
    return reports


def schedule_checks(config: RunConfig) -> List[CheckResult]:
    T, beta_start, beta_end = config.schedule_args()
    schedule = build_schedule(T, beta_start, beta_end)
    bars = schedule.alpha_bars[1:]
    running = 1.0
    for t in range(1, T + 1):
        running *= 1.0 - schedule.betas[t]
    relative = abs(schedule.alpha_bar(T) - running) / running
    return [
        CheckResult("alpha_bar_strictly_decreasing", bool(np.all(np.diff(bars) < 0))),
        CheckResult(
            "alpha_bar_1_equals_one_minus_beta_1",
            schedule.alpha_bar(1) == 1.0 - schedule.beta(1),
            {"alpha_bar_1": schedule.alpha_bar(1), "beta_1": schedule.beta(1)},
        ),
        CheckResult("alpha_bar_T_matches_running_product", relative < 1e-9, {"relative_error": relative}),
    ]


def moment_checks(config: RunConfig, x0_value: float = 0.5) -> List[CheckResult]:
    """
    Monte Carlo mean and variance of x_t at three timesteps spread over [1, T].

    Moments must match the affine image of the drawn noise within 1% and the
    population moments within five standard errors.
    """
    T = config.T
    schedule = build_schedule(*config.schedule_args())
    rng = np.random.default_rng([config.seed, 11])
    results = []
    for fraction in (0.01, 0.5, 0.99):
        t = min(T, max(1, round(fraction * T)))
        eps = rng.standard_normal(MOMENT_DRAWS)
        x_t = forward_noise(np.full(MOMENT_DRAWS, x0_value), t, eps, schedule)
        alpha_bar = schedule.alpha_bar(t)
        std = np.sqrt(1.0 - alpha_bar)
        drawn_mean = np.sqrt(alpha_bar) * x0_value + std * eps.mean()
        drawn_var = (1.0 - alpha_bar) * eps.var()
        mean_error = abs(x_t.mean() - np.sqrt(alpha_bar) * x0_value)
        var_error = abs(x_t.var() - (1.0 - alpha_bar))
        passed = (
            abs(x_t.mean() - drawn_mean) <= MOMENT_TOLERANCE * max(abs(drawn_mean), std)
            and abs(x_t.var() - drawn_var) <= MOMENT_TOLERANCE * drawn_var
            and mean_error <= 5.0 * std / np.sqrt(MOMENT_DRAWS)
            and var_error <= 5.0 * (1.0 - alpha_bar) * np.sqrt(2.0 / MOMENT_DRAWS)
        )
        results.append(
            CheckResult(
                f"forward_moments_t{t}",
                bool(passed),
                {"mean": float(x_t.mean()), "var": float(x_t.var()), "alpha_bar": alpha_bar},
            )
        )
    return results


def zero_init_check(config: RunConfig) -> CheckResult:
    """Freshly initialised model predicts bit-identical noise with and without control."""
    model = DenoiserModel.from_config(config)
    tensors = as_tensors(model.init_params(config.seed))
    sample = selftest_sample(config)
    rng = np.random.default_rng([config.seed, 13])
    x_t = rng.standard_normal(sample.x_inp.shape).astype(np.float32)
    cond = model.control(tensors, sample.hsv, sample.contour, [sample.assessment])
    args = (Tensor(x_t), [config.T // 2], [sample.caption_id], Tensor(sample.x_inp))
    with_cond = model.predict(tensors, *args, cond).data
    without = model.predict(tensors, *args, None).data
    return CheckResult("zero_init_identity", bool(np.array_equal(with_cond, without)))


def diffusion_selftest(config: RunConfig) -> List[CheckResult]:
    results = schedule_checks(config) + moment_checks(config) + [zero_init_check(config)]
    for result in results:
        logger.info("diffusion_check", name=result.name, passed=result.passed, **result.detail)
    return results
