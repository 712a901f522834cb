"""
Dual-branch supervision loss.

    L = L_ref + λ · L_inp

L_ref denoises the reference image at t with the reference as clean
conditioning; L_inp denoises the input image at the folded timestep with the
input as clean conditioning. Both branches share one control signal derived
from the input image's maps and assessment.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.conditioning.assessment import Assessment
from src.conditioning.maps import aesthetic_maps
from src.core.config import MapMode, TrainConfig
from src.core.exceptions import TrainingError
from src.diffusion.pixels import encode_images
from src.diffusion.schedule import NoiseSchedule, forward_noise
from src.numerics.ops import add, mse, scale
from src.numerics.tensor import Tape, Tensor, as_tensors, backpropagate
from src.pairing.pairs import Triplet
from src.pairing.scenes import CAPTION_IDS
from src.training.fold import fold_timestep
from src.training.model import DenoiserModel


@dataclass(frozen=True)
class PreparedSample:
    """Model-space images and control maps of one triplet, computed once."""

    x_inp: np.ndarray
    x_ref: np.ndarray
    hsv: np.ndarray
    contour: np.ndarray
    caption_id: int
    assessment: Assessment


def prepare_sample(triplet: Triplet) -> PreparedSample:
    hsv, contour = aesthetic_maps(triplet.input_image[None])
    return PreparedSample(
        x_inp=encode_images(triplet.input_image),
        x_ref=encode_images(triplet.reference_image),
        hsv=hsv,
        contour=contour,
        caption_id=CAPTION_IDS[triplet.semantic_key],
        assessment=triplet.assessment,
    )


@dataclass
class LossResult:
    """Scalar losses of one sample and the gradients of the total."""

    loss: float
    l_ref: float
    l_inp: float
    t: int
    t_inp: Optional[int]
    grads: Dict[str, np.ndarray]


def dual_loss(
    model: DenoiserModel,
    params: Mapping[str, np.ndarray],
    sample: PreparedSample,
    t: int,
    config: TrainConfig,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    trainable: Sequence[str],
    noise: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    reference_only: bool = False,
) -> LossResult:
    """
    Loss and gradients of one triplet at timestep ``t``.

    ε_ref and then ε_inp are always drawn from ``rng``, even when the input
    branch is skipped, so streams stay aligned across configurations.

    Args:
        model: Architecture
        params: Current parameters
        sample: Prepared triplet
        t: Timestep in [1, T]
        config: Training options (t_s, λ, fold policy, map mode)
        schedule: Noise schedule with T == config.T
        rng: Noise source
        trainable: Names to differentiate
        noise: Explicit (ε_ref, ε_inp) overriding the draws
        reference_only: Drop the input branch entirely

    Raises:
        TrainingError: If the schedule does not match the config
        NonFiniteError: If a forward value is not finite
    """
    if schedule.T != config.T:
        raise TrainingError(
            message=f"Schedule has T={schedule.T} but the training config has T={config.T}",
            error_code="SCHEDULE_MISMATCH",
            details={"schedule_T": schedule.T, "config_T": config.T},
        )
    shape = sample.x_ref.shape
    eps_ref = rng.standard_normal(shape).astype(np.float32)
    eps_inp = rng.standard_normal(shape).astype(np.float32)
    if noise is not None:
        eps_ref, eps_inp = noise
    t_inp = None if reference_only else fold_timestep(t, config.t_s, config.fold_policy, config.T)

    x_ref_t = forward_noise(sample.x_ref, t, eps_ref, schedule)
    x_inp_t = forward_noise(sample.x_inp, t_inp, eps_inp, schedule) if t_inp is not None else None
    mode = MapMode(config.map_mode)
    terms: Dict[str, Tensor] = {}

    def total(tensors: Mapping[str, Tensor]) -> Tensor:
        cond = model.control(tensors, sample.hsv, sample.contour, [sample.assessment], mode)
        caption = [sample.caption_id]
        pred_ref = model.predict(tensors, Tensor(x_ref_t), [t], caption, Tensor(sample.x_ref), cond)
        terms["ref"] = mse(pred_ref, Tensor(eps_ref))
        if x_inp_t is None:
            return terms["ref"]
        pred_inp = model.predict(tensors, Tensor(x_inp_t), [t_inp], caption, Tensor(sample.x_inp), cond)
        terms["inp"] = mse(pred_inp, Tensor(eps_inp))
        return add(terms["ref"], scale(terms["inp"], config.lambda_))

    tape = Tape()
    out = tape.evaluate(total, as_tensors(params, trainable))
    grads = backpropagate(tape)
    return LossResult(
        loss=out.item(),
        l_ref=terms["ref"].item(),
        l_inp=terms["inp"].item() if "inp" in terms else 0.0,
        t=t,
        t_inp=t_inp,
        grads=grads,
    )
