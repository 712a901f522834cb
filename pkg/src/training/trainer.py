"""
Training step and training loop.

Per-sample randomness is keyed on (seed, step, index), and batch composition
on (seed, step), so a run resumed from a checkpoint at step k replays exactly
the draws the uninterrupted run would have made.
"""

import csv
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextvars import copy_context
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.core.config import RunConfig, TrainConfig, get_num_threads
from src.core.exceptions import NonFiniteError, TrainingDivergedError, TrainingError
from src.core.logging_config import LoggerMixin, bind_step
from src.diffusion.schedule import NoiseSchedule, build_schedule
from src.numerics.initializers import Params
from src.numerics.optim import AdamWState, adamw_step
from src.persistence.checkpoint import Checkpoint, CheckpointRepository, check_compatible
from src.training.dual_loss import LossResult, PreparedSample, dual_loss
from src.training.model import DenoiserModel

METRICS_FILE = "metrics.csv"
METRICS_HEADER = ("step", "loss", "l_ref", "l_inp", "lr")
FINAL_CHECKPOINT = "final.ckpt"


@dataclass
class TrainState:
    """Parameters, optimizer moments and the number of completed steps."""

    params: Params
    optimizer: AdamWState = field(default_factory=AdamWState)
    step: int = 0


@dataclass(frozen=True)
class StepMetrics:
    step: int
    loss: float
    l_ref: float
    l_inp: float
    lr: float

    def row(self) -> List[str]:
        return [str(self.step), repr(self.loss), repr(self.l_ref), repr(self.l_inp), repr(self.lr)]


def batch_indices(seed: int, step: int, num_samples: int, batch_size: int) -> np.ndarray:
    """Sample indices of the batch used at ``step`` (with replacement)."""
    return np.random.default_rng([seed, step]).integers(0, num_samples, size=batch_size)


def sample_rng(seed: int, step: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, index])


def _sample_loss(
    model: DenoiserModel,
    params: Params,
    sample: PreparedSample,
    index: int,
    step: int,
    config: TrainConfig,
    schedule: NoiseSchedule,
    trainable: Sequence[str],
    reference_only: bool,
) -> LossResult:
    rng = sample_rng(config.seed, step, index)
    t = int(rng.integers(1, config.T + 1))
    return dual_loss(model, params, sample, t, config, schedule, rng, trainable, reference_only=reference_only)


def _accumulate(results: Sequence[LossResult]) -> Dict[str, np.ndarray]:
    total: Dict[str, np.ndarray] = {}
    for result in results:
        for name, grad in result.grads.items():
            total[name] = total[name] + grad if name in total else grad.copy()
    inverse = 1.0 / len(results)
    return {name: (grad * inverse).astype(grad.dtype, copy=False) for name, grad in total.items()}


def train_step(
    model: DenoiserModel,
    state: TrainState,
    batch: Sequence[PreparedSample],
    config: TrainConfig,
    schedule: NoiseSchedule,
    trainable: Sequence[str],
    num_threads: int = 1,
    reference_only: bool = False,
) -> Tuple[TrainState, StepMetrics]:
    """
    One AdamW update over the mean dual loss of ``batch``.

    In deterministic mode per-sample gradients are reduced in batch order
    regardless of which worker finishes first; otherwise in completion order.

    Args:
        model: Architecture
        state: Current training state (not mutated)
        batch: Prepared samples
        config: Training options
        schedule: Noise schedule
        trainable: Parameter names to update
        num_threads: Worker threads for per-sample forward/backward
        reference_only: Train on the reference branch only

    Returns:
        tuple: (new state, metrics of this step)

    Raises:
        TrainingDivergedError: If any loss or forward value is non-finite
    """
    if not batch:
        raise TrainingError(message="Training batch is empty", error_code="EMPTY_BATCH")
    step = state.step

    def work(index: int) -> LossResult:
        return _sample_loss(
            model, state.params, batch[index], index, step, config, schedule, trainable, reference_only
        )

    try:
        if num_threads <= 1 or len(batch) == 1:
            results = [work(i) for i in range(len(batch))]
        else:
            with ThreadPoolExecutor(max_workers=num_threads) as pool:
                futures = [pool.submit(copy_context().run, work, i) for i in range(len(batch))]
                if config.deterministic:
                    results = [future.result() for future in futures]
                else:
                    results = [future.result() for future in as_completed(futures)]
    except NonFiniteError as e:
        raise TrainingDivergedError(step + 1, e.details) from e

    loss = float(np.mean([r.loss for r in results]))
    l_ref = float(np.mean([r.l_ref for r in results]))
    l_inp = float(np.mean([r.l_inp for r in results]))
    if not np.isfinite(loss):
        raise TrainingDivergedError(step + 1, {"loss": loss})

    params, optimizer = adamw_step(
        state.params,
        _accumulate(results),
        state.optimizer,
        lr=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )
    metrics = StepMetrics(step=step + 1, loss=loss, l_ref=l_ref, l_inp=l_inp, lr=config.learning_rate)
    return TrainState(params=params, optimizer=optimizer, step=step + 1), metrics


@dataclass
class TrainResult:
    state: TrainState
    checkpoint_path: Path
    metrics_path: Path
    history: List[StepMetrics]


class DualTrainer(LoggerMixin):
    """
    Drives ``train_step`` over a prepared corpus.

    Writes ``metrics.csv``, periodic ``ckpt_<step>.ckpt`` files,
    ``final.ckpt`` and ``config.txt`` under the output directory.
    """

    def __init__(
        self,
        config: RunConfig,
        out_dir: Path,
        num_threads: Optional[int] = None,
        checkpoints: Optional[CheckpointRepository] = None,
        reference_only: bool = False,
        show_progress: bool = False,
    ):
        self.config = config
        self.train_config = config.train_config()
        self.out_dir = Path(out_dir)
        self.num_threads = num_threads if num_threads is not None else get_num_threads()
        self.checkpoints = checkpoints or CheckpointRepository()
        self.reference_only = reference_only
        self.show_progress = show_progress
        self.model = DenoiserModel.from_config(config)
        self.schedule = build_schedule(*config.schedule_args())

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / METRICS_FILE

    def initial_state(self) -> TrainState:
        """
        Fresh, resumed or warm-started state.

        ``resume`` restores parameters, optimizer moments and the step
        counter; ``warm_start`` restores parameters only.

        Raises:
            CheckpointFormatError: If a checkpoint cannot be read
            CheckpointMismatchError: If its parameters do not fit the model
        """
        fresh = self.model.init_params(self.config.seed)
        if self.config.resume:
            checkpoint = self.checkpoints.load(Path(self.config.resume))
            check_compatible(checkpoint.params, fresh)
            self.logger.info("training_resumed", path=self.config.resume, step=checkpoint.step)
            return TrainState(params=checkpoint.params, optimizer=checkpoint.optimizer, step=checkpoint.step)
        if self.config.warm_start:
            checkpoint = self.checkpoints.load(Path(self.config.warm_start))
            check_compatible(checkpoint.params, fresh)
            self.logger.info("training_warm_started", path=self.config.warm_start)
            return TrainState(params=dict(checkpoint.params))
        return TrainState(params=fresh)

    def checkpoint(self, state: TrainState) -> Checkpoint:
        return Checkpoint(config=self.config, params=state.params, optimizer=state.optimizer, step=state.step)

    def _open_metrics(self, start_step: int):
        """Open the metrics log, keeping only rows up to ``start_step`` when resuming."""
        kept: List[List[str]] = []
        if start_step > 0 and self.metrics_path.exists():
            with self.metrics_path.open(newline="", encoding="utf-8") as handle:
                rows = list(csv.reader(handle))
            kept = [row for row in rows[1:] if row and int(row[0]) <= start_step]
        handle = self.metrics_path.open("w", newline="", encoding="utf-8")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        writer.writerows(kept)
        return handle, writer

    def run(self, samples: Sequence[PreparedSample]) -> TrainResult:
        """
        Train until ``steps`` optimizer updates have been applied.

        Raises:
            TrainingError: If the corpus is empty
            TrainingDivergedError: On a non-finite loss
            CheckpointFormatError: If a checkpoint cannot be written
        """
        if not samples:
            raise TrainingError(message="Training corpus is empty", error_code="EMPTY_CORPUS")
        config = self.train_config
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config.write(self.out_dir)

        state = self.initial_state()
        trainable = self.model.trainable_names(state.params, config.freeze_text_tables)
        history: List[StepMetrics] = []
        self.logger.info(
            "training_started",
            start_step=state.step,
            steps=config.steps,
            num_samples=len(samples),
            num_trainable=len(trainable),
            threads=self.num_threads,
        )

        handle, writer = self._open_metrics(state.step)
        try:
            progress = tqdm(
                total=config.steps, initial=min(state.step, config.steps), disable=not self.show_progress, desc="train"
            )
            while state.step < config.steps:
                indices = batch_indices(config.seed, state.step, len(samples), config.batch_size)
                batch = [samples[int(i)] for i in indices]
                state, metrics = train_step(
                    self.model,
                    state,
                    batch,
                    config,
                    self.schedule,
                    trainable,
                    num_threads=self.num_threads,
                    reference_only=self.reference_only,
                )
                bind_step(state.step)
                history.append(metrics)
                progress.update(1)
                if state.step % config.log_interval == 0:
                    writer.writerow(metrics.row())
                    handle.flush()
                    self.logger.info(
                        "train_step_completed",
                        step=state.step,
                        loss=metrics.loss,
                        l_ref=metrics.l_ref,
                        l_inp=metrics.l_inp,
                    )
                if state.step % config.checkpoint_interval == 0:
                    self.checkpoints.save(self.checkpoint(state), self.out_dir / f"ckpt_{state.step:06d}.ckpt")
            progress.close()
        finally:
            handle.close()

        final_path = self.checkpoints.save(self.checkpoint(state), self.out_dir / FINAL_CHECKPOINT)
        if self.config.plots:
            plot_loss(self.metrics_path, self.out_dir / "loss.png")
        self.logger.info("training_completed", step=state.step, checkpoint=str(final_path))
        return TrainResult(state=state, checkpoint_path=final_path, metrics_path=self.metrics_path, history=history)


def train_loop(
    config: RunConfig,
    samples: Sequence[PreparedSample],
    out_dir: Path,
    num_threads: Optional[int] = None,
) -> TrainResult:
    """Functional entry point around ``DualTrainer``."""
    return DualTrainer(config, out_dir, num_threads=num_threads).run(samples)


def read_metrics(path: Path) -> List[StepMetrics]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [
            StepMetrics(
                step=int(row["step"]),
                loss=float(row["loss"]),
                l_ref=float(row["l_ref"]),
                l_inp=float(row["l_inp"]),
                lr=float(row["lr"]),
            )
            for row in reader
        ]


def plot_loss(metrics_path: Path, out_path: Path) -> Path:
    """Render the logged loss components to a PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_metrics(metrics_path)
    steps = [r.step for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.loss for r in rows], label="loss")
    ax.plot(steps, [r.l_ref for r in rows], label="l_ref", alpha=0.7)
    ax.plot(steps, [r.l_inp for r in rows], label="l_inp", alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("mse")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path
