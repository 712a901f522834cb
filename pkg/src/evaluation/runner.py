"""
Sampling and scoring of held-out triplets.

For every test input the control signal is built from the input's own maps
and assessment, and the input fills the clean-image slot of the denoiser.
Sampling noise for a batch starting at position ``p`` under seed ``s`` comes
from ``default_rng([s, p])``, so outputs do not depend on thread count. With
``deterministic`` off, outputs and rows are collected in completion order,
so row order, the null-SCS pairing and the last bits of the summary means
may change between runs.
"""

import csv
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextvars import copy_context
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np

from src.core.config import EvalConfig, MapMode, RunConfig, get_num_threads
from src.core.exceptions import EvaluationError
from src.core.logging_config import LoggerMixin, get_logger
from src.diffusion.pixels import encode_images
from src.diffusion.sampler import ancestral_sample
from src.diffusion.schedule import build_schedule
from src.evaluation.report import EvalReport, EvalRow, build_report, write_report
from src.evaluation.scores import pas_detail, scs_detail
from src.numerics.tensor import as_tensors
from src.pairing.pairs import Triplet
from src.pairing.scenes import CAPTION_IDS
from src.persistence.checkpoint import Checkpoint, check_compatible
from src.persistence.corpus_repository import write_png
from src.training.model import DenoiserModel

logger = get_logger(__name__)

Item = TypeVar("Item")
Result = TypeVar("Result")


@dataclass(frozen=True)
class SampledOutput:
    """Generated image for one test triplet under one seed."""

    triplet: Triplet
    seed: int
    image: np.ndarray


def run_ordered(
    work: Callable[[Item], Result], items: Sequence[Item], num_threads: int, deterministic: bool = True
) -> List[Result]:
    """
    Map ``work`` over ``items`` on a thread pool.

    Deterministic mode returns results in item order; otherwise in completion
    order, so downstream reductions may change with scheduling.
    """
    if num_threads <= 1 or len(items) <= 1:
        return [work(item) for item in items]
    with ThreadPoolExecutor(max_workers=num_threads) as pool:
        futures = [pool.submit(copy_context().run, work, item) for item in items]
        if deterministic:
            return [future.result() for future in futures]
        return [future.result() for future in as_completed(futures)]


def derangement(n: int) -> List[int]:
    """Fixed permutation without fixed points (cyclic shift by one)."""
    return [(i + 1) % n for i in range(n)]


class Sampler(LoggerMixin):
    """Runs the conditioned reverse chain of a trained checkpoint."""

    def __init__(self, checkpoint: Checkpoint, num_sample_steps: int, batch_size: int = 16):
        self.config = checkpoint.config
        self.model = DenoiserModel.from_config(checkpoint.config)
        check_compatible(checkpoint.params, self.model.init_params(checkpoint.config.seed))
        self.tensors = as_tensors(checkpoint.params)
        self.schedule = build_schedule(*checkpoint.config.schedule_args())
        self.num_sample_steps = num_sample_steps
        self.batch_size = batch_size
        self.mode = MapMode(checkpoint.config.map_mode)

    def sample_batch(self, triplets: Sequence[Triplet], seed: int, position: int) -> np.ndarray:
        """Outputs (N, H, W, 3) in [0, 1] for a batch of triplets."""
        images = np.stack([t.input_image for t in triplets])
        cond = self.model.control_from_images(self.tensors, images, [t.assessment for t in triplets], self.mode)
        return ancestral_sample(
            self.tensors,
            self.model.unet,
            self.schedule,
            self.num_sample_steps,
            [CAPTION_IDS[t.semantic_key] for t in triplets],
            encode_images(images),
            cond,
            seed,
            rng=np.random.default_rng([seed, position]),
        )

    def sample(
        self, triplets: Sequence[Triplet], seed: int, num_threads: int = 1, deterministic: bool = True
    ) -> List[SampledOutput]:
        """Outputs for every triplet; in input order when ``deterministic``, else batch completion order."""
        starts = list(range(0, len(triplets), self.batch_size))

        def work(start: int) -> List[SampledOutput]:
            chunk = triplets[start : start + self.batch_size]
            images = self.sample_batch(chunk, seed, start)
            return [SampledOutput(triplet=t, seed=seed, image=img) for t, img in zip(chunk, images)]

        outputs = [output for batch in run_ordered(work, starts, num_threads, deterministic) for output in batch]
        self.logger.info("sampling_completed", seed=seed, count=len(outputs), steps=self.num_sample_steps)
        return outputs


def write_samples(outputs: Sequence[SampledOutput], out_dir: Path) -> Path:
    """PNG per output plus ``samples.csv`` with ``id,seed,path``."""
    out_dir = Path(out_dir)
    index = out_dir / "samples.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    with index.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("id", "seed", "path"))
        for output in outputs:
            relative = Path("samples") / f"{output.triplet.input_id:06d}_s{output.seed}.png"
            write_png(out_dir / relative, output.image)
            writer.writerow((output.triplet.input_id, output.seed, relative.as_posix()))
    return index


def score_outputs(
    outputs: Sequence[SampledOutput], num_threads: int = 1, deterministic: bool = True
) -> List[EvalRow]:
    """PAS of input and output, SCS of output against its input; in output order when ``deterministic``."""

    def work(output: SampledOutput) -> EvalRow:
        triplet = output.triplet
        pas_in = pas_detail(triplet.input_image)
        pas_out = pas_detail(output.image)
        scs = scs_detail(output.image, triplet.input_image, triplet.input_mask)
        return EvalRow(
            id=triplet.input_id,
            pas_in=pas_in.score,
            pas_out=pas_out.score,
            scs=scs.score,
            seed=output.seed,
            degenerate=pas_out.degenerate or scs.degenerate,
        )

    return run_ordered(work, outputs, num_threads, deterministic)


def null_scs(outputs: Sequence[SampledOutput]) -> Optional[float]:
    """Mean SCS of outputs scored against a derangement of their inputs."""
    if len(outputs) < 2:
        return None
    perm = derangement(len(outputs))
    scores = [
        scs_detail(o.image, outputs[j].triplet.input_image, outputs[j].triplet.input_mask).score
        for o, j in zip(outputs, perm)
    ]
    return float(np.mean(scores))


class Evaluator(LoggerMixin):
    """Samples and scores a set of test triplets for every evaluation seed."""

    def __init__(
        self,
        eval_config: EvalConfig,
        checkpoint: Optional[Checkpoint] = None,
        checkpoint_path: str = "",
        num_threads: Optional[int] = None,
    ):
        if checkpoint is None and not eval_config.identity_baseline:
            raise EvaluationError(
                message="Evaluation requires a checkpoint unless the identity baseline is requested",
                error_code="CHECKPOINT_REQUIRED",
            )
        self.eval_config = eval_config
        self.checkpoint = checkpoint
        self.checkpoint_path = checkpoint_path
        self.num_threads = num_threads if num_threads is not None else get_num_threads()
        self.sampler = (
            Sampler(checkpoint, eval_config.num_sample_steps, eval_config.sample_batch_size)
            if checkpoint is not None and not eval_config.identity_baseline
            else None
        )

    def outputs(self, triplets: Sequence[Triplet], seed: int) -> List[SampledOutput]:
        if self.sampler is None:
            return [SampledOutput(triplet=t, seed=seed, image=t.input_image) for t in triplets]
        return self.sampler.sample(triplets, seed, self.num_threads, self.eval_config.deterministic)

    def run(self, triplets: Sequence[Triplet], config: Optional[RunConfig] = None) -> EvalReport:
        """
        Evaluate ``triplets`` under every seed of the eval config.

        Raises:
            EvaluationError: If there are no triplets
            CheckpointMismatchError: If the checkpoint does not fit its own config
        """
        if not triplets:
            raise EvaluationError(message="No test triplets to evaluate", error_code="EMPTY_TEST_SET")
        seeds = list(self.eval_config.seeds)
        rows: List[EvalRow] = []
        nulls: List[float] = []
        for seed in seeds:
            outputs = self.outputs(triplets, seed)
            rows.extend(score_outputs(outputs, self.num_threads, self.eval_config.deterministic))
            null = null_scs(outputs)
            if null is not None:
                nulls.append(null)
        report = build_report(
            rows,
            seeds,
            num_sample_steps=self.eval_config.num_sample_steps,
            identity_baseline=self.eval_config.identity_baseline,
            checkpoint=self.checkpoint_path,
            config_text=config.to_config_text() if config is not None else "",
            mean_scs_null=float(np.mean(nulls)) if nulls else None,
        )
        self.logger.info(
            "evaluation_completed",
            count=len(report.rows),
            mean_pas_in=report.mean_pas_in,
            mean_pas_out=report.mean_pas_out,
            mean_scs=report.mean_scs,
            mean_scs_null=report.mean_scs_null,
        )
        return report


def run_eval(
    checkpoint: Optional[Checkpoint],
    triplets: Sequence[Triplet],
    eval_config: EvalConfig,
    out_dir: Optional[Path] = None,
    config: Optional[RunConfig] = None,
    checkpoint_path: str = "",
    num_threads: Optional[int] = None,
) -> EvalReport:
    """Evaluate and optionally write ``eval.csv`` / ``eval_summary.json``."""
    report = Evaluator(eval_config, checkpoint, checkpoint_path, num_threads).run(triplets, config)
    if out_dir is not None:
        paths: Dict[str, Path] = write_report(report, out_dir)
        if config is not None:
            config.write(Path(out_dir))
        logger.info("eval_report_written", **{name: str(path) for name, path in paths.items()})
    return report
