"""
Ablation runners: the t_s sweep and the conditioning-modality ablation.

Every cell trains a model for ``ablation_steps`` (optionally from a shared
warm start), evaluates it on the held-out triplets with the cell's seed and
records mean PAS and SCS. Grids are written as CSV; the directional
expectations are recorded in a JSON verdict file.
"""

import csv
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from src.conditioning.adapter import ControlSignal
from src.core.config import MapMode, RunConfig
from src.core.exceptions import BudgetExceededError, EvaluationError
from src.core.logging_config import LoggerMixin
from src.evaluation.runner import Evaluator
from src.numerics.tensor import as_tensors
from src.pairing.pairs import Triplet
from src.training.dual_loss import PreparedSample
from src.training.model import DenoiserModel
from src.training.trainer import DualTrainer

# Adjacent t_s cells may invert by at most this much SCS.
TS_INVERSION_TOLERANCE = 0.01
MAP_VARIANTS = (MapMode.FULL, MapMode.VISUAL_ONLY, MapMode.TEXT_ONLY)
VARIANT_LABELS = {
    MapMode.FULL: "full",
    MapMode.VISUAL_ONLY: "wo_t",
    MapMode.TEXT_ONLY: "wo_v",
}


class GridCell(BaseModel):
    """One trained and evaluated configuration."""

    variant: str
    seed: int
    mean_pas_in: float
    mean_pas_out: float
    mean_scs: float


class Expectation(BaseModel):
    name: str
    passed: bool
    detail: Dict[str, Any]


class Verdict(BaseModel):
    ablation: str
    expectations: List[Expectation]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.expectations)


def check_budget(cells: int, steps_per_cell: int, cap: int) -> None:
    """
    Raises:
        BudgetExceededError: If the grid needs more training steps than ``cap``
    """
    requested = cells * steps_per_cell
    if requested > cap:
        raise BudgetExceededError(requested, cap)


def withdrawn_parts(signal: ControlSignal) -> Dict[str, bool]:
    """Which modalities of an assembled signal are identically zero."""
    visual = all(not f.data.any() for f in signal.cond_h[0] + signal.cond_c[0])
    text = not signal.cond_h[1].data.any() and not signal.cond_c[1].data.any()
    return {"visual": visual, "text": text}


def verify_variant(config: RunConfig, sample: PreparedSample) -> Dict[str, bool]:
    """
    Assemble a control signal under ``config.map_mode`` and check the withdrawn modality is zero.

    Raises:
        EvaluationError: If a withdrawn modality carries non-zero values
    """
    model = DenoiserModel.from_config(config)
    tensors = as_tensors(model.init_params(config.seed))
    mode = MapMode(config.map_mode)
    signal = model.control(tensors, sample.hsv, sample.contour, [sample.assessment], mode)
    parts = withdrawn_parts(signal)
    broken = (mode == MapMode.TEXT_ONLY and not parts["visual"]) or (
        mode == MapMode.VISUAL_ONLY and not parts["text"]
    )
    if broken:
        raise EvaluationError(
            message=f"Control signal for {mode.value} still carries the withdrawn modality",
            error_code="VARIANT_SIGNAL",
            details={"mode": mode.value, **parts},
        )
    return parts


def with_overrides(config: RunConfig, **changes: Any) -> RunConfig:
    """Re-validated copy of ``config`` with ``changes`` applied."""
    values = config.model_dump()
    values.update(changes)
    return RunConfig.model_validate(values)


def write_grid(path: Path, cells: Sequence[GridCell], label: str) -> Path:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow((label, "seed", "mean_pas_in", "mean_pas_out", "mean_scs"))
        for cell in cells:
            writer.writerow(
                (cell.variant, cell.seed, repr(cell.mean_pas_in), repr(cell.mean_pas_out), repr(cell.mean_scs))
            )
    return path


def seed_means(cells: Sequence[GridCell], variant: str) -> Dict[str, float]:
    chosen = [c for c in cells if c.variant == variant]
    return {
        "pas": float(np.mean([c.mean_pas_out for c in chosen])),
        "scs": float(np.mean([c.mean_scs for c in chosen])),
    }


def ts_verdict(cells: Sequence[GridCell], ts_values: Sequence[int]) -> Verdict:
    """
    SCS should not decrease as t_s grows; one adjacent inversion within the
    tolerance is allowed, and the largest t_s must not fall below the smallest.
    """
    order = sorted(ts_values)
    means = [seed_means(cells, str(v))["scs"] for v in order]
    drops = [means[i] - means[i + 1] for i in range(len(means) - 1)]
    inversions = [d for d in drops if d > 0]
    monotone = len(inversions) == 0 or (len(inversions) == 1 and inversions[0] <= TS_INVERSION_TOLERANCE)
    return Verdict(
        ablation="ts",
        expectations=[
            Expectation(
                name="scs_largest_ts_at_least_smallest",
                passed=means[-1] >= means[0],
                detail={"ts": [order[0], order[-1]], "scs": [means[0], means[-1]]},
            ),
            Expectation(
                name="scs_nondecreasing_in_ts",
                passed=monotone,
                detail={"ts": order, "scs": means, "tolerance": TS_INVERSION_TOLERANCE},
            ),
        ],
    )


def map_verdict(cells: Sequence[GridCell]) -> Verdict:
    full = seed_means(cells, "full")
    without_text = seed_means(cells, "wo_t")
    without_visual = seed_means(cells, "wo_v")
    return Verdict(
        ablation="map",
        expectations=[
            Expectation(
                name="pas_full_at_least_wo_t",
                passed=full["pas"] >= without_text["pas"],
                detail={"full": full["pas"], "wo_t": without_text["pas"]},
            ),
            Expectation(
                name="pas_full_at_least_wo_v",
                passed=full["pas"] >= without_visual["pas"],
                detail={"full": full["pas"], "wo_v": without_visual["pas"]},
            ),
            Expectation(
                name="scs_wo_t_at_least_wo_v",
                passed=without_text["scs"] >= without_visual["scs"],
                detail={"wo_t": without_text["scs"], "wo_v": without_visual["scs"]},
            ),
        ],
    )


class AblationRunner(LoggerMixin):
    """Trains and evaluates every cell of an ablation grid."""

    def __init__(
        self,
        config: RunConfig,
        train_samples: Sequence[PreparedSample],
        test_triplets: Sequence[Triplet],
        out_dir: Path,
        num_threads: Optional[int] = None,
    ):
        if not train_samples or not test_triplets:
            raise EvaluationError(
                message="Ablations need both training samples and test triplets",
                error_code="EMPTY_ABLATION_DATA",
                details={"train": len(train_samples), "test": len(test_triplets)},
            )
        self.config = config
        self.train_samples = train_samples
        self.test_triplets = test_triplets
        self.out_dir = Path(out_dir)
        self.num_threads = num_threads

    def run_cell(self, label: str, seed: int, **changes: Any) -> GridCell:
        cell_dir = self.out_dir / f"{label}_seed{seed}"
        cell_config = with_overrides(
            self.config,
            seed=seed,
            steps=self.config.ablation_steps,
            eval_seeds=[seed],
            out_dir=str(cell_dir),
            resume=None,
            **changes,
        )
        verify_variant(cell_config, self.train_samples[0])
        trainer = DualTrainer(cell_config, cell_dir, num_threads=self.num_threads)
        result = trainer.run(self.train_samples)
        evaluator = Evaluator(
            cell_config.eval_config(),
            checkpoint=trainer.checkpoint(result.state),
            checkpoint_path=str(result.checkpoint_path),
            num_threads=self.num_threads,
        )
        report = evaluator.run(self.test_triplets, cell_config)
        self.logger.info("ablation_cell_completed", label=label, seed=seed, pas=report.mean_pas_out, scs=report.mean_scs)
        return GridCell(
            variant=label,
            seed=seed,
            mean_pas_in=report.mean_pas_in,
            mean_pas_out=report.mean_pas_out,
            mean_scs=report.mean_scs,
        )

    def _finish(self, name: str, label: str, cells: List[GridCell], verdict: Verdict) -> Verdict:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config.write(self.out_dir)
        write_grid(self.out_dir / f"ablation_{name}.csv", cells, label)
        (self.out_dir / f"ablation_{name}_verdict.json").write_text(verdict.model_dump_json(indent=2), encoding="utf-8")
        if self.config.plots:
            plot_grid(cells, self.out_dir / f"ablation_{name}.png", label)
        self.logger.info("ablation_completed", ablation=name, passed=verdict.passed)
        return verdict

    def ablation_ts(self, ts_values: Optional[Sequence[int]] = None, seeds: Optional[Sequence[int]] = None):
        """
        Train and evaluate one model per (t_s, seed); t_s order is kept in the CSV.

        Raises:
            BudgetExceededError: If the grid exceeds ``ablation_step_cap``
        """
        ts_values = list(ts_values or self.config.resolved_ts_values())
        seeds = list(seeds or self.config.ablation_seeds)
        check_budget(len(ts_values) * len(seeds), self.config.ablation_steps, self.config.ablation_step_cap)
        cells = [self.run_cell(str(value), seed, t_s=value) for value in ts_values for seed in seeds]
        return cells, self._finish("ts", "t_s", cells, ts_verdict(cells, ts_values))

    def ablation_map(self, seeds: Optional[Sequence[int]] = None):
        """
        Train and evaluate the full model, visual-only (w/o t) and text-only (w/o v) variants.

        Raises:
            BudgetExceededError: If the grid exceeds ``ablation_step_cap``
        """
        seeds = list(seeds or self.config.ablation_seeds)
        check_budget(len(MAP_VARIANTS) * len(seeds), self.config.ablation_steps, self.config.ablation_step_cap)
        cells = [
            self.run_cell(VARIANT_LABELS[mode], seed, map_mode=mode.value) for mode in MAP_VARIANTS for seed in seeds
        ]
        return cells, self._finish("map", "variant", cells, map_verdict(cells))


def plot_grid(cells: Sequence[GridCell], out_path: Path, label: str) -> Path:
    """Seed-averaged PAS and SCS per grid column."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    variants = list(dict.fromkeys(c.variant for c in cells))
    means = [seed_means(cells, v) for v in variants]
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.5))
    left.bar(variants, [m["pas"] for m in means])
    left.set_title("mean PAS (output)")
    right.bar(variants, [m["scs"] for m in means])
    right.set_title("mean SCS")
    for ax in (left, right):
        ax.set_xlabel(label)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path
