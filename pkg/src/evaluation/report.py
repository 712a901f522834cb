"""
Evaluation report models and writers.

Per-sample rows go to ``eval.csv`` (``id,pas_in,pas_out,scs,seed``); the
aggregates, banded sub-aggregates and provenance go to ``eval_summary.json``.
"""

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

LOW_BAND_MAX = 4.0
HIGH_BAND_MIN = 5.0
ROW_FIELDS = ("id", "pas_in", "pas_out", "scs", "seed")


class EvalRow(BaseModel):
    """Scores of one test input under one sampling seed."""

    id: int
    pas_in: float
    pas_out: float
    scs: float
    seed: int
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)


class Aggregate(BaseModel):
    count: int = 0
    mean_pas_in: float = 0.0
    mean_pas_out: float = 0.0
    delta_pas: float = 0.0
    mean_scs: float = 0.0


class EvalReport(BaseModel):
    """Per-sample rows, their aggregates and the provenance of the run."""

    rows: List[EvalRow] = Field(default_factory=list)
    mean_pas_in: float = 0.0
    mean_pas_out: float = 0.0
    delta_pas: float = 0.0
    mean_scs: float = 0.0
    mean_scs_null: Optional[float] = None
    per_seed: Dict[str, Aggregate] = Field(default_factory=dict)
    bands: Dict[str, Aggregate] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    num_sample_steps: int = 0
    identity_baseline: bool = False
    checkpoint: str = ""
    config_text: str = ""
    degenerate_count: int = 0


def aggregate(rows: Sequence[EvalRow]) -> Aggregate:
    """Means over ``rows``; an empty selection aggregates to zeros."""
    if not rows:
        return Aggregate()
    pas_in = float(np.mean([r.pas_in for r in rows]))
    pas_out = float(np.mean([r.pas_out for r in rows]))
    return Aggregate(
        count=len(rows),
        mean_pas_in=pas_in,
        mean_pas_out=pas_out,
        delta_pas=pas_out - pas_in,
        mean_scs=float(np.mean([r.scs for r in rows])),
    )


def build_report(rows: Sequence[EvalRow], seeds: Sequence[int], **provenance) -> EvalReport:
    """
    Assemble a report whose aggregates are recomputed from ``rows``.

    Rows are ordered by (seed, id). Bands select on the input PAS:
    ``low`` below 4, ``high`` above 5.
    """
    ordered = sorted(rows, key=lambda r: (r.seed, r.id))
    overall = aggregate(ordered)
    return EvalReport(
        rows=ordered,
        mean_pas_in=overall.mean_pas_in,
        mean_pas_out=overall.mean_pas_out,
        delta_pas=overall.delta_pas,
        mean_scs=overall.mean_scs,
        per_seed={str(seed): aggregate([r for r in ordered if r.seed == seed]) for seed in seeds},
        bands={
            "low": aggregate([r for r in ordered if r.pas_in < LOW_BAND_MAX]),
            "high": aggregate([r for r in ordered if r.pas_in > HIGH_BAND_MIN]),
        },
        seeds=list(seeds),
        degenerate_count=sum(1 for r in ordered if r.degenerate),
        **provenance,
    )


def write_rows(path: Path, rows: Sequence[EvalRow]) -> Path:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ROW_FIELDS)
        for row in rows:
            writer.writerow([row.id, repr(row.pas_in), repr(row.pas_out), repr(row.scs), row.seed])
    return path


def read_rows(path: Path) -> List[EvalRow]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return [
            EvalRow(
                id=int(row["id"]),
                pas_in=float(row["pas_in"]),
                pas_out=float(row["pas_out"]),
                scs=float(row["scs"]),
                seed=int(row["seed"]),
            )
            for row in csv.DictReader(handle)
        ]


def write_report(report: EvalReport, out_dir: Path) -> Dict[str, Path]:
    """Write ``eval.csv`` and ``eval_summary.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_path = write_rows(out_dir / "eval.csv", report.rows)
    summary_path = out_dir / "eval_summary.json"
    summary_path.write_text(
        report.model_dump_json(indent=2, exclude={"rows", "config_text"}),
        encoding="utf-8",
    )
    return {"rows": rows_path, "summary": summary_path}
