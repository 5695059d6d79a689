"""
Evaluation report output: JSON-lines records and a plain-text summary table.
"""
from pathlib import Path
from typing import List

from pydantic import BaseModel

from app.domain.entities.scores import EvaluationReport, IterationRecord, TrackRecord


def report_records(report: EvaluationReport) -> List[BaseModel]:
    """Iteration records, then per-track records, then per-class summaries."""
    records: List[BaseModel] = []
    for score in report.scores:
        for iteration, sdr in enumerate(score.sdr_per_iteration):
            records.append(IterationRecord(
                target_class=score.target_class,
                track_id=score.track_id,
                iteration=iteration,
                sdr_db=sdr,
                capped=sdr >= report.protocol.get("sdr_cap_db", float("inf")),
            ))
    for score in report.scores:
        records.append(TrackRecord(
            target_class=score.target_class,
            track_id=score.track_id,
            mean_sdr_db=score.mean,
            std_sdr_db=score.std,
            mixture_sdr_db=score.mixture_sdr,
            improvement_db=score.improvement,
            iterations=len(score.sdr_per_iteration),
        ))
    records.extend(report.summaries)
    return records


def write_report(report: EvaluationReport, path: Path) -> None:
    """One JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in report_records(report):
            f.write(record.model_dump_json() + "\n")


def format_summary_table(report: EvaluationReport) -> str:
    header = (
        f"{'class':<16} {'tracks':>6} {'mean':>8} {'median':>8} "
        f"{'std':>7} {'mixture':>8} {'gain':>7}"
    )
    lines = [f"mode: {report.checkpoint_mode}", header, "-" * len(header)]
    for s in report.summaries:
        lines.append(
            f"{s.target_class:<16} {s.tracks:>6d} {s.mean_sdr_db:>8.2f} {s.median_sdr_db:>8.2f} "
            f"{s.mean_std_db:>7.2f} {s.mean_mixture_sdr_db:>8.2f} {s.mean_improvement_db:>7.2f}"
        )
    return "\n".join(lines)
