"""Full-track separation, SDR scoring and the evaluation protocol."""
from app.services.evaluation.evaluator import (
    TrackEvaluator,
    evaluate_corpus,
    evaluate_track,
    separate_track,
    summarize,
)
from app.services.evaluation.report import format_summary_table, report_records, write_report
from app.services.evaluation.sdr import compute_sdr, measure_sdr

__all__ = [
    "TrackEvaluator",
    "compute_sdr",
    "evaluate_corpus",
    "evaluate_track",
    "format_summary_table",
    "measure_sdr",
    "report_records",
    "separate_track",
    "summarize",
    "write_report",
]
