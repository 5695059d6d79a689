"""
Framewise signal-to-distortion ratio.

SDR per window is 10 log10(|s|^2 / |s - s^|^2) over non-overlapping windows;
windows where the reference is silent are skipped and the track score is the
median of the rest. Perfect windows are +inf; the reported value is capped.
"""
import numpy as np

from app.core.exceptions import EvaluationError, ShapeMismatchError
from app.domain.entities.audio import AudioClip
from app.domain.entities.scores import SdrMeasurement

# mean-square reference level below which a window counts as silent (-100 dBFS)
SILENT_WINDOW_POWER = 1e-10


def measure_sdr(estimate: AudioClip, reference: AudioClip, window_seconds: float = 1.0,
                cap_db: float = 60.0) -> SdrMeasurement:
    """
    Median windowed SDR with its bookkeeping.

    Signals shorter than one window are scored as a single window.

    Raises:
        ShapeMismatchError: lengths or rates differ
        EvaluationError: every window of the reference is silent
    """
    if estimate.num_samples != reference.num_samples or estimate.sample_rate != reference.sample_rate:
        raise ShapeMismatchError(
            f"Estimate ({estimate.num_samples} @ {estimate.sample_rate} Hz) and reference "
            f"({reference.num_samples} @ {reference.sample_rate} Hz) differ"
        )
    window = max(1, int(round(window_seconds * reference.sample_rate)))
    n_windows = max(1, reference.num_samples // window)
    span = min(reference.num_samples, n_windows * window)
    if n_windows == 1:
        window = span

    s = reference.samples[:span].reshape(n_windows, window)
    e = estimate.samples[:span].reshape(n_windows, window)
    signal_energy = np.sum(s ** 2, axis=1)
    distortion_energy = np.sum((s - e) ** 2, axis=1)
    active = signal_energy > SILENT_WINDOW_POWER * window
    if not np.any(active):
        raise EvaluationError("Reference is silent in every window; SDR is undefined")

    with np.errstate(divide="ignore"):
        ratios = np.where(
            distortion_energy[active] > 0,
            signal_energy[active] / np.where(distortion_energy[active] > 0, distortion_energy[active], 1.0),
            np.inf,
        )
        values = 10.0 * np.log10(ratios)
    median = float(np.median(values))
    capped = not np.isfinite(median) or median > cap_db
    return SdrMeasurement(
        sdr_db=cap_db if capped else median,
        capped=capped,
        windows_used=int(np.count_nonzero(active)),
        windows_total=n_windows,
    )


def compute_sdr(estimate: AudioClip, reference: AudioClip, window_seconds: float = 1.0,
                cap_db: float = 60.0) -> float:
    """SDR in dB; perfect reconstruction reports cap_db."""
    return measure_sdr(estimate, reference, window_seconds, cap_db).sdr_db
