"""
Separation service: conditioning request in, separated source out.
Checks the request against the checkpoint before any audio is processed.
"""
import time
from pathlib import Path
from typing import Optional, Sequence

from app.core.config import WavSubtype
from app.core.logging import LoggerMixin, log_performance
from app.domain.entities.audio import AudioClip
from app.domain.entities.conditioning import ConditioningRequest
from app.domain.interfaces.conditioner import Conditioner
from app.services.conditioning.factory import create_conditioner
from app.services.dsp.wav_io import read_wav, read_wav_channels, write_wav
from app.services.evaluation.evaluator import separate_track
from app.services.model.checkpoint import ModelCheckpoint


class SeparationService(LoggerMixin):
    """
    Separates one target source from mixtures with a loaded checkpoint.

    Read-only with respect to the checkpoint; several services may share one.
    """

    def __init__(
        self,
        checkpoint: ModelCheckpoint,
        conditioner: Optional[Conditioner] = None,
        overlap: float = 0.5,
        batch_size: int = 8,
    ):
        """
        Initialize separation service.

        Args:
            checkpoint: trained model
            conditioner: builds z; defaults to the one matching the checkpoint mode
            overlap: chunk overlap fraction for full-length mixtures
            batch_size: chunks per forward pass
        """
        self.checkpoint = checkpoint
        self.conditioner = conditioner or create_conditioner(checkpoint)
        self.overlap = overlap
        self.batch_size = batch_size

        self.logger.info(
            "Separation service initialized",
            extra={"mode": checkpoint.mode.value, "sample_rate": checkpoint.sample_rate},
        )

    def separate(self, mixture: AudioClip, request: ConditioningRequest) -> AudioClip:
        """
        Extract the requested source from a mixture.

        Args:
            mixture: mono mixture at any sample rate
            request: class name or example clips, matching the checkpoint mode

        Returns:
            AudioClip: estimate with the mixture's rate and length

        Raises:
            ConditioningError: request does not fit the checkpoint
        """
        start_time = time.time()
        self.conditioner.validate(request)
        z = self.conditioner.build(request)
        estimate = separate_track(mixture, z, self.checkpoint, self.overlap, self.batch_size)

        log_performance(
            operation="separation",
            latency_ms=(time.time() - start_time) * 1000,
            mode=self.checkpoint.mode.value,
            duration_s=mixture.duration,
            positives=len(request.positives),
            negatives=len(request.negatives),
        )
        return estimate

    def separate_file(
        self,
        mixture_path: Path,
        output_path: Path,
        class_name: Optional[str] = None,
        example_paths: Sequence[Path] = (),
        negative_paths: Sequence[Path] = (),
        subtype: WavSubtype = WavSubtype.FLOAT,
    ) -> AudioClip:
        """
        Separate a WAV file into a WAV file at the input rate.

        Multichannel input is downmixed; the output repeats the mono estimate
        over the input channel count.
        """
        request = ConditioningRequest(
            class_name=class_name,
            positives=[read_wav(p) for p in example_paths],
            negatives=[read_wav(p) for p in negative_paths],
        )
        # fail on a mode mismatch before the mixture is read
        self.conditioner.validate(request)
        mixture, channels = read_wav_channels(mixture_path)
        estimate = self.separate(mixture, request)
        write_wav(output_path, estimate, subtype, channels)
        self.logger.info(f"Wrote separated source to {output_path}")
        return estimate
