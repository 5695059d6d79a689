"""
Model checkpoints and their on-disk format.

Layout (all integers little-endian):

    magic      8 bytes  b"FSMSCKPT"
    version    uint32
    header_len uint64
    header     UTF-8 JSON: configs, conditioning mode, vocabulary, training
               metadata and the ordered list of tensor names and shapes
    tensors    float32 data in header order, no padding

Optimizer moments are stored as tensors named `optimizer.exp_avg.<param>`
and `optimizer.exp_avg_sq.<param>`.
"""
import os
import struct
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from app.core.config import (
    SAMPLE_RATE,
    ConditioningMode,
    EncoderConfig,
    RunConfig,
    StftConfig,
    UNetConfig,
)
from app.core.exceptions import CheckpointError, ConditioningError
from app.core.logging import LoggerMixin, log_performance
from app.domain.entities.conditioning import ConditioningVector, InstrumentVocabulary, VectorMode
from app.services.model.network import SeparationNetwork


CHECKPOINT_MAGIC = b"FSMSCKPT"
CHECKPOINT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")
_OPTIMIZER_PREFIX = "optimizer."
_MOMENTS = ("exp_avg", "exp_avg_sq")


class TensorEntry(BaseModel):
    name: str
    shape: List[int]

    @property
    def count(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


class TrainingMeta(BaseModel):
    """Training progress carried by a checkpoint so runs can resume."""
    model_config = ConfigDict(extra="forbid")

    step: int = Field(default=0, ge=0)
    seed: int = 0
    best_validation_loss: Optional[float] = None
    best_step: Optional[int] = None
    validations_without_improvement: int = Field(default=0, ge=0)
    stopped_early: bool = False
    optimizer: Optional[Dict[str, Any]] = Field(
        default=None, description="Adam hyper-parameters and per-parameter step counts"
    )


class CheckpointHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int
    conditioning_mode: ConditioningMode
    vocabulary: List[str]
    sample_rate: int
    chunk_samples: int
    unet: UNetConfig
    encoder: EncoderConfig
    stft: StftConfig
    training: TrainingMeta
    tensors: List[TensorEntry]


class ModelCheckpoint(LoggerMixin):
    """
    A trained (or freshly initialized) separation network with everything
    needed to use it: configs, conditioning mode, vocabulary, training state.
    """

    def __init__(
        self,
        network: SeparationNetwork,
        encoder_config: EncoderConfig,
        vocabulary: InstrumentVocabulary,
        sample_rate: int,
        chunk_samples: int,
        training: Optional[TrainingMeta] = None,
        optimizer_state: Optional[Dict[str, Any]] = None,
    ):
        self.network = network
        self.encoder_config = encoder_config
        self.vocabulary = vocabulary
        self.sample_rate = sample_rate
        self.chunk_samples = chunk_samples
        self.training = training or TrainingMeta()
        self.optimizer_state = optimizer_state

    @classmethod
    def create(cls, config: RunConfig, mode: Optional[ConditioningMode] = None) -> "ModelCheckpoint":
        """Freshly initialized network, seeded from config.seed."""
        mode = ConditioningMode(mode or config.training.conditioning_mode)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            network = SeparationNetwork(
                mode=mode,
                vocabulary_size=len(config.vocabulary),
                unet_config=config.unet,
                encoder_config=config.encoder,
                stft_config=config.stft,
                sample_rate=SAMPLE_RATE,
            )
        return cls(
            network=network,
            encoder_config=config.encoder,
            vocabulary=InstrumentVocabulary(names=config.vocabulary),
            sample_rate=SAMPLE_RATE,
            chunk_samples=config.sampler.chunk_samples(SAMPLE_RATE),
            training=TrainingMeta(seed=config.seed),
        )

    @property
    def mode(self) -> ConditioningMode:
        return self.network.mode

    @property
    def unet_config(self) -> UNetConfig:
        return self.network.unet_config

    @property
    def stft_config(self) -> StftConfig:
        return self.network.stft_config

    @property
    def condition_dim(self) -> int:
        return self.network.condition_dim

    def check_vector(self, z: ConditioningVector) -> None:
        """
        Raises:
            ConditioningError: z does not fit this checkpoint's mode or dimension
        """
        expected = VectorMode.CLASS if self.mode == ConditioningMode.CLASS else VectorMode.FEW_SHOT
        if z.mode != expected:
            raise ConditioningError(
                f"Checkpoint trained in '{self.mode.value}' mode cannot use a "
                f"'{z.mode.value}' conditioning vector"
            )
        if z.dim != self.condition_dim:
            raise ConditioningError(
                f"Conditioning vector has dimension {z.dim}, checkpoint expects {self.condition_dim}"
            )

    # Serialization

    def _named_tensors(self) -> List[Tuple[str, torch.Tensor]]:
        tensors = list(self.network.state_dict().items())
        if self.optimizer_state is None:
            return tensors
        names = [name for name, _ in self.network.named_parameters()]
        for index, name in enumerate(names):
            state = self.optimizer_state["state"].get(index)
            if state is None:
                continue
            for moment in _MOMENTS:
                tensors.append((f"{_OPTIMIZER_PREFIX}{moment}.{name}", state[moment]))
        return tensors

    def _optimizer_meta(self) -> Optional[Dict[str, Any]]:
        if self.optimizer_state is None:
            return None
        names = [name for name, _ in self.network.named_parameters()]
        groups = []
        for group in self.optimizer_state["param_groups"]:
            groups.append({
                key: list(value) if isinstance(value, tuple) else value
                for key, value in group.items() if key != "params"
            })
        steps = {
            names[index]: float(state["step"])
            for index, state in self.optimizer_state["state"].items()
        }
        return {"param_groups": groups, "steps": steps}

    def save(self, path: Path) -> None:
        """
        Write the checkpoint atomically.

        Raises:
            CheckpointError: unwritable destination
        """
        start_time = time.time()
        path = Path(path)
        named = self._named_tensors()
        header = CheckpointHeader(
            format_version=CHECKPOINT_VERSION,
            conditioning_mode=self.mode,
            vocabulary=list(self.vocabulary.names),
            sample_rate=self.sample_rate,
            chunk_samples=self.chunk_samples,
            unet=self.unet_config,
            encoder=self.encoder_config,
            stft=self.stft_config,
            training=self.training.model_copy(update={"optimizer": self._optimizer_meta()}),
            tensors=[TensorEntry(name=name, shape=list(t.shape)) for name, t in named],
        )
        header_bytes = header.model_dump_json().encode("utf-8")

        tmp_path = path.with_name(path.name + ".tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(tmp_path, "wb") as f:
                f.write(_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)))
                f.write(header_bytes)
                for _, tensor in named:
                    data = tensor.detach().cpu().to(torch.float32).numpy()
                    f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
            os.replace(tmp_path, path)
        except OSError as e:
            raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e

        self.logger.info(
            "Checkpoint saved",
            extra={"path": str(path), "step": self.training.step, "mode": self.mode.value},
        )
        log_performance(
            operation="checkpoint_save",
            latency_ms=(time.time() - start_time) * 1000,
            tensors=len(named),
            bytes=_PREAMBLE.size + len(header_bytes) + 4 * sum(e.count for e in header.tensors),
        )

    @classmethod
    def load(cls, path: Path) -> "ModelCheckpoint":
        """
        Read a checkpoint written by `save`.

        Raises:
            CheckpointError: unreadable file, bad magic or version, malformed
                header, or tensors that do not match the declared architecture
        """
        start_time = time.time()
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

        if len(data) < _PREAMBLE.size:
            raise CheckpointError(f"{path} is too short to be a checkpoint")
        magic, version, header_len = _PREAMBLE.unpack_from(data, 0)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic {magic!r})")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path} has format version {version}, this build reads {CHECKPOINT_VERSION}"
            )
        body_start = _PREAMBLE.size + header_len
        if body_start > len(data):
            raise CheckpointError(f"{path} is truncated inside its header")
        try:
            header = CheckpointHeader.model_validate_json(data[_PREAMBLE.size:body_start])
            vocabulary = InstrumentVocabulary(names=header.vocabulary)
            network = SeparationNetwork(
                mode=header.conditioning_mode,
                vocabulary_size=len(vocabulary),
                unet_config=header.unet,
                encoder_config=header.encoder,
                stft_config=header.stft,
                sample_rate=header.sample_rate,
            )
        except Exception as e:
            raise CheckpointError(f"{path} has an invalid header: {e}") from e

        tensors = _read_tensors(path, data, body_start, header.tensors)
        model_tensors = {k: v for k, v in tensors.items() if not k.startswith(_OPTIMIZER_PREFIX)}
        _load_state(path, network, model_tensors)

        checkpoint = cls(
            network=network,
            encoder_config=header.encoder,
            vocabulary=vocabulary,
            sample_rate=header.sample_rate,
            chunk_samples=header.chunk_samples,
            training=header.training.model_copy(update={"optimizer": None}),
            optimizer_state=_optimizer_state(path, network, header.training.optimizer, tensors),
        )
        checkpoint.logger.info(
            "Checkpoint loaded",
            extra={"path": str(path), "step": header.training.step, "mode": header.conditioning_mode.value},
        )
        log_performance(operation="checkpoint_load", latency_ms=(time.time() - start_time) * 1000, bytes=len(data))
        return checkpoint


def _read_tensors(path: Path, data: bytes, offset: int,
                  entries: List[TensorEntry]) -> Dict[str, torch.Tensor]:
    tensors = {}
    for entry in entries:
        nbytes = 4 * entry.count
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path} is truncated inside tensor '{entry.name}'")
        array = np.frombuffer(data, dtype="<f4", count=entry.count, offset=offset)
        tensors[entry.name] = torch.from_numpy(array.reshape(entry.shape).copy())
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path} has {len(data) - offset} unexpected trailing bytes")
    return tensors


def _load_state(path: Path, network: SeparationNetwork, tensors: Dict[str, torch.Tensor]) -> None:
    expected = network.state_dict()
    missing = sorted(set(expected) - set(tensors))
    unexpected = sorted(set(tensors) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"{path} does not match its architecture: missing {missing}, unexpected {unexpected}"
        )
    mismatched = [
        f"{name}: file {tuple(tensors[name].shape)} vs model {tuple(ref.shape)}"
        for name, ref in expected.items() if tuple(tensors[name].shape) != tuple(ref.shape)
    ]
    if mismatched:
        raise CheckpointError(f"{path} has tensors of the wrong shape: {mismatched}")
    network.load_state_dict({name: tensors[name].to(ref.dtype) for name, ref in expected.items()})


def _optimizer_state(path: Path, network: SeparationNetwork, meta: Optional[Dict[str, Any]],
                     tensors: Dict[str, torch.Tensor]) -> Optional[Dict[str, Any]]:
    """Rebuild a torch optimizer state dict from the stored moments."""
    if meta is None:
        return None
    names = [name for name, _ in network.named_parameters()]
    state: Dict[int, Dict[str, torch.Tensor]] = {}
    for index, name in enumerate(names):
        if name not in meta.get("steps", {}):
            continue
        try:
            moments = {m: tensors[f"{_OPTIMIZER_PREFIX}{m}.{name}"] for m in _MOMENTS}
        except KeyError as e:
            raise CheckpointError(f"{path} lacks optimizer moment {e}") from e
        state[index] = {"step": torch.tensor(meta["steps"][name]), **moments}
    groups = [{**group, "params": list(range(len(names)))} for group in meta["param_groups"]]
    return {"state": state, "param_groups": groups}
