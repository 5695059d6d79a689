"""Conditioned U-Net separator, its encoder and checkpoints."""
from app.services.model.checkpoint import ModelCheckpoint, TrainingMeta
from app.services.model.encoder import FewShotEncoder, PosNegFusion
from app.services.model.film import FilmGenerator, FilmParams, film, identity_params
from app.services.model.inference import separate_chunk, separate_chunks, unet_forward
from app.services.model.network import SeparationNetwork
from app.services.model.unet import ConditionedUNet, bounded_complex_mask

__all__ = [
    "ConditionedUNet",
    "FewShotEncoder",
    "FilmGenerator",
    "FilmParams",
    "ModelCheckpoint",
    "PosNegFusion",
    "SeparationNetwork",
    "TrainingMeta",
    "bounded_complex_mask",
    "film",
    "identity_params",
    "separate_chunk",
    "separate_chunks",
    "unet_forward",
]
