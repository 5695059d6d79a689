"""Training loop and batch assembly."""
from app.services.training.trainer import (
    Batch,
    Trainer,
    check_resume,
    collate,
    split_corpus,
    train,
)

__all__ = ["Batch", "Trainer", "check_resume", "collate", "split_corpus", "train"]
