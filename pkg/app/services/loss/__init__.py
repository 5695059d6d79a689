"""Training objective."""
from app.services.loss.objective import (
    LossTerms,
    composite_loss,
    mag_mae,
    mag_mae_tensor,
    sdr_loss,
    sdr_loss_tensor,
    total_loss,
)

__all__ = [
    "LossTerms",
    "composite_loss",
    "mag_mae",
    "mag_mae_tensor",
    "sdr_loss",
    "sdr_loss_tensor",
    "total_loss",
]
