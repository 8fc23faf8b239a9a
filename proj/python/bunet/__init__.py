"""Python access to the Bridged U-net core."""

from ._core import (
    ConfigError,
    DataError,
    MetricUndefined,
    NumericalError,
    abd,
    cos_dice_from_dsc,
    cos_dice_loss,
    cos_dice_weight,
    dice_loss,
    fusion_variance,
    gen_synthetic,
    hausdorff,
    loss_gradient,
    model_summary,
    parse_mhd,
    ravd,
    soft_dsc,
    vdsc,
)

__all__ = [name for name in dir() if not name.startswith("_")]
