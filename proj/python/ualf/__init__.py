"""Rain-fog physics, image metrics and inference with a trained deraining network."""

from ._ualf import (
    CheckpointError,
    ContractError,
    Derainer,
    IoError,
    compose,
    decompose,
    evaluate_dir,
    load_image,
    lr_at,
    psnr,
    save_image,
    ssim,
    synth_example,
)

__all__ = [
    "CheckpointError",
    "ContractError",
    "Derainer",
    "IoError",
    "compose",
    "decompose",
    "evaluate_dir",
    "load_image",
    "lr_at",
    "psnr",
    "save_image",
    "ssim",
    "synth_example",
]
