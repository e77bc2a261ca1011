"""Zero-reference low-light enhancement.

Images are float64 NumPy arrays shaped H x W x C (or H x W) with values in [0, 1].
"""

from ._lumidiff import (
    ConfigError,
    DataError,
    Error,
    IoError,
    LoadError,
    NumericError,
    ShapeError,
    color_loss,
    config_hash,
    config_toml,
    content_loss,
    dft_amp_pha,
    dwt2,
    enhance,
    idwt2,
    load_image,
    loe,
    niqe,
    psnr,
    save_image,
    spa_loss,
    spectral_loss,
    ssim,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "IoError",
    "LoadError",
    "NumericError",
    "ShapeError",
    "color_loss",
    "config_hash",
    "config_toml",
    "content_loss",
    "dft_amp_pha",
    "dwt2",
    "enhance",
    "idwt2",
    "load_image",
    "loe",
    "niqe",
    "psnr",
    "save_image",
    "spa_loss",
    "spectral_loss",
    "ssim",
    "train",
]
