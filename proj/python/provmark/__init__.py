"""Python surface for the watermarking pipeline.

Thin re-export of the compiled extension; images are float64 numpy arrays
shaped (3, H, W) with values in [0, 1], masks are (H, W).
"""

from _provmark import (  # noqa: F401
    Pipeline,
    bit_accuracy,
    default_config,
    poisson_blend,
    psnr,
    ssim,
    synth_corpus,
)

__all__ = [
    "Pipeline",
    "bit_accuracy",
    "default_config",
    "poisson_blend",
    "psnr",
    "ssim",
    "synth_corpus",
]
