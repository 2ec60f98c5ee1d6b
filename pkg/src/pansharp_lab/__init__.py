"""Pansharpening laboratory: five pixel-level fusion methods, a spectral quality
battery, and two-step SVM impervious-surface classification on synthetic scenes."""

__version__ = "0.1.0"

from .raster import RasterImage, ResampleKernel, load_raster, save_raster, upsample, degrade  # noqa: E402,F401
from .fusion import FusionMethod, fuse  # noqa: E402,F401
from .metrics import assess  # noqa: E402,F401
