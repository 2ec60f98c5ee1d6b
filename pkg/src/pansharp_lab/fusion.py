"""Pixel-level pansharpening: IHS, PCA, Gram-Schmidt, a trous wavelet and UNB-style.

Every method takes the multispectral image already resampled to the PAN grid
(``ms_up``) plus the PAN band, and returns a 4-band image clamped to [0, 1].
:func:`fuse` handles the resampling and dispatch.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .nnls import nnls
from .raster import (
    RasterImage,
    ResampleKernel,
    band_stats,
    degrade,
    histogram_match,
    upsample,
)

log = logging.getLogger(__name__)

UNB_EPS = 1e-6


class FusionError(ValueError):
    pass


class FusionMethod(enum.Enum):
    IHS = "ihs"
    PCA = "pca"
    GS = "gs"
    WAVELET = "wavelet"
    UNB = "unb"

    @classmethod
    def parse(cls, value) -> "FusionMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ",".join(m.value for m in cls)
            raise ValueError(f"unknown fusion method {value!r}; expected one of {{{choices}}}") from None

    @property
    def label(self) -> str:
        return {"ihs": "IHS", "pca": "PCA", "gs": "GS", "wavelet": "Wavelet", "unb": "UNB"}[self.value]


@dataclass(frozen=True)
class UnbWeights:
    w: tuple[float, ...]
    residual_rms: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if np.any(w < 0) or not np.any(w > 0):
            raise FusionError(f"UNB weights must be non-negative with at least one positive: {self.w}")


@dataclass(frozen=True)
class AtrousStack:
    approximation: np.ndarray
    details: list

    @property
    def levels(self) -> int:
        return len(self.details)

    def reconstruct(self) -> np.ndarray:
        out = self.approximation.copy()
        for d in self.details:
            out += d
        return out


@dataclass(frozen=True)
class PcaTransform:
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, descending eigenvalue

    def forward(self, pixels: np.ndarray) -> np.ndarray:
        return (pixels - self.mean) @ self.eigenvectors

    def inverse(self, components: np.ndarray) -> np.ndarray:
        return components @ self.eigenvectors.T + self.mean


def _same_grid(ms_up: RasterImage, pan: RasterImage) -> None:
    if pan.bands != 1:
        raise FusionError(f"PAN must have 1 band, got {pan.bands}")
    if (ms_up.height, ms_up.width) != (pan.height, pan.width):
        raise FusionError(
            f"dimension mismatch: MS {ms_up.width}x{ms_up.height} vs PAN {pan.width}x{pan.height}"
        )


def _finish(ms_up: RasterImage, fused: np.ndarray) -> RasterImage:
    return RasterImage(np.clip(fused, 0.0, 1.0), ms_up.pixel_size_m)


def mean_intensity(ms: np.ndarray) -> np.ndarray:
    return ms.mean(axis=0)


def additive_inject(ms: np.ndarray, intensity: np.ndarray, pan_matched: np.ndarray, gains=None) -> np.ndarray:
    """F_k = MS_k + g_k * (PAN' - I); unit gains when ``gains`` is None."""
    delta = pan_matched - intensity
    if gains is None:
        return ms + delta
    return ms + np.asarray(gains, dtype=np.float64).reshape(-1, *([1] * delta.ndim)) * delta


def ratio_inject(ms: np.ndarray, intensity: np.ndarray, pan_matched: np.ndarray, eps: float = UNB_EPS) -> np.ndarray:
    """F_k = MS_k * PAN' / max(I, eps)."""
    return ms * (pan_matched / np.maximum(intensity, eps))


def ihs_fuse(ms_up: RasterImage, pan: RasterImage) -> RasterImage:
    """Generalised IHS: add (matched PAN - band mean) to every band."""
    _same_grid(ms_up, pan)
    intensity = mean_intensity(ms_up.data)
    pan_m = histogram_match(pan.data[0], band_stats(intensity))
    return _finish(ms_up, additive_inject(ms_up.data, intensity, pan_m))


def pca_transform(pixels: np.ndarray) -> PcaTransform:
    """Principal components of an (n_pixels, n_bands) matrix.

    The first eigenvector is oriented so its coefficients sum to a positive
    value; the others follow ``numpy.linalg.eigh``.
    """
    mean = pixels.mean(axis=0)
    centred = pixels - mean
    cov = centred.T @ centred / pixels.shape[0]
    if not np.any(cov):
        raise FusionError("zero-variance input: band covariance is all zeros")
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if vecs[:, 0].sum() < 0:
        vecs[:, 0] = -vecs[:, 0]
    if len(vals) > 1 and not vals[0] > vals[1] * (1 + 1e-9):
        warnings.warn("first principal component is not strictly dominant", RuntimeWarning, stacklevel=3)
    return PcaTransform(mean, vals, vecs)


def pca_fuse(ms_up: RasterImage, pan: RasterImage) -> RasterImage:
    _same_grid(ms_up, pan)
    b, h, w = ms_up.shape
    pixels = ms_up.data.reshape(b, -1).T
    pca = pca_transform(pixels)
    comps = pca.forward(pixels)
    comps[:, 0] = histogram_match(pan.data[0].ravel(), band_stats(comps[:, 0]))
    fused = pca.inverse(comps).T.reshape(b, h, w)
    return _finish(ms_up, fused)


def gs_gains(ms: np.ndarray, low_pan: np.ndarray) -> np.ndarray:
    """Injection gains cov(MS_k, LP) / var(LP)."""
    lp = low_pan.ravel() - low_pan.mean()
    var = np.mean(lp * lp)
    if not var > 0:
        raise FusionError("degenerate scene: simulated low-resolution PAN has zero variance")
    flat = ms.reshape(ms.shape[0], -1)
    cov = np.mean((flat - flat.mean(axis=1, keepdims=True)) * lp, axis=1)
    return cov / var


def gs_fuse(ms_up: RasterImage, pan: RasterImage) -> RasterImage:
    """Gram-Schmidt in its component-substitution form with an equal-weight simulated PAN."""
    _same_grid(ms_up, pan)
    low = mean_intensity(ms_up.data)
    gains = gs_gains(ms_up.data, low)
    pan_m = histogram_match(pan.data[0], band_stats(low))
    return _finish(ms_up, additive_inject(ms_up.data, low, pan_m, gains))


def atrous_decompose(band, levels: int, smooth=None) -> AtrousStack:
    """Undecimated B3-spline decomposition; level ``j`` uses taps 2**(j-1) apart."""
    if isinstance(levels, bool) or int(levels) != levels or levels < 1:
        raise ValueError(f"levels must be an integer >= 1, got {levels!r}")
    smooth = smooth or _kernels.atrous_smooth
    approx = np.asarray(band, dtype=np.float64)
    details = []
    for j in range(1, int(levels) + 1):
        nxt = smooth(approx, 2 ** (j - 1))
        details.append(approx - nxt)
        approx = nxt
    return AtrousStack(approx, details)


def levels_for_ratio(ratio: int) -> int:
    levels = math.log2(ratio)
    if not levels.is_integer():
        raise FusionError(f"wavelet fusion needs a power-of-two ratio, got {ratio}")
    return int(levels)


def wavelet_fuse(ms_up: RasterImage, pan: RasterImage, levels: int = 2) -> RasterImage:
    """Additive a trous injection of the matched PAN's detail planes."""
    _same_grid(ms_up, pan)
    if pan.data.max() == pan.data.min():
        # a flat PAN carries no detail at any scale
        return _finish(ms_up, ms_up.data)
    intensity = mean_intensity(ms_up.data)
    pan_m = histogram_match(pan.data[0], band_stats(intensity))
    stack = atrous_decompose(pan_m, levels)
    detail = np.zeros_like(pan_m)
    for d in stack.details:
        detail += d
    return _finish(ms_up, ms_up.data + detail)


def unb_weights(ms: RasterImage, pan: RasterImage) -> UnbWeights:
    """Fit non-negative band weights so the weighted MS sum predicts the degraded PAN."""
    if pan.bands != 1:
        raise FusionError(f"PAN must have 1 band, got {pan.bands}")
    if not np.any(ms.data):
        raise FusionError("all-zero MS: cannot fit UNB weights")
    ratio = pan.width // ms.width
    pan_low = degrade(pan, ratio) if ratio > 1 else pan
    if (pan_low.height, pan_low.width) != (ms.height, ms.width):
        raise FusionError(
            f"degraded PAN {pan_low.width}x{pan_low.height} does not match MS {ms.width}x{ms.height}"
        )
    A = ms.data.reshape(ms.bands, -1).T
    b = pan_low.data.ravel()
    w, resid = nnls(A, b)
    if not np.any(w > 0):
        raise FusionError("UNB weight fit collapsed to all zeros")
    return UnbWeights(tuple(float(v) for v in w), resid / math.sqrt(b.size))


def unb_fuse(ms_up: RasterImage, pan: RasterImage, weights: UnbWeights) -> RasterImage:
    """Ratio injection against the NNLS-weighted synthetic intensity."""
    _same_grid(ms_up, pan)
    w = np.asarray(weights.w, dtype=np.float64)
    if w.shape != (ms_up.bands,):
        raise FusionError(f"{w.size} UNB weights for a {ms_up.bands}-band image")
    intensity = np.tensordot(w, ms_up.data, axes=1)
    dark = np.count_nonzero(intensity <= 0) / intensity.size
    if dark > 0.01:
        warnings.warn(
            f"degenerate intensity: {dark:.1%} of pixels have non-positive synthetic intensity",
            RuntimeWarning,
            stacklevel=2,
        )
    pan_m = histogram_match(pan.data[0], band_stats(intensity))
    return _finish(ms_up, ratio_inject(ms_up.data, intensity, pan_m))


def resolution_ratio(ms: RasterImage, pan: RasterImage) -> int:
    if pan.width % ms.width or pan.height % ms.height:
        raise FusionError(
            f"non-integer resolution ratio: MS {ms.width}x{ms.height}, PAN {pan.width}x{pan.height}"
        )
    rx, ry = pan.width // ms.width, pan.height // ms.height
    if rx != ry:
        raise FusionError(f"anisotropic resolution ratio {rx}x{ry}")
    size_ratio = ms.pixel_size_m / pan.pixel_size_m
    if not math.isclose(size_ratio, rx, rel_tol=1e-6):
        raise FusionError(
            f"pixel sizes {ms.pixel_size_m} m / {pan.pixel_size_m} m disagree with grid ratio {rx}"
        )
    if rx < 2:
        raise FusionError("PAN must be finer than MS")
    return rx


@dataclass
class FusionResult:
    image: RasterImage
    method: FusionMethod
    ratio: int
    kernel: ResampleKernel
    levels: int | None = None
    weights: UnbWeights | None = None


def fuse_detailed(ms, pan, method, kernel=ResampleKernel.BICUBIC, levels=None) -> FusionResult:
    method = FusionMethod.parse(method)
    kernel = ResampleKernel.parse(kernel)
    if ms.bands != 4:
        raise FusionError(f"fusion expects a 4-band MS image, got {ms.bands} bands")
    if pan.bands != 1:
        raise FusionError(f"PAN must have 1 band, got {pan.bands}")
    ratio = resolution_ratio(ms, pan)
    ms_up = upsample(ms, ratio, kernel)
    log.debug("fusing %s at ratio %d with %s upsampling", method.value, ratio, kernel.value)
    if method is FusionMethod.IHS:
        return FusionResult(ihs_fuse(ms_up, pan), method, ratio, kernel)
    if method is FusionMethod.PCA:
        return FusionResult(pca_fuse(ms_up, pan), method, ratio, kernel)
    if method is FusionMethod.GS:
        return FusionResult(gs_fuse(ms_up, pan), method, ratio, kernel)
    if method is FusionMethod.WAVELET:
        levels = levels_for_ratio(ratio) if levels is None else levels
        return FusionResult(wavelet_fuse(ms_up, pan, levels), method, ratio, kernel, levels=levels)
    weights = unb_weights(ms, pan)
    return FusionResult(unb_fuse(ms_up, pan, weights), method, ratio, kernel, weights=weights)


def fuse(ms: RasterImage, pan: RasterImage, method, kernel=ResampleKernel.BICUBIC, levels=None) -> RasterImage:
    return fuse_detailed(ms, pan, method, kernel, levels).image
