"""Spectral fidelity metrics between a reference MS image and a fused product.

All moments are population moments (divisor n). ``bias`` and ``div`` are
relative to the reference, so they read as fractions of the reference mean
and variance.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .raster import RasterImage

# column order of the comparison table (ERGA is the ERGAS column)
TABLE_COLUMNS = ("Bias", "DIV", "CC", "ERGA", "RASE", "UIQI", "RMSE")
TABLE_KEYS = ("bias", "div", "cc", "ergas", "rase", "uiqi", "rmse")
IDEAL_VALUES = {"bias": 0.0, "div": 0.0, "cc": 1.0, "ergas": 0.0, "rase": 0.0, "uiqi": 1.0, "rmse": 0.0}


class MetricError(ValueError):
    pass


def _pair(ref, fused):
    x = np.asarray(ref, dtype=np.float64).ravel()
    y = np.asarray(fused, dtype=np.float64).ravel()
    if np.shape(ref) != np.shape(fused):
        raise MetricError(f"dimension mismatch: {np.shape(ref)} vs {np.shape(fused)}")
    if x.size == 0:
        raise MetricError("empty input")
    return x, y


def _moments(x, y):
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    return mx, my, np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)


def bias(ref, fused) -> float:
    x, y = _pair(ref, fused)
    mx = x.mean()
    if mx == 0:
        raise MetricError("bias undefined: reference mean is zero")
    return float((mx - y.mean()) / mx)


def div(ref, fused) -> float:
    x, y = _pair(ref, fused)
    _, _, vx, vy, _ = _moments(x, y)
    if vx == 0:
        raise MetricError("DIV undefined: reference has zero variance")
    return float((vx - vy) / vx)


def cc(ref, fused) -> float:
    x, y = _pair(ref, fused)
    _, _, vx, vy, cxy = _moments(x, y)
    if vx == 0 or vy == 0:
        raise MetricError("CC undefined: zero-variance input")
    r = cxy / math.sqrt(vx * vy)
    return float(min(1.0, max(-1.0, r)))


def rmse(ref, fused) -> float:
    x, y = _pair(ref, fused)
    d = x - y
    return float(math.sqrt(np.mean(d * d)))


def uiqi(ref, fused) -> float:
    """Global (single-window) universal image quality index."""
    x, y = _pair(ref, fused)
    mx, my, vx, vy, cxy = _moments(x, y)
    den = (vx + vy) * (mx * mx + my * my)
    if mx == 0 and my == 0:
        raise MetricError("UIQI undefined: both means are zero")
    if den == 0:
        raise MetricError("UIQI undefined: both inputs have zero variance")
    q = 4.0 * cxy * mx * my / den
    return float(min(1.0, max(-1.0, q)))


def entropy(band, bins: int = 256) -> float:
    """Shannon entropy in bits of the histogram of ``band`` clipped to [0, 1]."""
    x = np.clip(np.asarray(band, dtype=np.float64).ravel(), 0.0, 1.0)
    if x.size == 0:
        raise MetricError("empty input")
    idx = np.minimum((x * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    p = counts[counts > 0] / x.size
    return float(max(0.0, -np.sum(p * np.log2(p))))


def _multiband(ref_ms, fused):
    ref = ref_ms.data if isinstance(ref_ms, RasterImage) else np.asarray(ref_ms, dtype=np.float64)
    fus = fused.data if isinstance(fused, RasterImage) else np.asarray(fused, dtype=np.float64)
    if ref.ndim == 2:
        ref = ref[None]
    if fus.ndim == 2:
        fus = fus[None]
    if ref.shape != fus.shape:
        raise MetricError(f"dimension mismatch: {ref.shape} vs {fus.shape}")
    return ref, fus


def ergas(ref_ms, fused, h_over_l: float) -> float:
    ref, fus = _multiband(ref_ms, fused)
    terms = []
    for r, f in zip(ref, fus):
        mu = r.mean()
        if mu == 0:
            raise MetricError("ERGAS undefined: a reference band has zero mean")
        terms.append((rmse(r, f) / mu) ** 2)
    return float(100.0 * h_over_l * math.sqrt(np.mean(terms)))


def rase(ref_ms, fused) -> float:
    ref, fus = _multiband(ref_ms, fused)
    m = np.mean([r.mean() for r in ref])
    if m == 0:
        raise MetricError("RASE undefined: mean reference radiance is zero")
    sq = [rmse(r, f) ** 2 for r, f in zip(ref, fus)]
    return float(100.0 / m * math.sqrt(np.mean(sq)))


@dataclass
class BandQuality:
    bias: float
    div: float
    cc: float
    rmse: float
    uiqi: float
    entropy_ref: float
    entropy_fused: float


@dataclass
class QualityReport:
    per_band: list
    aggregate: dict
    method: str = ""
    extra: dict = field(default_factory=dict)

    def row(self) -> list[float]:
        return [self.aggregate[k] for k in TABLE_KEYS]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "columns": list(TABLE_COLUMNS),
            "aggregate": {k: self.aggregate[k] for k in TABLE_KEYS},
            "per_band": [asdict(b) for b in self.per_band],
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "QualityReport":
        return cls([BandQuality(**b) for b in d["per_band"]], dict(d["aggregate"]), d.get("method", ""),
                   d.get("extra", {}))


def assess(ref_ms_up: RasterImage, fused: RasterImage, h_over_l: float, method: str = "") -> QualityReport:
    """Per-band metrics averaged over bands; ERGAS and RASE use all bands at once."""
    if ref_ms_up.bands != fused.bands:
        raise MetricError(f"band-count mismatch: {ref_ms_up.bands} vs {fused.bands}")
    if ref_ms_up.shape != fused.shape:
        raise MetricError(f"dimension mismatch: {ref_ms_up.shape} vs {fused.shape}")
    per_band = []
    for r, f in zip(ref_ms_up.data, fused.data):
        per_band.append(
            BandQuality(
                bias=bias(r, f),
                div=div(r, f),
                cc=cc(r, f),
                rmse=rmse(r, f),
                uiqi=uiqi(r, f),
                entropy_ref=entropy(r),
                entropy_fused=entropy(f),
            )
        )
    agg = {k: float(np.mean([getattr(b, k) for b in per_band])) for k in ("bias", "div", "cc", "uiqi", "rmse")}
    agg["ergas"] = ergas(ref_ms_up, fused, h_over_l)
    agg["rase"] = rase(ref_ms_up, fused)
    return QualityReport(per_band, agg, method)


def format_quality_table(reports, digits: int = 3) -> str:
    """Text table with one row per method, columns in TABLE_COLUMNS order."""
    label_w = max([6] + [len(r.method) for r in reports])
    col_w = max(8, digits + 5)
    lines = [" " * label_w + "".join(f"{c:>{col_w}}" for c in TABLE_COLUMNS)]
    for r in reports:
        # adding 0.0 turns a rounded -0.0 into 0.0
        cells = [round(v, digits) + 0.0 for v in r.row()]
        lines.append(f"{r.method:<{label_w}}" + "".join(f"{v:>{col_w}.{digits}f}" for v in cells))
    return "\n".join(lines) + "\n"
