"""Seeded synthetic urban scenes with per-pixel land-cover ground truth."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .landcover import LandCoverClass
from .raster import PAN_PIXEL_SIZE_M, RasterImage, degrade

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"
DEFAULT_PAN_WEIGHTS = (0.3, 0.3, 0.3, 0.1)

DEFAULT_SPECTRA = {
    "BIS": (0.55, 0.55, 0.55, 0.50),
    "DIS": (0.12, 0.12, 0.12, 0.10),
    "VEG": (0.06, 0.12, 0.07, 0.50),
    "WAT": (0.08, 0.07, 0.05, 0.02),
    "BSS": (0.30, 0.35, 0.40, 0.45),
    "SHA": (0.04, 0.04, 0.04, 0.03),
}


class SceneSpecError(ValueError):
    pass


@dataclass
class ClassSpectrum:
    mean: tuple
    noise_std: float = 0.02


@dataclass
class SceneSpec:
    width: int = 512
    height: int = 512
    ratio: int = 4
    seed: int = 0
    pixel_size_m: float = PAN_PIXEL_SIZE_M
    class_spectra: dict = field(
        default_factory=lambda: {k: ClassSpectrum(v) for k, v in DEFAULT_SPECTRA.items()}
    )
    road_fraction: float = 0.12
    building_fraction: float = 0.16
    water_fraction: float = 0.12
    vegetation_fraction: float = 0.20
    shadow_fraction: float = 0.06
    dark_roof_share: float = 0.25

    def validate(self) -> None:
        for name in ("width", "height", "ratio"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise SceneSpecError(f"{name} must be a positive integer, got {v!r}")
        if self.ratio < 2:
            raise SceneSpecError(f"ratio must be >= 2, got {self.ratio}")
        if self.width % self.ratio or self.height % self.ratio:
            raise SceneSpecError(f"{self.width}x{self.height} is not divisible by ratio {self.ratio}")
        if not self.pixel_size_m > 0:
            raise SceneSpecError("pixel_size_m must be positive")
        fractions = [self.road_fraction, self.building_fraction, self.water_fraction,
                     self.vegetation_fraction, self.shadow_fraction]
        if any(not 0 <= f <= 1 for f in fractions + [self.dark_roof_share]):
            raise SceneSpecError("layout fractions must lie in [0, 1]")
        if sum(fractions) > 1:
            raise SceneSpecError(f"layout fractions sum to {sum(fractions):.3f} > 1")
        missing = set(c.name for c in LandCoverClass) - set(self.class_spectra)
        if missing:
            raise SceneSpecError(f"class_spectra missing {sorted(missing)}")
        for name, spec in self.class_spectra.items():
            mean = np.asarray(spec.mean, dtype=float)
            if mean.shape != (4,) or np.any(mean < 0) or np.any(mean > 1):
                raise SceneSpecError(f"{name}: spectrum must be 4 values in [0, 1]")
            if not spec.noise_std >= 0:
                raise SceneSpecError(f"{name}: noise_std must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_spectra"] = {
            k: {"mean": list(v.mean), "noise_std": v.noise_std} for k, v in self.class_spectra.items()
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SceneSpecError(f"unknown scene spec fields: {sorted(unknown)}")
        if "class_spectra" in d:
            spectra = {k: ClassSpectrum(v) for k, v in DEFAULT_SPECTRA.items()}
            for name, v in d["class_spectra"].items():
                if name not in spectra:
                    raise SceneSpecError(f"unknown class {name!r} in class_spectra")
                if isinstance(v, dict):
                    spectra[name] = ClassSpectrum(tuple(v["mean"]), float(v.get("noise_std", 0.02)))
                else:
                    spectra[name] = ClassSpectrum(tuple(v))
            d["class_spectra"] = spectra
        spec = cls(**d)
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SceneSpecError(f"invalid scene spec JSON: {exc}") from None
        if not isinstance(d, dict):
            raise SceneSpecError("scene spec JSON must be an object")
        return cls.from_dict(d)


class _Canvas:
    def __init__(self, labels, rng):
        self.labels = labels
        self.rng = rng
        self.h, self.w = labels.shape

    def fraction(self, cls) -> float:
        return np.count_nonzero(self.labels == int(cls)) / self.labels.size


def _paint_vegetation(cv: _Canvas, target: float) -> None:
    yy, xx = np.mgrid[0: cv.h, 0: cv.w]
    for _ in range(2000):
        if cv.fraction(LandCoverClass.VEG) >= target:
            break
        cy, cx = cv.rng.uniform(0, cv.h), cv.rng.uniform(0, cv.w)
        ry, rx = cv.rng.uniform(6, 28, size=2)
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        cv.labels[blob & (cv.labels == LandCoverClass.BSS)] = LandCoverClass.VEG


def _paint_water(cv: _Canvas, target: float) -> None:
    if target <= 0:
        return
    thickness = target * cv.h
    centre = cv.rng.uniform(0.2, 0.8) * cv.h
    amp = cv.rng.uniform(0.02, 0.06) * cv.h
    period = cv.rng.uniform(0.6, 1.5) * cv.w
    phase = cv.rng.uniform(0, 2 * np.pi)
    x = np.arange(cv.w)
    mid = centre + amp * np.sin(2 * np.pi * x / period + phase)
    rows = np.arange(cv.h)[:, None]
    river = np.abs(rows - mid[None, :]) < thickness / 2
    cv.labels[river] = LandCoverClass.WAT


def _paint_roads(cv: _Canvas, target: float) -> None:
    road = np.zeros_like(cv.labels, dtype=bool)
    for _ in range(200):
        if np.count_nonzero(road) / road.size >= target:
            break
        width = int(cv.rng.choice([4, 6, 8, 12]))
        if cv.rng.random() < 0.5:
            y0 = int(cv.rng.integers(0, cv.h - width))
            road[y0: y0 + width, :] = True
        else:
            x0 = int(cv.rng.integers(0, cv.w - width))
            road[:, x0: x0 + width] = True
    # roads cross the river as bridges
    cv.labels[road] = LandCoverClass.DIS
    return road


def _paint_buildings(cv: _Canvas, building_target, shadow_target, dark_share, occupied) -> None:
    built = np.zeros_like(occupied)
    free_classes = (LandCoverClass.BSS, LandCoverClass.VEG)
    for _ in range(20000):
        roof_frac = np.count_nonzero(built) / built.size
        if roof_frac >= building_target:
            break
        bh, bw = (int(v) for v in cv.rng.integers(12, 40, size=2))
        y0 = int(cv.rng.integers(0, cv.h - bh))
        x0 = int(cv.rng.integers(0, cv.w - bw))
        s = int(cv.rng.integers(4, 11))  # shadow length grows with building height
        y1, x1 = min(cv.h, y0 + bh + s), min(cv.w, x0 + bw + s)
        gy0, gx0 = max(0, y0 - 2), max(0, x0 - 2)
        if occupied[gy0:y1 + 2, gx0:x1 + 2].any():
            continue
        if not np.isin(cv.labels[y0:y1, x0:x1], [int(c) for c in free_classes]).all():
            continue
        dark = cv.rng.random() < dark_share
        if cv.fraction(LandCoverClass.SHA) < shadow_target:
            # sun in the north-west: shadow falls south and east of the roof
            cv.labels[y0 + s: y1, x0 + s: x1] = LandCoverClass.SHA
        cv.labels[y0: y0 + bh, x0: x0 + bw] = LandCoverClass.DIS if dark else LandCoverClass.BIS
        occupied[y0:y1, x0:x1] = True
        built[y0: y0 + bh, x0: x0 + bw] = True


def synthesize_labels(spec: SceneSpec) -> np.ndarray:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = np.full((spec.height, spec.width), int(LandCoverClass.BSS), dtype=np.uint8)
    cv = _Canvas(labels, rng)
    _paint_vegetation(cv, spec.vegetation_fraction)
    _paint_water(cv, spec.water_fraction)
    road = _paint_roads(cv, spec.road_fraction)
    occupied = road | (labels == LandCoverClass.WAT)
    _paint_buildings(cv, spec.building_fraction, spec.shadow_fraction, spec.dark_roof_share, occupied)
    return labels


def synthesize_scene(spec: SceneSpec | None = None) -> tuple[RasterImage, np.ndarray]:
    """Return (high-resolution 4-band reflectance, uint8 label raster)."""
    spec = spec or SceneSpec()
    labels = synthesize_labels(spec)
    # separate stream for the spectra so the layout is independent of noise settings
    rng = np.random.default_rng([spec.seed, 1])
    data = np.empty((4, spec.height, spec.width))
    noise = rng.standard_normal((4, spec.height, spec.width))
    for c in LandCoverClass:
        cls_spec = spec.class_spectra[c.name]
        mask = labels == int(c)
        for k in range(4):
            data[k][mask] = cls_spec.mean[k] + cls_spec.noise_std * noise[k][mask]
    np.clip(data, 0.0, 1.0, out=data)
    return RasterImage(data, spec.pixel_size_m), labels


def make_pan(hr_ms: RasterImage, weights=DEFAULT_PAN_WEIGHTS) -> RasterImage:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (hr_ms.bands,):
        raise ValueError(f"{w.size} PAN weights for a {hr_ms.bands}-band image")
    if np.any(w < 0):
        raise ValueError(f"PAN weights must be non-negative, got {tuple(weights)}")
    return RasterImage(np.tensordot(w, hr_ms.data, axes=1)[None], hr_ms.pixel_size_m)


def make_ms(hr_ms: RasterImage, ratio: int) -> RasterImage:
    return degrade(hr_ms, ratio)


def class_pixel_counts(labels: np.ndarray) -> dict:
    return {c.name: int(np.count_nonzero(labels == int(c))) for c in LandCoverClass}
