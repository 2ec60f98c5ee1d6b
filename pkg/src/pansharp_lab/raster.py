"""Raster container, flat binary format, resampling and band statistics."""
from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Blue, Green, Red, NIR
BAND_NAMES = ("blue", "green", "red", "nir")
BLUE, GREEN, RED, NIR = range(4)
TRUE_COLOR = (RED, GREEN, BLUE)
FALSE_COLOR = (NIR, RED, GREEN)

PAN_PIXEL_SIZE_M = 2.5
MS_PIXEL_SIZE_M = 10.0


class RasterError(ValueError):
    """Invalid raster data, header or file."""


class ResampleKernel(enum.Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"

    @classmethod
    def parse(cls, value: "str | ResampleKernel") -> "ResampleKernel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown resample kernel {value!r} (choose from {choices})") from None


@dataclass(frozen=True, eq=False)
class RasterImage:
    """A band-sequential grid of finite samples.

    ``data`` has shape ``(bands, height, width)`` and is stored as float64.
    The array is made read-only on construction so images can be shared.
    """

    data: np.ndarray
    pixel_size_m: float = 1.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise RasterError(f"raster data must be (bands, height, width), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.count_nonzero(~np.isfinite(arr)))
            raise RasterError(f"raster contains {bad} non-finite samples")
        if not (self.pixel_size_m > 0 and math.isfinite(self.pixel_size_m)):
            raise RasterError(f"pixel_size_m must be positive, got {self.pixel_size_m}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "pixel_size_m", float(self.pixel_size_m))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def band(self, k: int) -> np.ndarray:
        return self.data[k]

    def header(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "bands": self.bands,
            "pixel_size_m": self.pixel_size_m,
        }

    def with_data(self, data, pixel_size_m: float | None = None) -> "RasterImage":
        return RasterImage(data, self.pixel_size_m if pixel_size_m is None else pixel_size_m)


@dataclass(frozen=True)
class BandStats:
    mean: float
    variance: float
    min: float
    max: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


# -- file format -------------------------------------------------------------

def _paths(path) -> tuple[Path, Path]:
    """(payload, sidecar) for a raster path; either file's name is accepted."""
    path = Path(path)
    if path.suffix == ".json":
        return path.with_suffix(".bin"), path
    if path.suffix == ".bin":
        return path, path.with_suffix(".json")
    return path, path.with_name(path.name + ".json")


def save_raster(image: RasterImage, path) -> None:
    """Write ``image`` as little-endian float32 BSQ plus a JSON header sidecar.

    ``path`` names the payload (``scene.bin``); the header goes to
    ``scene.json``.
    """
    payload, sidecar = _paths(path)
    if not payload.parent.is_dir():
        raise RasterError(f"output directory does not exist: {payload.parent}")
    payload.write_bytes(image.data.astype("<f4").tobytes(order="C"))
    sidecar.write_text(json.dumps(image.header(), indent=2) + "\n")


def load_raster(path) -> RasterImage:
    payload, sidecar = _paths(path)
    if not payload.is_file():
        raise RasterError(f"raster payload not found: {payload}")
    if not sidecar.is_file():
        raise RasterError(f"raster header not found: {sidecar}")
    try:
        header = json.loads(sidecar.read_text())
        width, height, bands = (int(header[k]) for k in ("width", "height", "bands"))
        pixel_size = float(header["pixel_size_m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterError(f"malformed raster header {sidecar}: {exc}") from exc
    if width < 1 or height < 1 or bands < 1 or not pixel_size > 0:
        raise RasterError(f"raster header fields must be positive: {header}")
    raw = payload.read_bytes()
    expected = width * height * bands * 4
    if len(raw) != expected:
        raise RasterError(
            f"payload size mismatch for {payload}: header declares {bands}x{height}x{width} "
            f"({expected} bytes), file has {len(raw)} bytes"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(bands, height, width)
    return RasterImage(data.astype(np.float64), pixel_size)


# -- resampling ---------------------------------------------------------------

def _check_factor(factor) -> int:
    if isinstance(factor, bool) or not float(factor).is_integer():
        raise ValueError(f"resampling factor must be an integer, got {factor!r}")
    factor = int(factor)
    if factor < 2:
        raise ValueError(f"resampling factor must be >= 2, got {factor}")
    return factor


def _cubic_weight(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


def interpolation_matrix(n: int, factor: int, kernel: ResampleKernel) -> np.ndarray:
    """(n*factor, n) matrix mapping a 1-D signal onto the upsampled grid.

    Output sample ``i`` sits at source coordinate ``(i + 0.5) / factor - 0.5``
    (pixel centres aligned); taps outside the signal are clamped to the edge.
    Every row sums to one.
    """
    m = n * factor
    mat = np.zeros((m, n))
    rows = np.arange(m)
    if kernel is ResampleKernel.NEAREST:
        mat[rows, rows // factor] = 1.0
        return mat
    u = (rows + 0.5) / factor - 0.5
    base = np.floor(u).astype(int)
    if kernel is ResampleKernel.BILINEAR:
        offsets, weights = (0, 1), (1.0 - (u - base), u - base)
    else:
        offsets = (-1, 0, 1, 2)
        weights = tuple(_cubic_weight(u - (base + o)) for o in offsets)
    for off, w in zip(offsets, weights):
        np.add.at(mat, (rows, np.clip(base + off, 0, n - 1)), w)
    return mat


def upsample(image: RasterImage, factor: int, kernel=ResampleKernel.BICUBIC) -> RasterImage:
    factor = _check_factor(factor)
    kernel = ResampleKernel.parse(kernel)
    if kernel is ResampleKernel.NEAREST:
        out = np.repeat(np.repeat(image.data, factor, axis=1), factor, axis=2)
    else:
        rows = interpolation_matrix(image.height, factor, kernel)
        cols = interpolation_matrix(image.width, factor, kernel)
        out = rows @ image.data @ cols.T
    return RasterImage(out, image.pixel_size_m / factor)


def degrade(image: RasterImage, factor: int) -> RasterImage:
    """Box-filter the image and decimate by ``factor`` (block means)."""
    factor = _check_factor(factor)
    b, h, w = image.shape
    if h % factor or w % factor:
        raise ValueError(f"raster dims {w}x{h} are not divisible by {factor}")
    blocks = image.data.reshape(b, h // factor, factor, w // factor, factor)
    # offset by each block's first sample so constant blocks come back bit-exact
    first = blocks[:, :, :1, :, :1]
    means = first[:, :, 0, :, 0] + (blocks - first).mean(axis=(2, 4))
    return RasterImage(means, image.pixel_size_m * factor)


# -- statistics ---------------------------------------------------------------

def band_stats(band) -> BandStats:
    """Population statistics (divisor n) of a single band."""
    x = np.asarray(band, dtype=np.float64)
    if x.size == 0:
        raise ValueError("band_stats of an empty band")
    mean = float(x.mean())
    var = float(np.mean((x - mean) ** 2))
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        var = 0.0
    # keep min <= mean <= max despite rounding in the mean
    return BandStats(min(max(mean, lo), hi), var, lo, hi)


def histogram_match(src, target: BandStats) -> np.ndarray:
    """Affine-map ``src`` so its mean and standard deviation equal ``target``'s."""
    x = np.asarray(src, dtype=np.float64)
    if x.size == 0:
        raise ValueError("histogram_match of an empty band")
    src_mean = x.mean()
    constant = x.max() == x.min()
    if target.variance == 0:
        return np.full_like(x, target.mean)
    if constant:
        raise ValueError("degenerate source: cannot match a constant band to a non-constant target")
    src_std = np.sqrt(np.mean((x - src_mean) ** 2))
    return (x - src_mean) * (target.std / src_std) + target.mean


# -- composites ---------------------------------------------------------------

def _stretch(band: np.ndarray, low_pct: float = 2.0, high_pct: float = 98.0) -> np.ndarray:
    lo, hi = np.percentile(band, [low_pct, high_pct])
    if hi <= lo:
        return np.full(band.shape, 128, dtype=np.uint8)
    scaled = (band - lo) / (hi - lo)
    return np.round(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_composite(ms: RasterImage, band_triplet=TRUE_COLOR, path="composite.ppm") -> None:
    """Write an 8-bit binary PPM (P6) with a 2-98 % linear stretch per band."""
    triplet = tuple(int(i) for i in band_triplet)
    if len(triplet) != 3 or any(i < 0 or i >= ms.bands for i in triplet):
        raise ValueError(f"band triplet {band_triplet} invalid for a {ms.bands}-band raster")
    rgb = np.stack([_stretch(ms.data[i]) for i in triplet], axis=-1)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{ms.width} {ms.height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P6 file written by :func:`render_composite` as (height, width, 3) uint8."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path} is not a binary PPM")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"unsupported PPM maxval {maxval}")
    pixels = np.frombuffer(raw[m.end(): m.end() + width * height * 3], dtype=np.uint8)
    return pixels.reshape(height, width, 3)
