"""Land-cover classes, their impervious grouping and labelled sample sets."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UNLABELED = 255


class LandCoverClass(enum.IntEnum):
    # canonical order; the integer value is the label-raster code
    BIS = 0
    DIS = 1
    VEG = 2
    WAT = 3
    BSS = 4
    SHA = 5

    @property
    def group(self) -> "SurfaceGroup":
        return SurfaceGroup.IS if self in (LandCoverClass.BIS, LandCoverClass.DIS) else SurfaceGroup.NIS

    @classmethod
    def parse(cls, name: str) -> "LandCoverClass":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(
                f"unknown land-cover label {name!r}; expected one of {', '.join(c.name for c in cls)}"
            ) from None


class SurfaceGroup(enum.IntEnum):
    IS = 0
    NIS = 1


CLASS_NAMES = tuple(c.name for c in LandCoverClass)
GROUP_NAMES = tuple(g.name for g in SurfaceGroup)


class SampleError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSampleSet:
    """Pixel samples with land-cover labels and a train/test split.

    ``x`` is the column and ``y`` the row of each sample.
    """

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray  # LandCoverClass codes
    train: np.ndarray  # bool

    def __post_init__(self):
        n = len(self.labels)
        if not (len(self.x) == len(self.y) == len(self.train) == n):
            raise SampleError("sample columns have different lengths")

    def __len__(self):
        return len(self.labels)

    @property
    def test(self) -> np.ndarray:
        return ~self.train

    def label_names(self, mask=None) -> list:
        codes = self.labels if mask is None else self.labels[mask]
        return [CLASS_NAMES[c] for c in codes]

    def group_names(self, mask=None) -> list:
        codes = self.labels if mask is None else self.labels[mask]
        return [LandCoverClass(c).group.name for c in codes]

    def counts(self, mask=None) -> dict:
        codes = self.labels if mask is None else self.labels[mask]
        return {CLASS_NAMES[c]: int(np.sum(codes == c)) for c in np.unique(codes)}

    def check_bounds(self, width: int, height: int) -> None:
        bad = (self.x < 0) | (self.x >= width) | (self.y < 0) | (self.y >= height)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise SampleError(
                f"sample ({int(self.x[i])}, {int(self.y[i])}) is outside the {width}x{height} image"
            )

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "label"])
        for x, y, c in zip(self.x, self.y, self.labels):
            w.writerow([int(x), int(y), CLASS_NAMES[c]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def split_half(labels, seed: int = 0) -> np.ndarray:
    """Per class, a seeded half of the samples (rounded up) becomes training data."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        order = rng.permutation(len(idx))
        train[idx[order[: (len(idx) + 1) // 2]]] = True
    return train


def read_samples_csv(path, seed: int = 0) -> LabeledSampleSet:
    text = Path(path).read_text()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:3]] != ["x", "y", "label"]:
        raise SampleError(f"{path}: expected header 'x,y,label', got {reader.fieldnames}")
    xs, ys, codes = [], [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            xs.append(int(row["x"]))
            ys.append(int(row["y"]))
            codes.append(int(LandCoverClass.parse(row["label"])))
        except (TypeError, ValueError) as exc:
            raise SampleError(f"{path}:{lineno}: {exc}") from None
    if not codes:
        raise SampleError(f"{path}: no samples")
    codes = np.asarray(codes, dtype=np.int64)
    return LabeledSampleSet(np.asarray(xs), np.asarray(ys), codes, split_half(codes, seed))


def interior_mask(labels: np.ndarray, margin: int) -> np.ndarray:
    """True where the (2*margin+1)^2 neighbourhood holds a single label."""
    labels = np.asarray(labels)
    h, w = labels.shape
    ok = np.zeros((h, w), dtype=bool)
    if margin == 0:
        return labels != UNLABELED
    core = labels[margin: h - margin, margin: w - margin]
    same = core != UNLABELED
    for dy in range(-margin, margin + 1):
        for dx in range(-margin, margin + 1):
            same &= labels[margin + dy: h - margin + dy, margin + dx: w - margin + dx] == core
    ok[margin: h - margin, margin: w - margin] = same
    return ok


def select_samples(labels: np.ndarray, per_class: int = 500, margin: int = 1, seed: int = 0,
                   classes=LandCoverClass) -> LabeledSampleSet:
    """Draw ``per_class`` pixels of each class from homogeneous neighbourhoods.

    Mimics picking ground truth inside clearly delineated patches. Falls back
    to any pixel of the class when the interior holds too few.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    interior = interior_mask(labels, margin)
    xs, ys, codes = [], [], []
    for c in classes:
        pool = np.flatnonzero((labels == int(c)) & interior)
        if pool.size < per_class:
            pool = np.flatnonzero(labels == int(c))
        if pool.size < per_class:
            raise SampleError(f"class {c.name} has only {pool.size} pixels, need {per_class}")
        pick = np.sort(rng.choice(pool, size=per_class, replace=False))
        r, col = np.divmod(pick, labels.shape[1])
        ys.append(r)
        xs.append(col)
        codes.append(np.full(per_class, int(c)))
    codes = np.concatenate(codes)
    return LabeledSampleSet(np.concatenate(xs), np.concatenate(ys), codes, split_half(codes, seed))
