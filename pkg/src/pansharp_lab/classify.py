"""Two-step impervious-surface classification and confusion-matrix reporting."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .landcover import CLASS_NAMES, GROUP_NAMES, UNLABELED, LabeledSampleSet
from .raster import RasterImage
from .svm import (
    DEFAULT_C_GRID,
    DEFAULT_GAMMA_GRID,
    GridSearchResult,
    SvmModel,
    grid_search,
    svm_train_multiclass,
)

log = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """Rows are reference classes, columns are predicted classes."""

    classes: list
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def row_sums(self) -> dict:
        return {c: int(s) for c, s in zip(self.classes, self.counts.sum(axis=1))}

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "rows": "reference",
            "columns": "predicted",
            "counts": self.counts.tolist(),
            "correct": int(np.trace(self.counts)),
            "total": self.total,
            "overall_accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(list(d["classes"]), np.asarray(d["counts"], dtype=np.int64))


def confusion_and_accuracy(truth, predicted, classes) -> tuple[ConfusionMatrix, float]:
    truth, predicted = list(truth), list(predicted)
    if len(truth) != len(predicted):
        raise ValueError(f"length mismatch: {len(truth)} reference vs {len(predicted)} predicted labels")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        counts[index[t], index[p]] += 1
    cm = ConfusionMatrix(list(classes), counts)
    return cm, cm.accuracy


def format_binary_table(matrices: dict) -> str:
    """IS/NIS matrices side by side, one column group per image. Rows are reference classes."""
    names = list(matrices)
    label_w = len("NIS (# pixels)")
    cell = 7
    group_w = 2 * cell
    lines = [
        " " * label_w + "".join(f"{n:^{group_w}}" for n in names),
        " " * label_w + "".join(f"{g:>{cell}}" for _ in names for g in GROUP_NAMES),
    ]
    for i, g in enumerate(GROUP_NAMES):
        row = f"{g + ' (# pixels)':<{label_w}}"
        for n in names:
            row += "".join(f"{int(v):>{cell}d}" for v in matrices[n].counts[i])
        lines.append(row)
    acc = f"{'Accuracy (%)':<{label_w}}"
    for n in names:
        acc += f"{100 * matrices[n].accuracy:>{cell}.1f}" + " " * cell
    lines.append(acc.rstrip())
    return "\n".join(lines) + "\n"


def format_detail_table(matrices: dict) -> str:
    """Six-class matrices side by side, one column group per image. Rows are reference classes."""
    names = list(matrices)
    classes = matrices[names[0]].classes
    cell = 5
    group_w = cell * len(classes)
    label_w = max(len(c) for c in classes) + 1
    lines = [
        " " * label_w + "".join(f"{n:^{group_w}}" for n in names),
        " " * label_w + "".join(f"{c:>{cell}}" for _ in names for c in classes),
    ]
    for i, c in enumerate(classes):
        row = f"{c:<{label_w}}"
        for n in names:
            row += "".join(f"{int(v):>{cell}d}" for v in matrices[n].counts[i])
        lines.append(row)
    return "\n".join(lines) + "\n"


def extract_features(image: RasterImage, samples: LabeledSampleSet) -> np.ndarray:
    """One row per sample holding that pixel's band values."""
    samples.check_bounds(image.width, image.height)
    return image.data[:, samples.y, samples.x].T.copy()


def classify_image(model: SvmModel, image: RasterImage, class_codes=None) -> RasterImage:
    """Per-pixel prediction as a 1-band integer label raster.

    ``class_codes`` maps model class names to raster codes; by default the
    land-cover or surface-group code of each name is used.
    """
    if image.bands != model.n_features:
        raise ValueError(f"image has {image.bands} bands, model was trained on {model.n_features} features")
    if class_codes is None:
        names = GROUP_NAMES if set(model.classes) <= set(GROUP_NAMES) else CLASS_NAMES
        lookup = {n: i for i, n in enumerate(names)}
        class_codes = {c: lookup.get(c, UNLABELED) for c in model.classes}
    pixels = image.data.reshape(image.bands, -1).T
    codes = model.predict_codes(pixels)
    mapped = np.array([class_codes[c] for c in model.classes], dtype=np.float64)[codes]
    return RasterImage(mapped.reshape(1, image.height, image.width), image.pixel_size_m)


@dataclass
class StepResult:
    name: str
    search: GridSearchResult
    model: SvmModel
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "step": self.name,
            "C": self.search.C,
            "gamma": self.search.gamma,
            "cv_accuracy": self.search.accuracy,
            "confusion": self.confusion.to_dict(),
        }


def _run_step(name, X, samples, names_of, classes, seed, C_grid, gamma_grid, folds) -> StepResult:
    tr, te = samples.train, samples.test
    y_train = names_of(tr)
    search = grid_search(X[tr], y_train, C_grid, gamma_grid, folds=folds, seed=seed, class_order=classes)
    model = svm_train_multiclass(X[tr], y_train, search.C, search.gamma, class_order=classes)
    cm, acc = confusion_and_accuracy(names_of(te), model.predict(X[te]), classes)
    log.info("%s step: C=%g gamma=%g test accuracy %.4f", name, search.C, search.gamma, acc)
    return StepResult(name, search, model, cm)


@dataclass
class TwoStepResult:
    binary: StepResult
    detail: StepResult

    def to_dict(self) -> dict:
        return {"binary": self.binary.to_dict(), "detail": self.detail.to_dict()}


def two_step_classify(image: RasterImage, samples: LabeledSampleSet, seed: int = 0,
                      C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID, folds: int = 5) -> TwoStepResult:
    """Step 1: impervious vs non-impervious on grouped labels. Step 2: six land-cover classes."""
    X = extract_features(image, samples)
    binary = _run_step("binary", X, samples, samples.group_names, list(GROUP_NAMES), seed,
                       C_grid, gamma_grid, folds)
    present = [c for c in CLASS_NAMES if c in set(samples.label_names())]
    detail = _run_step("detail", X, samples, samples.label_names, present, seed, C_grid, gamma_grid, folds)
    return TwoStepResult(binary, detail)


def detail_only(image: RasterImage, samples: LabeledSampleSet, seed: int = 0,
                C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID, folds: int = 5) -> StepResult:
    X = extract_features(image, samples)
    present = [c for c in CLASS_NAMES if c in set(samples.label_names())]
    return _run_step("detail", X, samples, samples.label_names, present, seed, C_grid, gamma_grid, folds)
