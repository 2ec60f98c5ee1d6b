"""Soft-margin RBF support vector machines trained with SMO.

Binary machines solve the dual with :func:`pansharp_lab._kernels.smo_solve`;
multiclass models are one-vs-one ensembles voting in class-list order.
"""
from __future__ import annotations

import itertools
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import _kernels

log = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-5, 16, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 200
MODEL_FORMAT = "pansharp-lab-svm"


class SvmError(ValueError):
    pass


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class BinaryMachine:
    """Decision f(x) = sum_i coef_i K(sv_i, x) + bias, with coef_i = alpha_i * y_i."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    C: float
    gamma: float
    support_index: np.ndarray = None  # training rows that became support vectors
    iterations: int = 0
    gap: float = 0.0

    @property
    def alpha(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    def decision_function(self, X) -> np.ndarray:
        K = _kernels.rbf_kernel(np.atleast_2d(X), self.support_vectors, self.gamma)
        return K @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, 1, -1)


def _bias(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yg[free].mean()
    else:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2 if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return -float(rho)


def solve_dual(K, y, C, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES, solver=None):
    """Run SMO on a precomputed Gram matrix. Returns (alpha, bias, iterations, gap)."""
    solver = solver or _kernels.smo_solve
    n = len(y)
    max_iter = max(100_000, max_passes * n)
    alpha, grad, it, gap = solver(K, y, C, tol, max_iter)
    if gap >= tol:
        warnings.warn(
            f"SMO stopped after {it} iterations with KKT gap {gap:.3g} >= tol {tol}",
            ConvergenceWarning,
            stacklevel=3,
        )
    return alpha, _bias(alpha, grad, y, C), it, gap


def _check_binary(y, C, gamma):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SvmError("binary labels must be +1/-1")
    if not ((y > 0).any() and (y < 0).any()):
        raise SvmError("single-class input: need at least one sample of each sign")
    if not C > 0 or not gamma > 0:
        raise SvmError(f"C and gamma must be positive, got C={C}, gamma={gamma}")
    return y


def svm_train_binary(X, y, C, gamma, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES) -> BinaryMachine:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = _check_binary(y, C, gamma)
    K = _kernels.rbf_kernel(X, X, gamma)
    alpha, b, it, gap = solve_dual(K, y, C, tol, max_passes)
    sv = alpha > 0
    return BinaryMachine(X[sv].copy(), (alpha * y)[sv], b, float(C), float(gamma), np.flatnonzero(sv), it, gap)


def kkt_violations(machine: BinaryMachine, X, y) -> np.ndarray:
    """Per-sample distance from the KKT conditions on the machine's training set.

    Zero means satisfied: free vectors sit on the margin, zero-alpha samples
    lie on or outside it, samples at the C bound on or inside it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    margin = y * machine.decision_function(X)
    alpha = np.zeros(len(y))
    alpha[machine.support_index] = machine.alpha
    viol = np.zeros(len(y))
    lower = alpha <= 0
    upper = alpha >= machine.C
    free = ~lower & ~upper
    viol[free] = np.abs(margin[free] - 1)
    viol[lower] = np.maximum(0, 1 - margin[lower])
    viol[upper] = np.maximum(0, margin[upper] - 1)
    return viol


# -- multiclass ---------------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


@dataclass
class PairMachine:
    first: int
    second: int
    sv_index: np.ndarray  # rows of SvmModel.support_vectors
    dual_coef: np.ndarray
    bias: float
    iterations: int = 0
    gap: float = 0.0


@dataclass
class SvmModel:
    classes: list
    C: float
    gamma: float
    scaler: Standardizer
    support_vectors: np.ndarray
    machines: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.scaler.mean.shape[0]

    def _votes(self, Xs: np.ndarray) -> np.ndarray:
        K = _kernels.rbf_kernel(Xs, self.support_vectors, self.gamma)
        votes = np.zeros((Xs.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(Xs.shape[0])
        for m in self.machines:
            f = K[:, m.sv_index] @ m.dual_coef + m.bias
            winner = np.where(f > 0, m.first, m.second)
            votes[rows, winner] += 1
        return votes

    def predict_codes(self, X, chunk: int = 8192) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise SvmError(f"feature dimension {X.shape[1]} does not match model ({self.n_features})")
        Xs = self.scaler.transform(X)
        out = np.empty(X.shape[0], dtype=np.int64)
        for start in range(0, X.shape[0], chunk):
            # argmax returns the first maximum: ties go to the earlier class
            out[start: start + chunk] = np.argmax(self._votes(Xs[start: start + chunk]), axis=1)
        return out

    def predict(self, X) -> list:
        return [self.classes[i] for i in self.predict_codes(X)]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "kernel": "rbf",
            "classes": list(self.classes),
            "C": self.C,
            "gamma": self.gamma,
            "scaler": {"mean": self.scaler.mean.tolist(), "std": self.scaler.std.tolist()},
            "support_vectors": self.support_vectors.tolist(),
            "machines": [
                {
                    "pair": [self.classes[m.first], self.classes[m.second]],
                    "sv_index": m.sv_index.tolist(),
                    "dual_coef": m.dual_coef.tolist(),
                    "bias": m.bias,
                    "iterations": m.iterations,
                }
                for m in self.machines
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("format") != MODEL_FORMAT:
            raise SvmError("not a pansharp-lab SVM model file")
        classes = list(d["classes"])
        index = {c: i for i, c in enumerate(classes)}
        machines = [
            PairMachine(
                index[m["pair"][0]],
                index[m["pair"][1]],
                np.asarray(m["sv_index"], dtype=np.int64),
                np.asarray(m["dual_coef"], dtype=np.float64),
                float(m["bias"]),
                int(m.get("iterations", 0)),
            )
            for m in d["machines"]
        ]
        scaler = Standardizer(np.asarray(d["scaler"]["mean"]), np.asarray(d["scaler"]["std"]))
        svs = np.asarray(d["support_vectors"], dtype=np.float64).reshape(-1, len(scaler.mean))
        return cls(classes, float(d["C"]), float(d["gamma"]), scaler, svs, machines)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        return cls.from_dict(json.loads(text))


def _class_codes(labels, class_order=None):
    labels = list(labels)
    present = set(labels)
    if class_order is None:
        classes = sorted(present)
    else:
        unknown = present - set(class_order)
        if unknown:
            raise SvmError(f"labels not in class order: {sorted(unknown)}")
        classes = [c for c in class_order if c in present]
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[v] for v in labels], dtype=np.int64)


def _fit_pairs(Ks, codes, n_classes, C, tol, max_passes):
    """Train every class pair from the scaled-feature Gram matrix ``Ks``."""
    fitted = []
    for a, b in itertools.combinations(range(n_classes), 2):
        idx = np.flatnonzero((codes == a) | (codes == b))
        y = np.where(codes[idx] == a, 1.0, -1.0)
        alpha, bias, it, gap = solve_dual(Ks[np.ix_(idx, idx)], y, C, tol, max_passes)
        sv = alpha > 0
        fitted.append((a, b, idx[sv], (alpha * y)[sv], bias, it, gap))
    return fitted


def svm_train_multiclass(X, labels, C, gamma, class_order=None, tol=DEFAULT_TOL,
                         max_passes=DEFAULT_MAX_PASSES) -> SvmModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    classes, codes = _class_codes(labels, class_order)
    if len(classes) < 2:
        raise SvmError("need at least 2 classes for multiclass training")
    if not C > 0 or not gamma > 0:
        raise SvmError(f"C and gamma must be positive, got C={C}, gamma={gamma}")
    scaler = Standardizer.fit(X)
    Xs = scaler.transform(X)
    Ks = _kernels.rbf_kernel(Xs, Xs, gamma)
    fitted = _fit_pairs(Ks, codes, len(classes), C, tol, max_passes)
    used = np.unique(np.concatenate([f[2] for f in fitted]))
    remap = {int(r): i for i, r in enumerate(used)}
    machines = [
        PairMachine(a, b, np.array([remap[int(r)] for r in rows], dtype=np.int64), coef, bias, it, gap)
        for a, b, rows, coef, bias, it, gap in fitted
    ]
    return SvmModel(classes, float(C), float(gamma), scaler, Xs[used].copy(), machines)


# -- grid search --------------------------------------------------------------

@dataclass
class GridSearchResult:
    C: float
    gamma: float
    accuracy: float
    scores: np.ndarray  # (len(C_grid), len(gamma_grid)) mean CV accuracy
    C_grid: tuple
    gamma_grid: tuple

    def __iter__(self):
        return iter((self.C, self.gamma))


def _sq_dists(A, B):
    d2 = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        d2 += (A[:, k, None] - B[None, :, k]) ** 2
    return d2


def grid_search(X, labels, C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID, folds=5, seed=0,
                class_order=None, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES) -> GridSearchResult:
    """Stratified k-fold CV accuracy over (C, gamma); ties prefer smaller C, then smaller gamma."""
    C_grid = tuple(sorted(float(c) for c in C_grid))
    gamma_grid = tuple(sorted(float(g) for g in gamma_grid))
    if not C_grid or not gamma_grid:
        raise SvmError("empty parameter grid")
    if folds < 2:
        raise SvmError(f"folds must be >= 2, got {folds}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    classes, codes = _class_codes(labels, class_order)
    if len(classes) < 2:
        raise SvmError("need at least 2 classes for grid search")
    counts = np.bincount(codes, minlength=len(classes))
    if counts.min() < folds:
        small = classes[int(np.argmin(counts))]
        raise SvmError(f"class {small!r} has {counts.min()} samples, fewer than {folds} folds")

    correct = np.zeros((len(C_grid), len(gamma_grid)), dtype=np.int64)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for train, test in splitter.split(np.zeros(len(codes)), codes):
        scaler = Standardizer.fit(X[train])
        Xtr, Xte = scaler.transform(X[train]), scaler.transform(X[test])
        d_train, d_test = _sq_dists(Xtr, Xtr), _sq_dists(Xte, Xtr)
        ctr, cte = codes[train], codes[test]
        for gi, gamma in enumerate(gamma_grid):
            K_train, K_test = np.exp(-gamma * d_train), np.exp(-gamma * d_test)
            for ci, C in enumerate(C_grid):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    fitted = _fit_pairs(K_train, ctr, len(classes), C, tol, max_passes)
                votes = np.zeros((len(test), len(classes)), dtype=np.int64)
                rows = np.arange(len(test))
                for a, b, sv_rows, coef, bias, _, _ in fitted:
                    f = K_test[:, sv_rows] @ coef + bias
                    votes[rows, np.where(f > 0, a, b)] += 1
                correct[ci, gi] += int(np.sum(np.argmax(votes, axis=1) == cte))
    scores = correct / len(codes)
    # row-major argmax over ascending grids = smallest C, then smallest gamma
    ci, gi = np.unravel_index(int(np.argmax(correct)), correct.shape)
    log.info("grid search best C=%g gamma=%g cv-accuracy=%.4f", C_grid[ci], gamma_grid[gi], scores[ci, gi])
    return GridSearchResult(C_grid[ci], gamma_grid[gi], float(scores[ci, gi]), scores, C_grid, gamma_grid)
