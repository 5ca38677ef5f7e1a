"""Class-wise greedy feature selection by partial least squares.

For class ``c`` the target is the indicator ``f_c``. Each step picks the
column whose residual, after removing the span of the columns already
picked, has the largest normalized correlation ``|<f_c, r>| / ||r||`` with
the target, then orthonormalizes it. The selected directions for all
classes, stacked, form a linear map from raw features to ``M`` outputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    """Training rows by raw feature columns, with ``(multires, n, q)`` metadata per column."""

    values: np.ndarray
    columns: tuple[tuple[int, int, int], ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix has non-finite entries")
        object.__setattr__(self, "values", v)
        if self.columns is not None:
            cols = tuple(tuple(int(t) for t in c) for c in self.columns)
            if len(cols) != v.shape[1] or len(set(cols)) != len(cols):
                raise ValueError("column metadata must be unique and match the column count")
            object.__setattr__(self, "columns", cols)


@dataclass(frozen=True)
class Standardizer:
    """Zero-mean, unit-variance scaling of the non-constant columns."""

    keep: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    n_columns: int

    @classmethod
    def fit(cls, X: np.ndarray, enabled: bool = True) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # constant columns carry nothing for selection; relative check guards large offsets
        keep = np.flatnonzero(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
        if not enabled:
            return cls(keep, np.zeros(len(keep)), np.ones(len(keep)), X.shape[1])
        return cls(keep, mean[keep], std[keep], X.shape[1])

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_columns:
            raise ValueError(f"expected {self.n_columns} raw features, got {X.shape[-1]}")
        return (X[..., self.keep] - self.mean) / self.scale


@dataclass(frozen=True)
class ClassSelection:
    """Selected columns (indices into the standardized matrix) and the map to orthonormal features.

    ``coef`` is lower triangular: ``phi_tilde_k = sum_r coef[k, r] * z[:, selected[r]]``.
    """

    label: int
    selected: np.ndarray
    coef: np.ndarray
    scores: np.ndarray

    @property
    def K(self) -> int:
        return len(self.selected)


def pls_select(Z: np.ndarray, labels: np.ndarray, c: int, K: int) -> ClassSelection:
    """Greedy selection of up to ``K`` columns of ``Z`` for the one-versus-all target of class ``c``.

    Stops early when every remaining residual has norm below ``1e-12``
    times its column norm; the returned selection then has fewer entries.
    Ties go to the lowest column index.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    if Z.ndim != 2 or len(labels) != Z.shape[0]:
        raise ValueError("labels must have one entry per row")
    f = (labels == c).astype(np.float64)
    if not f.any():
        raise ValueError(f"no training row has class {c}")
    if K < 1:
        raise ValueError("K must be positive")
    R = Z.copy()
    base = np.linalg.norm(Z, axis=0)
    alive = base > 0
    Q: list[np.ndarray] = []
    T = np.zeros((K, K))
    selected, scores = [], []
    for k in range(K):
        norms = np.linalg.norm(R, axis=0)
        ok = alive & (norms > RANK_TOL * np.where(base > 0, base, 1.0))
        if not ok.any():
            log.info("class %s: rank exhausted after %d features", c, k)
            break
        score = np.zeros(Z.shape[1])
        score[ok] = np.abs(f @ R[:, ok]) / norms[ok]
        p = int(np.argmax(np.where(ok, score, -1.0)))
        # modified Gram-Schmidt on the raw column, run twice
        v = Z[:, p].copy()
        t = np.zeros(K)
        t[k] = 1.0
        for _ in range(2):
            for r, q in enumerate(Q):
                h = q @ v
                v -= h * q
                t[:k] -= h * T[r, :k]
        nv = np.linalg.norm(v)
        q = v / nv
        T[k] = t / nv
        Q.append(q)
        selected.append(p)
        scores.append(score[p])
        alive[p] = False
        R -= np.outer(q, q @ R)
    K = len(selected)
    return ClassSelection(c, np.array(selected, dtype=np.int64), T[:K, :K], np.array(scores))


@dataclass(frozen=True)
class FeatureDictionary:
    standardizer: Standardizer
    selections: tuple[ClassSelection, ...]
    columns: tuple[tuple[int, int, int], ...] | None = None

    @property
    def M(self) -> int:
        return sum(s.K for s in self.selections)

    def matrix(self) -> np.ndarray:
        """``(kept columns, M)`` matrix mapping standardized features to outputs."""
        W = np.zeros((len(self.standardizer.keep), self.M))
        at = 0
        for s in self.selections:
            W[s.selected, at:at + s.K] += s.coef.T
            at += s.K
        return W

    def project(self, raw) -> np.ndarray:
        """Map raw feature rows (or a single row) to the ``M`` selected orthonormal features."""
        return self.standardizer(raw) @ self.matrix()

    def to_dict(self) -> dict:
        st = self.standardizer
        return {
            "n_columns": st.n_columns,
            "keep": st.keep.tolist(),
            "mean": st.mean.tolist(),
            "scale": st.scale.tolist(),
            "columns": [list(c) for c in self.columns] if self.columns is not None else None,
            "classes": [
                {"label": int(s.label), "selected": s.selected.tolist(), "coef": s.coef.tolist(),
                 "scores": s.scores.tolist()}
                for s in self.selections
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureDictionary":
        st = Standardizer(np.array(doc["keep"], dtype=np.int64), np.array(doc["mean"]),
                          np.array(doc["scale"]), int(doc["n_columns"]))
        sels = tuple(
            ClassSelection(c["label"], np.array(c["selected"], dtype=np.int64),
                           np.array(c["coef"], dtype=np.float64).reshape(len(c["selected"]), -1),
                           np.array(c["scores"]))
            for c in doc["classes"])
        cols = tuple(tuple(c) for c in doc["columns"]) if doc.get("columns") is not None else None
        return cls(st, sels, cols)

    @classmethod
    def load(cls, path: str | Path) -> "FeatureDictionary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_dictionary(F: FeatureMatrix | np.ndarray, labels, K: int, *,
                     classes: Sequence[int] | None = None, standardize: bool = True) -> FeatureDictionary:
    """Standardize ``F`` and run :func:`pls_select` for each class; ``M = sum of per-class K``."""
    if not isinstance(F, FeatureMatrix):
        F = FeatureMatrix(F)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist())) if classes is None else list(classes)
    if not classes:
        raise ValueError("no classes to select for")
    st = Standardizer.fit(F.values, enabled=standardize)
    Z = st(F.values)
    sels = tuple(pls_select(Z, labels, c, K) for c in classes)
    return FeatureDictionary(st, sels, F.columns)
