"""Gaussian-kernel one-versus-all regularized least squares.

Training solves ``(G + lam * I) W = Y`` with ``G`` the Gaussian Gram matrix
of the training rows and ``Y`` the one-hot labels; a test row is assigned
the class with the largest kernel score ``k(row, train) @ W``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-3
MEDIAN_SUBSAMPLE = 1000


def gaussian_kernel(u, v, sigma: float) -> float:
    """``exp(-||u - v||**2 / (2 sigma**2))``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.exp(-np.sum((u - v) ** 2) / (2 * sigma ** 2)))


def gram(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(-cdist(A, B, "sqeuclidean") / (2 * sigma ** 2))


def median_sigma(rows: np.ndarray, seed: int = 0, limit: int = MEDIAN_SUBSAMPLE) -> float:
    """Median pairwise distance over at most ``limit`` rows drawn with ``seed``."""
    rows = np.asarray(rows, dtype=np.float64)
    if len(rows) > limit:
        rows = rows[np.sort(np.random.default_rng(seed).choice(len(rows), limit, replace=False))]
    dist = pdist(rows)
    dist = dist[dist > 0]
    return float(np.median(dist)) if dist.size else 1.0


@dataclass(frozen=True)
class KernelModel:
    rows: np.ndarray
    weights: np.ndarray
    sigma: float
    lam: float
    classes: np.ndarray

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.rows.shape[1]:
            raise ValueError(f"expected rows of length {self.rows.shape[1]}, got {X.shape[1]}")
        return gram(X, self.rows, self.sigma) @ self.weights

    def save(self, path: str | Path) -> None:
        """JSON header (length-prefixed), then training rows and weights as little-endian doubles."""
        header = json.dumps({
            "M": int(self.rows.shape[1]), "C": len(self.classes), "rows": int(self.rows.shape[0]),
            "sigma": self.sigma, "lambda": self.lam, "classes": self.classes.tolist(),
        }).encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.rows, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "KernelModel":
        data = Path(path).read_bytes()
        (n,) = struct.unpack_from("<I", data)
        meta = json.loads(data[4:4 + n])
        body = np.frombuffer(data[4 + n:], dtype="<f8")
        rows, M, C = meta["rows"], meta["M"], meta["C"]
        if body.size != rows * (M + C):
            raise ValueError(f"{path}: payload has {body.size} doubles, expected {rows * (M + C)}")
        return cls(body[:rows * M].reshape(rows, M).copy(), body[rows * M:].reshape(rows, C).copy(),
                   meta["sigma"], meta["lambda"], np.array(meta["classes"]))


def train(rows, labels, sigma: float | None = None, lam: float = DEFAULT_LAMBDA) -> KernelModel:
    """Fit one regularized least-squares problem per class, sharing one Cholesky factor.

    If the factorization fails, ``lam`` is raised to ``10 lam`` and then
    ``100 lam`` before giving up.
    """
    rows = np.asarray(rows, dtype=np.float64)
    labels = np.asarray(labels)
    if rows.ndim != 2 or len(rows) != len(labels):
        raise ValueError("rows must be 2-D with one label per row")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    classes = np.unique(labels)
    sigma = median_sigma(rows) if sigma is None else float(sigma)
    G = gram(rows, rows, sigma)
    Y = (labels[:, None] == classes[None, :]).astype(np.float64)
    for reg in (lam, 10 * lam, 100 * lam):
        try:
            factor = cho_factor(G + reg * np.eye(len(G)), lower=True)
        except LinAlgError:
            log.warning("Cholesky failed with lambda=%g", reg)
            continue
        if reg != lam:
            log.warning("regularization raised from %g to %g", lam, reg)
        return KernelModel(rows, cho_solve(factor, Y), sigma, reg, classes)
    raise LinAlgError(f"Gram matrix is singular even with lambda={100 * lam:g}")


def predict(model: KernelModel, X) -> np.ndarray:
    """Class with the largest score; ``argmax`` resolves ties to the lowest class."""
    single = np.asarray(X).ndim == 1
    out = model.classes[np.argmax(model.scores(X), axis=1)]
    return out[0] if single else out


def error_rate(model: KernelModel, X, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(model, X) != labels))


def per_class_errors(model: KernelModel, X, labels) -> dict[int, float]:
    labels = np.asarray(labels)
    pred = predict(model, X)
    return {int(c): float(np.mean(pred[labels == c] != c)) for c in np.unique(labels)}
