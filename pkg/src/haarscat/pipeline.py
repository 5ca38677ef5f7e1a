"""End-to-end experiment steps shared by the command line and the tests.

An experiment config is a plain dict (see :data:`DEFAULTS`). Its ``dataset``
entry names a source:

``{"kind": "idx", "images": ..., "labels": ...}``
    IDX image/label files.
``{"kind": "mnist", "dir": ..., "split": "train"}``
    Standard MNIST file names inside ``dir``.
``{"kind": "csv", "path": ..., "labeled": true}``
    One signal per row, label first.
``{"kind": "synthetic_grid", "width": 16, "height": 16, "count": 2000, "steps": 4, "seed": 0}``
    Smoothed noise on an 8-neighbor grid.
``{"kind": "synthetic_sphere", "d": 1024, "threshold": 0.2, "count": 500, "steps": 4, "seed": 0}``
    Smoothed noise on a geodesic sphere graph.

Optional keys ``per_class_train``/``per_class_test``/``split_seed`` cut a
stratified train/test split and ``scramble_seed`` scrambles the vertices.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from . import classify, datasets
from .features import build_dictionary
from .multires import MultiresApprox, grid_ensemble, is_power_of_two, log2_exact, pad_to_power_of_two
from .pairing_learn import LearnReport, learn_multires, split_subsets
from .scattering import ensemble_features

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULTS: dict = {
    "dataset": None,
    "J": None,
    "m_max": 4,
    "N": 1,
    "M": None,
    "K": None,
    "sigma": None,
    "lambda": classify.DEFAULT_LAMBDA,
    "seed": 0,
    "geometry": "learn",
    "standardize": True,
}


def resolve_config(file_config: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then overrides whose value is not ``None``."""
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(copy.deepcopy(file_config or {}))
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def check_config(cfg: dict, d: int) -> None:
    J, m_max, N = cfg["J"], cfg["m_max"], cfg["N"]
    if J is None or not 0 <= J <= log2_exact(d):
        raise ValueError(f"J={J} must lie in 0..log2(d)={log2_exact(d)}")
    if not 0 <= m_max:
        raise ValueError("m_max must be nonnegative")
    if m_max > J:
        raise ValueError(f"m_max={m_max} exceeds J={J}")
    if N < 1:
        raise ValueError("N must be at least 1")
    if cfg["geometry"] not in ("learn", "grid"):
        raise ValueError(f"geometry must be 'learn' or 'grid', got {cfg['geometry']!r}")


def thread_count(requested: int | None = None) -> int:
    if requested is None:
        requested = int(os.environ.get("HAAR_THREADS", "1"))
    return max(1, int(requested))


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """``map`` over a thread pool, results in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def load_dataset(spec: dict) -> datasets.Dataset:
    """Build the full dataset described by ``spec`` (before any split)."""
    if not spec:
        raise ValueError("config has no dataset")
    kind = spec.get("kind")
    if kind == "idx":
        ds = datasets.load_idx(spec["images"], spec["labels"])
    elif kind == "mnist":
        ds = datasets.load_idx(*datasets.find_mnist(spec["dir"], spec.get("split", "train")))
    elif kind == "csv":
        ds = datasets.read_signals_csv(spec["path"], labeled=spec.get("labeled", False))
    elif kind == "synthetic_grid":
        g = datasets.grid_graph(spec["width"], spec["height"])
        ds = datasets.synthetic_smooth(g, spec["count"], spec.get("seed", 0), spec.get("steps", 4))
    elif kind == "synthetic_sphere":
        cloud = datasets.sphere_sample(spec["d"], spec["threshold"], spec.get("seed", 0))
        ds = datasets.synthetic_smooth(cloud.graph, spec["count"], spec.get("seed", 0), spec.get("steps", 4))
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if not is_power_of_two(ds.d):
        padded, _ = pad_to_power_of_two(ds.signals)
        log.info("padding signals from %d to %d samples", ds.d, padded.shape[1])
        ds = datasets.Dataset(padded, ds.labels)
    if spec.get("scramble_seed") is not None:
        ds = datasets.scramble(ds, spec["scramble_seed"])
    return ds


def split_dataset(ds: datasets.Dataset, spec: dict, part: str) -> datasets.Dataset:
    """``part`` is 'train', 'test' or 'all'; without split keys every part is the whole set."""
    if part == "all" or spec.get("per_class_train") is None:
        return ds
    if ds.labels is None:
        raise ValueError("a stratified split needs labels")
    tr, te = datasets.stratified_split(ds.labels, spec["per_class_train"], spec.get("per_class_test", 0),
                                       spec.get("split_seed", 0))
    if part == "train":
        return ds.subset(tr)
    if part == "test":
        return ds.subset(te)
    raise ValueError(f"unknown part {part!r}")


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

def build_ensemble(train: datasets.Dataset, cfg: dict, threads: int = 1) -> tuple[list[MultiresApprox], dict]:
    """Learned (``geometry='learn'``) or grid (``'grid'``) multiresolutions plus a summary."""
    check_config(cfg, train.d)
    J, N, seed = cfg["J"], cfg["N"], cfg["seed"]
    if cfg["geometry"] == "grid":
        side = int(round(np.sqrt(train.d)))
        if side * side != train.d:
            raise ValueError("grid geometry needs square images")
        members = grid_ensemble(side, side, J, N, seed)
        if train.permutation is not None:
            members = [m.permuted(train.permutation) for m in members]
        return members, {"subsets": None, "levels": None}
    subsets = split_subsets(len(train), N, seed)
    reports = [LearnReport() for _ in subsets]

    def learn(k: int) -> MultiresApprox:
        log.info("learning member %d/%d on %d signals", k + 1, N, len(subsets[k]))
        return learn_multires(train.signals[subsets[k]], J, report=reports[k])

    members = ordered_map(learn, range(N), threads)
    levels = [[{"level": lv.level, "total_cost": lv.total_cost, "seconds": lv.seconds} for lv in r.levels]
              for r in reports]
    return members, {"subsets": [s.tolist() for s in subsets], "levels": levels}


def features(signals: np.ndarray, members: Sequence[MultiresApprox], J: int, m_max: int,
             threads: int = 1, batch: int = 1024) -> np.ndarray:
    chunks = [signals[i:i + batch] for i in range(0, len(signals), batch)]
    return np.concatenate(ordered_map(lambda x: ensemble_features(x, members, J, m_max), chunks, threads))


def dictionary_size(cfg: dict, n_classes: int) -> int:
    """Per-class ``K``: explicit ``K``, else ``M // C``, else the default ``M = 1000``."""
    if cfg.get("K"):
        return int(cfg["K"])
    M = cfg.get("M") or 1000
    return max(1, int(M) // n_classes)


def classify_run(train_F: np.ndarray, train_y: np.ndarray, test_F: np.ndarray, test_y: np.ndarray,
                 cfg: dict) -> dict:
    """Select, fit and score; returns a report dict with timings."""
    t0 = time.perf_counter()
    classes = np.unique(train_y)
    K = dictionary_size(cfg, len(classes))
    dic = build_dictionary(train_F, train_y, K, standardize=cfg.get("standardize", True))
    t1 = time.perf_counter()
    model = classify.train(dic.project(train_F), train_y, cfg.get("sigma"), cfg.get("lambda", classify.DEFAULT_LAMBDA))
    t2 = time.perf_counter()
    P = dic.project(test_F)
    report = {
        "error_rate": classify.error_rate(model, P, test_y),
        "per_class_error": {str(k): v for k, v in classify.per_class_errors(model, P, test_y).items()},
        "M": dic.M,
        "K": K,
        "sigma": model.sigma,
        "lambda": model.lam,
        "train_size": int(len(train_y)),
        "test_size": int(len(test_y)),
        "timings": {"select": t1 - t0, "train": t2 - t1, "evaluate": time.perf_counter() - t2},
    }
    return report


def run_experiment(cfg: dict, threads: int = 1, dataset: datasets.Dataset | None = None) -> dict:
    """Ensemble, features, selection, classifier and test error for one config."""
    t0 = time.perf_counter()
    ds = load_dataset(cfg["dataset"]) if dataset is None else dataset
    spec = cfg["dataset"] or {}
    train, test = split_dataset(ds, spec, "train"), split_dataset(ds, spec, "test")
    members, _ = build_ensemble(train, cfg, threads)
    t1 = time.perf_counter()
    Ftr = features(train.signals, members, cfg["J"], cfg["m_max"], threads)
    Fte = features(test.signals, members, cfg["J"], cfg["m_max"], threads)
    t2 = time.perf_counter()
    report = classify_run(Ftr, train.labels, Fte, test.labels, cfg)
    report["timings"].update({"ensemble": t1 - t0, "features": t2 - t1, "total": time.perf_counter() - t0})
    report["n_features"] = int(Ftr.shape[1])
    report["config_hash"] = config_hash(cfg)
    return report
