"""Learn multiresolutions from data by exact minimum-cost pairing.

At each level the nodes of ``S_j`` are paired so that the summed absolute
differences between paired scattering vectors, over the training set, is
minimal. For nonnegative signals that sum is exactly the growth of
``sum_i ||S_{j+1} x_i||_1`` over ``sum_i ||S_j x_i||_1``, so each level
greedily minimizes the l1 norm of the next layer.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .matching import BRUTE_FORCE_LIMIT, brute_force_matching, min_weight_perfect_matching
from .multires import MultiresApprox, build_from_pairings, is_power_of_two
from .scattering import cascade_step

log = logging.getLogger(__name__)

COST_SCALE = 2 ** 20


@dataclass(frozen=True)
class PairingCostMatrix:
    costs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {c.shape}")
        if not np.array_equal(c, c.T) or np.any(np.diag(c) != 0) or np.any(c < 0):
            raise ValueError("cost matrix must be symmetric, nonnegative, with zero diagonal")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @property
    def size(self) -> int:
        return self.costs.shape[0]

    def quantized(self) -> np.ndarray:
        """Integer costs ``round(c * 2**20)``; total-cost error is at most ``2**-20 * size / 2``."""
        return np.round(self.costs * COST_SCALE).astype(np.int64)

    def total(self, pairing) -> float:
        p = np.asarray(pairing)
        return float(self.costs[p[:, 0], p[:, 1]].sum())


@dataclass(frozen=True)
class MatchingResult:
    pairing: np.ndarray
    total_cost: float
    method: str

    def __post_init__(self):
        p = np.asarray(self.pairing, dtype=np.int64).reshape(-1, 2)
        p.setflags(write=False)
        object.__setattr__(self, "pairing", p)


def build_cost_matrix(layer_batch) -> PairingCostMatrix:
    """``cost[a, b] = sum_i sum_q |S x_i(a, q) - S x_i(b, q)|`` for a batch of layers.

    ``layer_batch`` is a sequence (or stacked array) of same-shaped
    ``(nodes, channels)`` tensors.
    """
    if isinstance(layer_batch, np.ndarray):
        batch = layer_batch
    else:
        layer_batch = list(layer_batch)
        if not layer_batch:
            raise ValueError("empty batch")
        shapes = {np.shape(t) for t in layer_batch}
        if len(shapes) != 1:
            raise ValueError(f"layers have different shapes: {sorted(shapes)}")
        batch = np.stack(layer_batch)
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    if batch.ndim != 3:
        raise ValueError(f"expected (batch, nodes, channels), got shape {batch.shape}")
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    # (nodes, batch * channels); pairwise cityblock distance is exactly the cost
    rows = np.ascontiguousarray(batch.transpose(1, 0, 2).reshape(batch.shape[1], -1))
    costs = _cityblock(rows)
    np.fill_diagonal(costs, 0.0)
    return PairingCostMatrix(costs)


def _cityblock(rows: np.ndarray, chunk: int = 1 << 24) -> np.ndarray:
    n, k = rows.shape
    out = np.zeros((n, n))
    step = max(1, chunk // max(1, n * k))
    for a in range(0, n, step):
        block = rows[a:a + step]
        out[a:a + step] = np.abs(block[:, None, :] - rows[None, :, :]).sum(axis=2)
    # the float sums over a and b differ in order; make the matrix exactly symmetric
    return np.minimum(out, out.T)


def blossom_matching(c: PairingCostMatrix) -> MatchingResult:
    """Exact minimum-cost perfect matching of the complete graph on ``c.size`` nodes."""
    if c.size < 2 or c.size % 2:
        raise ValueError(f"need an even number of nodes >= 2, got {c.size}")
    pairs = np.array(min_weight_perfect_matching(c.quantized()), dtype=np.int64)
    return MatchingResult(pairs, c.total(pairs), "exact-blossom")


def brute_force(c: PairingCostMatrix) -> MatchingResult:
    """Exhaustive oracle for :func:`blossom_matching`, on the same quantized costs."""
    if c.size > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} nodes, got {c.size}")
    pairs, _ = brute_force_matching(c.quantized())
    pairs = np.array(pairs, dtype=np.int64)
    return MatchingResult(pairs, c.total(pairs), "brute-force")


def _as_training(training) -> np.ndarray:
    x = np.asarray(training, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training set must be a nonempty (count, d) array")
    if not is_power_of_two(x.shape[1]):
        raise ValueError(f"signal length {x.shape[1]} is not a power of two")
    return x


@dataclass
class LevelLog:
    level: int
    total_cost: float
    seconds: float


@dataclass
class LearnReport:
    levels: list[LevelLog] = field(default_factory=list)


def learn_multires(training, J: int, *, report: LearnReport | None = None) -> MultiresApprox:
    """Greedy layerwise pairing learned from ``training`` of shape ``(count, d)``."""
    x = _as_training(training)
    d = x.shape[1]
    if not 0 <= J <= d.bit_length() - 1:
        raise ValueError(f"J={J} outside 0..log2(d)={d.bit_length() - 1}")
    layer = x[:, :, None]
    pairings = []
    for j in range(J):
        t0 = time.perf_counter()
        result = blossom_matching(build_cost_matrix(layer))
        pairings.append(result.pairing)
        layer = cascade_step(layer, result.pairing)
        dt = time.perf_counter() - t0
        log.debug("level %d: %d nodes, cost %.6g, %.2fs", j, d >> j, result.total_cost, dt)
        if report is not None:
            report.levels.append(LevelLog(j, result.total_cost, dt))
    return build_from_pairings(d, pairings).canonical()


def split_subsets(count: int, N: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``range(count)`` with ``seed`` and cut it into ``N`` near-equal disjoint parts."""
    if N < 1:
        raise ValueError("N must be positive")
    if N > count:
        raise ValueError(f"N={N} exceeds the training size {count}")
    order = np.random.default_rng(seed).permutation(count)
    return [np.sort(part) for part in np.array_split(order, N)]


def learn_ensemble(training, J: int, N: int, seed: int) -> tuple[list[MultiresApprox], list[np.ndarray]]:
    """One :func:`learn_multires` per disjoint subset; returns members and the subset indices."""
    x = _as_training(training)
    subsets = split_subsets(len(x), N, seed)
    members = []
    for k, idx in enumerate(subsets):
        log.info("ensemble member %d/%d on %d signals", k + 1, N, len(idx))
        members.append(learn_multires(x[idx], J))
    return members, subsets


def save_ensemble(directory: str | Path, members: Sequence[MultiresApprox],
                  subsets: Sequence[np.ndarray] | None = None, seed: int | None = None) -> Path:
    """One ``member_<k>.json`` per multiresolution plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, m in enumerate(members):
        name = f"member_{k}.json"
        (directory / name).write_text(m.to_json())
        files.append(name)
    manifest = {
        "seed": seed,
        "members": files,
        "subsets": [np.asarray(s).tolist() for s in subsets] if subsets is not None else None,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def load_ensemble(path: str | Path) -> tuple[list[MultiresApprox], dict]:
    """Read a manifest written by :func:`save_ensemble` (a directory or the manifest file)."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    manifest = json.loads(path.read_text())
    members = [MultiresApprox.from_json((path.parent / name).read_text()) for name in manifest["members"]]
    return members, manifest
