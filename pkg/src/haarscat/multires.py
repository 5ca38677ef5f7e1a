"""Multiresolution approximations of a vertex set.

A multiresolution is a stack of pairings. The pairing at level ``j`` matches
the ``d / 2**j`` nodes of that level two by two; pair ``n`` becomes node ``n``
of level ``j + 1``. The vertex sets ``V[j][n]`` follow by merging the two
level-``j`` sets of each pair, so every level partitions ``{0, ..., d-1}``
into sets of size ``2**j``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"{n} is not a power of 2")
    return n.bit_length() - 1


@dataclass(frozen=True)
class Graph:
    """Unweighted undirected graph on vertices ``0..vertex_count-1``."""

    vertex_count: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.vertex_count < 1:
            raise ValueError("vertex_count must be positive")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on vertex {a}")
            if not (0 <= a < self.vertex_count and 0 <= b < self.vertex_count):
                raise ValueError(f"edge ({a}, {b}) out of range")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, vertex_count: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        return cls(vertex_count, frozenset(edges))

    @property
    def neighbors(self) -> tuple[frozenset[int], ...]:
        return _neighbor_sets(self)

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def is_connected_subset(self, vertices: Iterable[int]) -> bool:
        """True when ``vertices`` induces a connected subgraph (empty counts)."""
        vs = set(int(v) for v in vertices)
        if len(vs) <= 1:
            return True
        nbrs = self.neighbors
        start = next(iter(vs))
        seen = {start}
        todo = deque([start])
        while todo:
            u = todo.popleft()
            for w in nbrs[u]:
                if w in vs and w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(vs)

    def relabeled(self, perm: Sequence[int]) -> "Graph":
        """Graph on scrambled indices, where scrambled vertex ``i`` is old vertex ``perm[i]``."""
        inv = np.argsort(np.asarray(perm))
        return Graph.from_edges(self.vertex_count, ((inv[a], inv[b]) for a, b in self.edges))


@lru_cache(maxsize=32)
def _neighbor_sets(g: Graph) -> tuple[frozenset[int], ...]:
    nb: list[set[int]] = [set() for _ in range(g.vertex_count)]
    for a, b in g.edges:
        nb[a].add(b)
        nb[b].add(a)
    return tuple(frozenset(s) for s in nb)


def _check_pairing(pairs: np.ndarray, size: int, level: int) -> None:
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError(f"level {level}: pairing must be a sequence of index pairs")
    if 2 * len(pairs) != size:
        raise ValueError(f"level {level}: expected {size // 2} pairs over {size} nodes, got {len(pairs)}")
    flat = pairs.ravel()
    if flat.min(initial=0) < 0 or flat.max(initial=0) >= size:
        raise ValueError(f"level {level}: pair index out of range 0..{size - 1}")
    counts = np.bincount(flat, minlength=size)
    if np.any(counts != 1):
        bad = np.flatnonzero(counts != 1)
        raise ValueError(f"level {level}: not a perfect matching (indices {bad.tolist()} used {counts[bad].tolist()} times)")


@dataclass(frozen=True, eq=False)
class MultiresApprox:
    """Immutable multiresolution approximation.

    ``pairings[j]`` is an ``(d / 2**(j+1), 2)`` integer array. ``vertex_sets[j]``
    is a ``(d / 2**j, 2**j)`` array whose row ``n`` lists the sorted vertices of
    ``V[j][n]``; level 0 holds the singletons.
    """

    d: int
    pairings: tuple[np.ndarray, ...]
    vertex_sets: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def J(self) -> int:
        return len(self.pairings)

    def __eq__(self, other):
        if not isinstance(other, MultiresApprox):
            return NotImplemented
        return self.d == other.d and self.J == other.J and all(
            np.array_equal(p, q) for p, q in zip(self.pairings, other.pairings))

    def __hash__(self):
        return hash((self.d, tuple(p.tobytes() for p in self.pairings)))

    def truncated(self, J: int) -> "MultiresApprox":
        if not 0 <= J <= self.J:
            raise ValueError(f"J={J} outside 0..{self.J}")
        return MultiresApprox(self.d, self.pairings[:J], self.vertex_sets[:J + 1])

    def canonical(self) -> "MultiresApprox":
        """Same vertex sets, with pairs written ``(a < b)`` and sorted by ``a`` at every level.

        Sorting renumbers the nodes of the next level, so later pairings are
        relabeled to match. Row order of ``S_j`` follows the new numbering.
        """
        out = []
        relabel = np.arange(self.d)
        for p in self.pairings:
            q = relabel[p]
            q.sort(axis=1)
            order = np.argsort(q[:, 0], kind="stable")
            out.append(q[order])
            relabel = np.empty(len(order), dtype=np.int64)
            relabel[order] = np.arange(len(order))
        return build_from_pairings(self.d, out)

    def permuted(self, perm: Sequence[int]) -> "MultiresApprox":
        """Multiresolution acting on scrambled signals ``y = x[perm]``.

        The transform of ``y`` under the result equals the transform of ``x``
        under ``self``, row for row: only the level-0 indices are renamed.
        """
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.d)):
            raise ValueError("perm must be a permutation of 0..d-1")
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.d)
        if self.J == 0:
            return self
        first = inv[self.pairings[0]]
        return build_from_pairings(self.d, (first, *self.pairings[1:]))

    def sets(self, j: int) -> list[list[int]]:
        return [row.tolist() for row in self.vertex_sets[j]]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "J": self.J,
            "pairings": [[[int(a), int(b)] for a, b in p] for p in self.pairings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "MultiresApprox":
        m = build_from_pairings(int(doc["d"]), doc["pairings"])
        if "J" in doc and int(doc["J"]) != m.J:
            raise ValueError(f"J={doc['J']} does not match {m.J} pairings")
        return m

    @classmethod
    def from_json(cls, text: str) -> "MultiresApprox":
        return cls.from_dict(json.loads(text))


def build_from_pairings(d: int, pairings: Sequence) -> MultiresApprox:
    """Validate ``pairings`` and derive the nested vertex sets.

    >>> m = build_from_pairings(4, [[(0, 1), (2, 3)], [(0, 1)]])
    >>> m.sets(2)
    [[0, 1, 2, 3]]
    """
    if not is_power_of_two(d):
        raise ValueError(f"d={d} must be a power of 2")
    arrays = []
    sets = [np.arange(d, dtype=np.int64)[:, None]]
    size = d
    for j, p in enumerate(pairings):
        arr = np.array(p, dtype=np.int64).reshape(-1, 2) if len(p) else np.zeros((0, 2), np.int64)
        if size < 2:
            raise ValueError(f"level {j}: nothing left to pair")
        _check_pairing(arr, size, j)
        arr.setflags(write=False)
        arrays.append(arr)
        prev = sets[-1]
        merged = np.sort(np.concatenate([prev[arr[:, 0]], prev[arr[:, 1]]], axis=1), axis=1)
        merged.setflags(write=False)
        sets.append(merged)
        size //= 2
    sets[0].setflags(write=False)
    return MultiresApprox(d, tuple(arrays), tuple(sets))


def identity_multires(d: int, J: int) -> MultiresApprox:
    """Dyadic multiresolution pairing consecutive nodes ``(2n, 2n+1)``."""
    if J > log2_exact(d):
        raise ValueError(f"J={J} exceeds log2(d)={log2_exact(d)}")
    return build_from_pairings(d, [np.arange(d >> j).reshape(-1, 2) for j in range(J)])


def random_multires(d: int, J: int, rng: np.random.Generator) -> MultiresApprox:
    """Uniformly shuffled pairings at every level; no geometry involved."""
    if J > log2_exact(d):
        raise ValueError(f"J={J} exceeds log2(d)={log2_exact(d)}")
    return build_from_pairings(d, [rng.permutation(d >> j).reshape(-1, 2) for j in range(J)])


def pad_to_power_of_two(signals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad the last axis up to the next power of 2.

    Returns the padded array and a boolean mask that is False on padded vertices.
    """
    signals = np.asarray(signals, dtype=np.float64)
    d0 = signals.shape[-1]
    d = 1 << max(0, (d0 - 1).bit_length())
    pad = [(0, 0)] * (signals.ndim - 1) + [(0, d - d0)]
    mask = np.zeros(d, dtype=bool)
    mask[:d0] = True
    return np.pad(signals, pad), mask


# ---------------------------------------------------------------------------
# Known-geometry constructions on image grids
# ---------------------------------------------------------------------------

def _block_shapes(width: int, height: int) -> list[tuple[int, int, str | None]]:
    # Level j merges along x when j is even, along y when j is odd, falling
    # back to the other axis once one side of the grid is exhausted.
    w = h = 1
    shapes: list[tuple[int, int, str | None]] = [(1, 1, None)]
    j = 0
    while w * h < width * height:
        along_x = (j % 2 == 0 and w < width) or h >= height
        if along_x:
            w *= 2
        else:
            h *= 2
        shapes.append((w, h, "x" if along_x else "y"))
        j += 1
    return shapes


def _adjacent8(p: tuple[int, int], q: tuple[int, int]) -> bool:
    return max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1


@lru_cache(maxsize=16)
def grid_traversal(width: int, height: int) -> tuple[tuple[int, int], ...]:
    """Closed 8-connected tour of a ``width x height`` grid, as ``(x, y)`` cells.

    Every aligned run of ``2**j`` consecutive cells is one block of the
    alternating horizontal/vertical dyadic tiling (horizontal pairs at even
    levels on square and wide grids, vertical ones on tall grids), and the
    last cell touches the first. Side ratios above 2 admit no such tour. Any
    cyclic run of the tour is therefore a connected vertex set.
    """
    if not (is_power_of_two(width) and is_power_of_two(height)):
        raise ValueError("grid sides must be powers of 2")
    if max(width, height) > 2 * min(width, height):
        # both ends of a closed tour would sit in the same half of the last block
        raise ValueError(f"no closed tour for a {width}x{height} grid: side ratio exceeds 2")
    if height > width:
        # the last two merges must use different axes, so tall grids start vertically
        return tuple((y, x) for x, y in grid_traversal(height, width))
    shapes = _block_shapes(width, height)

    @lru_cache(maxsize=None)
    def tour(level: int, s: tuple[int, int], e: tuple[int, int]):
        if level == 0:
            return ((0, 0),) if s == e == (0, 0) else None
        cw, ch, _ = shapes[level - 1]
        axis = shapes[level][2]
        shift = (cw, 0) if axis == "x" else (0, ch)
        in_first = lambda p: p[0] < cw and p[1] < ch  # noqa: E731
        for first_half_first in (True, False):
            if in_first(s) != first_half_first or in_first(e) == first_half_first:
                continue
            off1 = (0, 0) if first_half_first else shift
            off2 = shift if first_half_first else (0, 0)
            s1 = (s[0] - off1[0], s[1] - off1[1])
            e2 = (e[0] - off2[0], e[1] - off2[1])
            for x1 in range(cw):
                for y1 in range(ch):
                    if cw * ch > 1 and (x1, y1) == s1:
                        continue
                    p1 = (x1 + off1[0], y1 + off1[1])
                    for dx in (-1, 0, 1):
                        for dy in (-1, 0, 1):
                            if dx == dy == 0:
                                continue
                            q2 = (p1[0] + dx - off2[0], p1[1] + dy - off2[1])
                            if not (0 <= q2[0] < cw and 0 <= q2[1] < ch):
                                continue
                            if cw * ch > 1 and q2 == e2:
                                continue
                            t1 = tour(level - 1, s1, (x1, y1))
                            if t1 is None:
                                continue
                            t2 = tour(level - 1, q2, e2)
                            if t2 is None:
                                continue
                            return tuple((a + off1[0], b + off1[1]) for a, b in t1) + tuple(
                                (a + off2[0], b + off2[1]) for a, b in t2)
        return None

    top = len(shapes) - 1
    if top == 0:
        return ((0, 0),)
    for sx in range(width):
        for sy in range(height):
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    e = (sx + dx, sy + dy)
                    if (dx, dy) == (0, 0) or not (0 <= e[0] < width and 0 <= e[1] < height):
                        continue
                    t = tour(top, (sx, sy), e)
                    if t is not None:
                        return t
    raise RuntimeError(f"no closed tour found for a {width}x{height} grid")  # pragma: no cover


@dataclass(frozen=True)
class GridVariant:
    """One connected grid multiresolution: a grid symmetry plus a tour offset.

    ``rotation`` counts quarter turns and ``swap`` transposes the grid before
    rotating; both are restricted to symmetries that map the grid onto itself.
    ``offset`` slides every vertex set along the closed tour by that many cells.
    """

    offset: int = 0
    rotation: int = 0
    swap: bool = False


N_OFFSETS = 8


def grid_variants(width: int, height: int) -> list[GridVariant]:
    """All variants for a grid: 8 offsets times its symmetry group (64 on square grids)."""
    if width == height:
        syms = [(r, s) for s in (False, True) for r in range(4)]
    else:
        syms = [(0, False), (2, False)]
    d = width * height
    offsets = range(min(N_OFFSETS, d))
    return [GridVariant(o, r, s) for o in offsets for r, s in syms]


def _apply_symmetry(cells: np.ndarray, width: int, height: int, rotation: int, swap: bool) -> np.ndarray:
    x, y = cells[:, 0].copy(), cells[:, 1].copy()
    w, h = width, height
    if swap:
        x, y = y, x
        w, h = h, w
    for _ in range(rotation % 4):
        # quarter turn: (x, y) -> (h - 1 - y, x) on a w x h grid
        x, y = h - 1 - y, x
        w, h = h, w
    if (w, h) != (width, height):
        raise ValueError("symmetry does not map the grid onto itself")
    return np.stack([x, y], axis=1)


def grid_multires(width: int, height: int, J: int, variant: GridVariant | int = 0) -> MultiresApprox:
    """Connected multiresolution of the pixel grid (pixel index ``y * width + x``).

    Variant 0 is the plain tiling: level-``j`` pairs join blocks horizontally
    for even ``j`` and vertically for odd ``j``. ``variant`` may be a
    :class:`GridVariant` or an index into :func:`grid_variants`.
    """
    d = width * height
    if width < 1 or height < 1 or not is_power_of_two(d):
        raise ValueError(f"{width}x{height} grid does not have a power-of-2 size")
    if not (is_power_of_two(width) and is_power_of_two(height)):
        raise ValueError("grid sides must be powers of 2")
    if not 0 <= J <= log2_exact(d):
        raise ValueError(f"J={J} outside 0..{log2_exact(d)}")
    if isinstance(variant, (int, np.integer)):
        variant = grid_variants(width, height)[int(variant)]
    if (variant.swap or variant.rotation % 2) and width != height:
        raise ValueError("axis swaps and quarter turns need a square grid")
    cells = np.array(grid_traversal(width, height), dtype=np.int64)
    if variant.rotation % 4 or variant.swap:
        cells = _apply_symmetry(cells, width, height, variant.rotation, variant.swap)
    order = cells[:, 1] * width + cells[:, 0]
    order = np.roll(order, -(variant.offset % d))
    pairings = []
    if J >= 1:
        pairings.append(order.reshape(-1, 2))
    for j in range(1, J):
        pairings.append(np.arange(d >> j).reshape(-1, 2))
    return build_from_pairings(d, pairings).canonical()


def grid_ensemble(width: int, height: int, J: int, N: int, seed: int = 0) -> list[MultiresApprox]:
    """``N`` grid multiresolutions with pairwise distinct hierarchies, variants drawn with ``seed``."""
    variants = grid_variants(width, height)
    out: list[MultiresApprox] = []
    for k in np.random.default_rng(seed).permutation(len(variants)):
        m = grid_multires(width, height, J, variants[k])
        if m not in out:
            out.append(m)
            if len(out) == N:
                return out
    raise ValueError(f"only {len(out)} distinct grid multiresolutions exist for J={J}, asked for {N}")


# ---------------------------------------------------------------------------
# Evaluation against a known geometry
# ---------------------------------------------------------------------------

def connectivity_fraction(m: MultiresApprox, g: Graph, active: Iterable[int] | np.ndarray | None = None) -> list[float]:
    """Fraction of sets ``V[j][n]`` inducing a connected subgraph of ``g``, per level ``j = 0..J``.

    With ``active`` (indices or a boolean mask), each set is first restricted
    to active vertices and sets with no active vertex are left out of the
    count. A level with no counted set scores 1.0.
    """
    if g.vertex_count != m.d:
        raise ValueError(f"graph has {g.vertex_count} vertices, multiresolution has d={m.d}")
    if active is None:
        keep = np.ones(m.d, dtype=bool)
    else:
        active = np.asarray(active)
        if active.dtype == bool:
            if active.shape != (m.d,):
                raise ValueError("active mask must have length d")
            keep = active
        else:
            keep = np.zeros(m.d, dtype=bool)
            keep[active.astype(np.int64)] = True
    fractions = []
    for sets in m.vertex_sets:
        good = total = 0
        for row in sets:
            vs = row[keep[row]]
            if len(vs) == 0:
                continue
            total += 1
            good += g.is_connected_subset(vs.tolist())
        fractions.append(good / total if total else 1.0)
    return fractions
