"""Inverting the scattering from ``2**J`` interlaced multiresolutions.

Two pairings of the same nodes are interlaced when no proper subset is
closed under both, i.e. their union is one cycle through every node. Given
the next layer under both pairings, the values of each pair are known only
as a set ``{max, min}``; walking the cycle pins down where each value sits.
Member ``eps`` of a family uses pairing ``eps[j]`` at level ``j``, so members
sharing the prefix ``eps[:j]`` share the layer ``S_j`` and one level can be
undone at a time, from the top down.

At the top level only two nodes remain, both pairings coincide, and each
channel comes back as an unordered pair. Such channels are carried as
candidate vectors and resolved by the finer levels; the surviving signals
are finally checked by running the forward transform on every member.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .multires import MultiresApprox, build_from_pairings, is_power_of_two
from .scattering import transform_last

REL_TOL = 1e-9
MAX_CANDIDATES = 64


class ReconstructionError(ValueError):
    kind = "error"

    def __init__(self, message: str, level: int | None = None):
        super().__init__(message if level is None else f"level {level}: {message}")
        self.level = level


class AmbiguousError(ReconstructionError):
    kind = "ambiguous"


class InconsistentError(ReconstructionError):
    kind = "inconsistent"


def _partner(p: np.ndarray, size: int) -> np.ndarray:
    out = np.full(size, -1, dtype=np.int64)
    out[p[:, 0]] = p[:, 1]
    out[p[:, 1]] = p[:, 0]
    return out


def is_interlaced(p0, p1) -> bool:
    """True when the union of the two pairings is a single cycle through all nodes."""
    p0 = np.asarray(p0, dtype=np.int64).reshape(-1, 2)
    p1 = np.asarray(p1, dtype=np.int64).reshape(-1, 2)
    if p0.shape != p1.shape:
        raise ValueError(f"pairings of different sizes: {len(p0)} and {len(p1)} pairs")
    size = 2 * len(p0)
    if size == 0:
        return False
    for p in (p0, p1):
        if sorted(p.ravel().tolist()) != list(range(size)):
            raise ValueError("not a perfect matching of 0..size-1")
    m0, m1 = _partner(p0, size), _partner(p1, size)
    v, steps = 0, 0
    while True:
        v = m1[m0[v]]
        steps += 2
        if v == 0:
            return steps == size


@dataclass(frozen=True)
class InterlacedFamily:
    """Per-level pairing pairs ``(p0, p1)``; ``levels[j]`` acts on ``d >> j`` nodes."""

    d: int
    J: int
    levels: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if len(self.levels) != self.J:
            raise ValueError(f"expected {self.J} levels, got {len(self.levels)}")
        for j, (p0, p1) in enumerate(self.levels):
            if 2 * len(p0) != self.d >> j or not is_interlaced(p0, p1):
                raise ValueError(f"level {j}: pairings are not interlaced over {self.d >> j} nodes")

    def keys(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=self.J))

    def member(self, eps) -> MultiresApprox:
        eps = tuple(eps)
        if len(eps) != self.J:
            raise ValueError(f"eps must have length {self.J}")
        return build_from_pairings(self.d, [self.levels[j][e] for j, e in enumerate(eps)])

    def members(self) -> dict[tuple[int, ...], MultiresApprox]:
        return {eps: self.member(eps) for eps in self.keys()}

    def transform(self, x) -> dict[tuple[int, ...], np.ndarray]:
        """``S_J x`` under every member."""
        return {eps: transform_last(x, m) for eps, m in self.members().items()}


def _check_family_args(d: int, J: int):
    if not is_power_of_two(d) or d < 2:
        raise ValueError(f"d={d} must be a power of 2, at least 2")
    if not 0 <= J <= d.bit_length() - 1:
        raise ValueError(f"J={J} outside 0..log2(d)")


def standard_interlaced_family(d: int, J: int) -> InterlacedFamily:
    """``p0 = (2n, 2n+1)`` and ``p1 = (2n+1, (2n+2) mod d')`` at every level.

    Recovery needs at least two nodes left at the top, i.e. ``J < log2(d)``:
    with a single top node, ``x`` and ``2 * mean(x) - x`` have identical
    scattering under any multiresolution.
    """
    _check_family_args(d, J)
    levels = []
    for j in range(J):
        n = d >> j
        k = np.arange(n // 2)
        p0 = np.stack([2 * k, 2 * k + 1], axis=1)
        p1 = np.stack([2 * k + 1, (2 * k + 2) % n], axis=1)
        levels.append((p0, p1))
    return InterlacedFamily(d, J, tuple(levels))


def random_interlaced_family(d: int, J: int, seed: int = 0) -> InterlacedFamily:
    """Each level cuts a seeded random Hamiltonian cycle into two alternating pairings.

    Pair order (which sets the node numbering of the next level) is
    shuffled too, so no translation symmetry survives across levels.
    """
    _check_family_args(d, J)
    rng = np.random.default_rng(seed)
    levels = []
    for j in range(J):
        n = d >> j
        cycle = rng.permutation(n)
        p0 = np.stack([cycle[0::2], cycle[1::2]], axis=1)
        p1 = np.stack([cycle[1::2], np.roll(cycle[0::2], -1)], axis=1)
        levels.append((p0[rng.permutation(n // 2)], p1[rng.permutation(n // 2)]))
    return InterlacedFamily(d, J, tuple(levels))


# ---------------------------------------------------------------------------
# One level
# ---------------------------------------------------------------------------

def _scale(*arrays) -> float:
    m = max(float(np.max(np.abs(a))) if np.size(a) else 0.0 for a in arrays)
    return m if m > 0 else 1.0


class _Cycle:
    """Walk order of the cycle formed by two interlaced pairings, starting at node 0.

    ``order[t]`` is the node visited at step ``t`` and ``pair[t]`` the index,
    in ``p0`` for even ``t`` and in ``p1`` for odd ``t``, of the pair used
    to leave it.
    """

    def __init__(self, p0: np.ndarray, p1: np.ndarray):
        size = 2 * len(p0)
        index = []
        for p in (p0, p1):
            out = np.empty(size, dtype=np.int64)
            out[p[:, 0]] = out[p[:, 1]] = np.arange(len(p))
            index.append(out)
        mates = (_partner(p0, size), _partner(p1, size))
        order, pair, v = [], [], 0
        for t in range(size):
            order.append(v)
            pair.append(int(index[t % 2][v]))
            v = int(mates[t % 2][v])
        self.size = size
        self.order = order
        self.pair = pair


def _walk(cycle: _Cycle, values0, values1, tol: float) -> list[np.ndarray]:
    """Every layer whose pairs hold the values ``(hi, lo)`` of ``values0`` under ``p0`` and ``values1`` under ``p1``."""
    his = (values0[0].tolist(), values1[0].tolist())
    los = (values0[1].tolist(), values1[1].tolist())
    k0 = cycle.pair[0]
    hi, lo = his[0][k0], los[0][k0]
    out = []
    for start in ([hi] if abs(hi - lo) <= tol else [hi, lo]):
        x = np.empty(cycle.size)
        val = start
        for t, (v, k) in enumerate(zip(cycle.order, cycle.pair)):
            h, l = his[t % 2][k], los[t % 2][k]
            dh, dl = abs(val - h), abs(val - l)
            if min(dh, dl) > tol:
                break
            x[v] = val
            val = l if dh <= dl else h
        else:
            if abs(val - start) <= tol:
                out.append(x)
    return out


def _dedupe(candidates: list[np.ndarray], tol: float | None = None) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for c in candidates:
        t = REL_TOL * _scale(c) if tol is None else tol
        if not any(np.max(np.abs(c - o)) <= t for o in out):
            out.append(c)
    return out


def _solve_channel(cycle: _Cycle, s0, a0, s1, a1, tol: float) -> list[np.ndarray]:
    """Placements of one channel given its sums and absolute differences under both pairings."""
    if min(a0.min(), a1.min()) < -tol:
        return []
    a0, a1 = np.abs(a0), np.abs(a1)
    found = _walk(cycle, ((s0 + a0) / 2, (s0 - a0) / 2), ((s1 + a1) / 2, (s1 - a1) / 2), tol)
    return _dedupe(found, tol)


def invert_layer(s0, s1, p0, p1) -> np.ndarray:
    """Recover layer ``S_j`` of shape ``(d', C)`` from ``S_{j+1}`` under ``p0`` (``s0``) and ``p1`` (``s1``).

    Raises :class:`AmbiguousError` when some channel has two valid
    placements (values alternate between two levels around the cycle) and
    :class:`InconsistentError` when no placement fits.
    """
    p0 = np.asarray(p0, dtype=np.int64).reshape(-1, 2)
    p1 = np.asarray(p1, dtype=np.int64).reshape(-1, 2)
    if not is_interlaced(p0, p1):
        raise ValueError("pairings are not interlaced")
    s0, s1 = np.asarray(s0, dtype=np.float64), np.asarray(s1, dtype=np.float64)
    if s0.ndim == 1:
        s0, s1 = s0[:, None], s1[:, None]
    if s0.shape != s1.shape or s0.shape[0] != len(p0) or s0.shape[1] % 2:
        raise ValueError(f"layer shapes {s0.shape} and {s1.shape} do not fit {len(p0)} pairs")
    out = np.empty((2 * len(p0), s0.shape[1] // 2))
    cycle = _Cycle(p0, p1)
    tol = REL_TOL * _scale(s0, s1)
    for q in range(out.shape[1]):
        found = _solve_channel(cycle, s0[:, 2 * q], s0[:, 2 * q + 1], s1[:, 2 * q], s1[:, 2 * q + 1], tol)
        if not found:
            raise InconsistentError(f"channel {q} has no consistent placement")
        if len(found) > 1:
            raise AmbiguousError(f"channel {q} has {len(found)} valid placements")
        out[:, q] = found[0]
    return out


# ---------------------------------------------------------------------------
# Full depth
# ---------------------------------------------------------------------------

def reconstruct(outputs: Mapping[tuple[int, ...], np.ndarray], fam: InterlacedFamily) -> np.ndarray:
    """Recover ``x`` from ``S_J x`` under every member of ``fam``.

    ``outputs`` maps each ``eps`` to an array of shape ``(d >> J, 2**J)``.
    """
    survivors = consistent_signals(outputs, fam)
    if not survivors:
        raise InconsistentError("no signal reproduces every output", 0)
    if len(survivors) > 1:
        raise AmbiguousError(f"{len(survivors)} signals reproduce every output", 0)
    return survivors[0]


def consistent_signals(outputs: Mapping[tuple[int, ...], np.ndarray], fam: InterlacedFamily) -> list[np.ndarray]:
    """Every distinct signal found by the level-by-level search that reproduces all outputs."""
    d, J = fam.d, fam.J
    keys = fam.keys()
    missing = [eps for eps in keys if tuple(eps) not in outputs]
    if missing:
        raise ValueError(f"missing outputs for {len(missing)} members, e.g. {missing[0]}")
    outputs = {tuple(k): np.asarray(v, dtype=np.float64).reshape(d >> J, 1 << J) for k, v in outputs.items()}
    if J == 0:
        return [outputs[()][:, 0].copy()]

    # one absolute tolerance for all levels, relative to the output magnitude
    tol = REL_TOL * _scale(*outputs.values())
    # candidates[prefix][q] lists the possible columns q of S_j under that prefix
    candidates = {eps: [[outputs[eps][:, q]] for q in range(1 << J)] for eps in keys}
    for j in range(J - 1, -1, -1):
        cycle = _Cycle(*fam.levels[j])
        nxt = {}
        for prefix in itertools.product((0, 1), repeat=j):
            c0, c1 = candidates[prefix + (0,)], candidates[prefix + (1,)]
            cols = []
            for q in range(1 << j):
                found = []
                for s0, a0, s1, a1 in itertools.product(c0[2 * q], c0[2 * q + 1], c1[2 * q], c1[2 * q + 1]):
                    found.extend(_solve_channel(cycle, s0, a0, s1, a1, tol))
                found = _dedupe(found, tol)
                if not found:
                    raise InconsistentError(f"channel {q} of prefix {prefix} has no consistent placement", j)
                if len(found) > MAX_CANDIDATES:
                    raise AmbiguousError(f"channel {q} of prefix {prefix} has {len(found)} placements", j)
                cols.append(found)
            nxt[prefix] = cols
        candidates = nxt

    members = fam.members()
    check = 1e-8 * _scale(*outputs.values())
    survivors = [x for x in candidates[()][0]
                 if all(np.max(np.abs(transform_last(x, members[eps]) - outputs[eps])) <= check for eps in keys)]
    return _dedupe(survivors, tol)


def build_family(name: str, d: int, J: int, seed: int = 0) -> InterlacedFamily:
    if name == "standard":
        return standard_interlaced_family(d, J)
    if name == "random":
        return random_interlaced_family(d, J, seed)
    raise ValueError(f"unknown family {name!r}; expected 'standard' or 'random'")


def mean_reflection(x) -> np.ndarray:
    """``2 * mean(x) - x``, which has the same scattering as ``x`` whenever one node is left at the top."""
    x = np.asarray(x, dtype=np.float64)
    return 2 * x.mean() - x


def round_trip_report(d: int, J: int, trials: int, seed: int = 0, family: str = "random",
                      inputs: str = "gaussian") -> dict:
    """Reconstruct ``trials`` random signals under one family.

    ``inputs`` is 'gaussian' or 'binary' (entries in {0, 1}, a degenerate probe).

    ``max_abs_error`` covers the recovered trials (``None`` if there were
    none). ``reflection_only`` counts ambiguous trials whose sole
    alternatives are ``x`` and :func:`mean_reflection`.
    """
    if inputs not in ("gaussian", "binary"):
        raise ValueError(f"inputs must be 'gaussian' or 'binary', got {inputs!r}")
    fam = build_family(family, d, J, seed)
    members = fam.members()
    rng = np.random.default_rng(seed)
    worst, ambiguous, inconsistent, reflection = None, 0, 0, 0
    for _ in range(trials):
        x = rng.standard_normal(d) if inputs == "gaussian" else rng.integers(0, 2, d).astype(np.float64)
        outputs = {eps: transform_last(x, m) for eps, m in members.items()}
        found = consistent_signals(outputs, fam)
        if len(found) == 1:
            err = float(np.max(np.abs(found[0] - x)))
            worst = err if worst is None else max(worst, err)
        elif not found:
            inconsistent += 1
        else:
            ambiguous += 1
            expected = _dedupe([x, mean_reflection(x)], 1e-8)
            reflection += len(found) == len(expected) and all(
                any(np.max(np.abs(f - e)) <= 1e-8 for e in expected) for f in found)
    return {"d": d, "J": J, "trials": trials, "family": family, "inputs": inputs, "max_abs_error": worst,
            "ambiguous_count": ambiguous, "inconsistent_count": inconsistent, "reflection_only": reflection}
