"""Haar basis of a multiresolution, used as an independent oracle for the cascade.

Nothing here calls :mod:`haarscat.scattering`. Coefficients are rebuilt from
inner products with indicator functions and Haar wavelets
``psi[j][n] = 1{V[j-1][a_n]} - 1{V[j-1][b_n]}``, one vertex set at a time.
This is slow by design.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .multires import MultiresApprox


@dataclass(frozen=True)
class Wavelet:
    level: int
    node: int
    positive: tuple[int, ...]
    negative: tuple[int, ...]

    def dot(self, x: np.ndarray) -> float:
        return float(sum(x[v] for v in self.positive) - sum(x[v] for v in self.negative))

    def dense(self, d: int) -> np.ndarray:
        out = np.zeros(d)
        out[list(self.positive)] = 1.0
        out[list(self.negative)] = -1.0
        return out


@dataclass(frozen=True)
class HaarBasis:
    d: int
    J: int
    indicators: tuple[tuple[int, ...], ...]
    wavelets: dict[int, tuple[Wavelet, ...]]

    def vectors(self) -> np.ndarray:
        """All ``d`` basis vectors as rows: indicators first, then wavelets by level."""
        rows = []
        for support in self.indicators:
            v = np.zeros(self.d)
            v[list(support)] = 1.0
            rows.append(v)
        for j in range(1, self.J + 1):
            rows.extend(w.dense(self.d) for w in self.wavelets[j])
        return np.array(rows)

    def analyze(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.vectors() @ x

    def synthesize(self, coefficients) -> np.ndarray:
        """Inverse of :meth:`analyze`; the basis is orthogonal but not normalized."""
        B = self.vectors()
        return B.T @ (np.asarray(coefficients) / (B ** 2).sum(axis=1))


def build_basis(m: MultiresApprox, J: int | None = None) -> HaarBasis:
    J = m.J if J is None else J
    if not 0 <= J <= m.J:
        raise ValueError(f"J={J} exceeds the multiresolution depth {m.J}")
    indicators = tuple(tuple(row.tolist()) for row in m.vertex_sets[J])
    wavelets = {}
    for j in range(1, J + 1):
        below = m.vertex_sets[j - 1]
        wavelets[j] = tuple(
            Wavelet(j, n, tuple(below[a].tolist()), tuple(below[b].tolist()))
            for n, (a, b) in enumerate(m.pairings[j - 1]))
    return HaarBasis(m.d, J, indicators, wavelets)


def _children_at(m: MultiresApprox, fine: int, coarse: int) -> list[list[int]]:
    # for each coarse node, the fine-level nodes whose sets it contains
    owner = np.empty(m.d, dtype=np.int64)
    for n, row in enumerate(m.vertex_sets[coarse]):
        owner[row] = n
    out: list[list[int]] = [[] for _ in range(len(m.vertex_sets[coarse]))]
    for p, row in enumerate(m.vertex_sets[fine]):
        out[owner[row[0]]].append(p)
    return out


def order0_oracle(x, b: HaarBasis) -> np.ndarray:
    """``<x, 1{V[J][n]}>`` for every node ``n`` of the top level."""
    x = np.asarray(x, dtype=np.float64)
    return np.array([sum(x[v] for v in support) for support in b.indicators])


def order1_oracle(x, b: HaarBasis, j1: int) -> np.ndarray:
    """Sum of ``|<x, psi[j1][p]>|`` over the wavelets whose support lies in ``V[J][n]``."""
    if not 1 <= j1 <= b.J:
        raise ValueError(f"scale j1={j1} outside 1..{b.J}")
    x = np.asarray(x, dtype=np.float64)
    top = [set(s) for s in b.indicators]
    out = np.zeros(len(top))
    for w in b.wavelets[j1]:
        n = next(i for i, s in enumerate(top) if w.positive[0] in s)
        out[n] += abs(w.dot(x))
    return out


def extended_map(values, m: MultiresApprox, j: int) -> np.ndarray:
    """Spread per-node values of level ``j`` onto vertices: ``out[v] = values[n]`` for ``v`` in ``V[j][n]``."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty((m.d,) + values.shape[1:])
    for n, row in enumerate(m.vertex_sets[j]):
        out[row] = values[n]
    return out


def cascade_oracle(x, m: MultiresApprox, J: int, scales: Sequence[int]) -> np.ndarray:
    """Coefficient ``S_J x(n, sum_k 2**(J - j_k))`` for every ``n``, via iterated wavelet transforms.

    Each stage takes the wavelet coefficients of the previous stage's
    vertex map at scale ``j_k``, keeps their absolute values, and spreads
    them back over ``V[j_k][p]``. The spread map is an average over each
    block, so it is divided by the block size ``2**j_{k-1}`` before the next
    inner product. The last stage is summed over the sets inside ``V[J][n]``.
    """
    scales = tuple(int(s) for s in scales)
    if not 0 <= J <= m.J:
        raise ValueError(f"J={J} exceeds the multiresolution depth {m.J}")
    if any(s < 1 or s > J for s in scales) or any(a >= b for a, b in zip(scales, scales[1:])):
        raise ValueError(f"scales {scales} must be strictly increasing within 1..{J}")
    b = build_basis(m, J)
    x = np.asarray(x, dtype=np.float64)
    if not scales:
        return order0_oracle(x, b)
    vertex_map = x
    prev_scale = 0
    coeffs = None
    for s in scales:
        coeffs = np.array([abs(w.dot(vertex_map)) for w in b.wavelets[s]]) / (1 << prev_scale)
        vertex_map = extended_map(coeffs, m, s)
        prev_scale = s
    groups = _children_at(m, scales[-1], J)
    return np.array([coeffs[g].sum() for g in groups])
