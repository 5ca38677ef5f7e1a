"""Orthogonal Haar scattering cascade.

Layer ``j`` of a signal is a ``(d / 2**j, 2**j)`` array ``S[j][n, q]``. Going
up one level, each pair ``(a, b)`` of the pairing produces node ``n`` with
channels ``2q`` (sum) and ``2q + 1`` (absolute difference) from channel ``q``
of nodes ``a`` and ``b``. All routines accept a leading batch axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from .multires import MultiresApprox


def haar_pair(alpha, beta):
    """``(alpha, beta) -> (alpha + beta, |alpha - beta|)``; symmetric in its arguments."""
    return alpha + beta, abs(alpha - beta)


def invert_pair(s, a, *, nonnegative: bool = False):
    """Return ``(max, min)`` of the pair whose sum is ``s`` and absolute difference ``a``.

    With ``nonnegative=True`` the original values are known to be >= 0, so
    ``a > s`` cannot happen and raises ``ValueError``.
    """
    if np.any(np.asarray(a) < 0):
        raise ValueError("absolute difference must be nonnegative")
    if nonnegative and np.any(np.asarray(a) > np.asarray(s)):
        raise ValueError("inconsistent scattering pair: difference exceeds sum")
    return (s + a) / 2, (s - a) / 2


def cascade_step(layer: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Apply one pairing to ``layer`` of shape ``(..., nodes, channels)``."""
    a = layer[..., pairs[:, 0], :]
    b = layer[..., pairs[:, 1], :]
    out = np.empty(a.shape[:-1] + (2 * a.shape[-1],), dtype=layer.dtype)
    out[..., 0::2] = a + b
    np.abs(a - b, out=out[..., 1::2])
    return out


def cascade(x: np.ndarray, pairings: Sequence[np.ndarray], J: int | None = None) -> list[np.ndarray]:
    """Scattering layers ``S_0 .. S_J`` for raw pairing arrays (no validation)."""
    x = np.asarray(x, dtype=np.float64)
    J = len(pairings) if J is None else J
    layers = [x[..., :, None]]
    for j in range(J):
        layers.append(cascade_step(layers[-1], np.asarray(pairings[j])))
    return layers


def _check_input(x: np.ndarray, m: MultiresApprox, J: int | None) -> int:
    J = m.J if J is None else J
    if not 0 <= J <= m.J:
        raise ValueError(f"J={J} exceeds the multiresolution depth {m.J}")
    if x.shape[-1] != m.d:
        raise ValueError(f"signal length {x.shape[-1]} does not match d={m.d}")
    return J


def transform(x, m: MultiresApprox, J: int | None = None) -> list[np.ndarray]:
    """All layers ``[S_0 x, ..., S_J x]`` of the Haar scattering of ``x``.

    ``x`` has shape ``(d,)`` or ``(batch, d)``; layer ``j`` then has shape
    ``(d >> j, 2**j)`` or ``(batch, d >> j, 2**j)``.
    """
    x = np.asarray(x, dtype=np.float64)
    J = _check_input(x, m, J)
    return cascade(x, m.pairings, J)


def transform_last(x, m: MultiresApprox, J: int | None = None) -> np.ndarray:
    """Only ``S_J x``; intermediate layers are dropped as soon as they are used."""
    x = np.asarray(x, dtype=np.float64)
    J = _check_input(x, m, J)
    layer = x[..., :, None]
    for j in range(J):
        layer = cascade_step(layer, m.pairings[j])
    return layer


def boolean_transform(x, m: MultiresApprox, J: int | None = None) -> list[np.ndarray]:
    """Boolean cascade with ``(alpha, beta) -> (alpha or beta, alpha xor beta)``."""
    x = np.asarray(x, dtype=bool)
    J = _check_input(x, m, J)
    layers = [x[..., :, None]]
    for j in range(J):
        prev, pairs = layers[-1], m.pairings[j]
        a = prev[..., pairs[:, 0], :]
        b = prev[..., pairs[:, 1], :]
        out = np.empty(a.shape[:-1] + (2 * a.shape[-1],), dtype=bool)
        out[..., 0::2] = a | b
        out[..., 1::2] = a ^ b
        layers.append(out)
    return layers


# ---------------------------------------------------------------------------
# Order bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderIndex:
    """Channel ``q`` of ``S_J``: its order ``m`` and the scales of its ``m`` differences."""

    q: int
    m: int
    scales: tuple[int, ...]


def order_of(q: int, J: int) -> OrderIndex:
    """Decode ``q = sum_k 2**(J - j_k)``.

    Bit ``J - j`` of ``q`` is set when the difference at merge step ``j``
    (from layer ``j - 1`` to ``j``) was taken, so ``j`` runs over ``1..J``.
    """
    if not 0 <= q < (1 << J):
        raise ValueError(f"q={q} outside 0..{(1 << J) - 1}")
    scales = tuple(sorted(J - b for b in range(J) if (q >> b) & 1))
    return OrderIndex(q, len(scales), scales)


def channel_orders(J: int) -> np.ndarray:
    """Order (popcount) of every channel ``0 <= q < 2**J``."""
    q = np.arange(1 << J, dtype=np.int64)
    orders = np.zeros_like(q)
    for b in range(J):
        orders += (q >> b) & 1
    return orders


def count_order(J: int, m: int, d: int) -> int:
    """Number of order-``m`` coefficients in ``S_J``: ``C(J, m) * d / 2**J``."""
    if not 0 <= m <= J:
        raise ValueError(f"order m={m} outside 0..{J}")
    return comb(J, m) * (d >> J)


def kept_channels(J: int, m_max: int) -> np.ndarray:
    """Channels of ``S_J`` of order at most ``m_max``, ascending."""
    if m_max < 0:
        raise ValueError("m_max must be nonnegative")
    return np.flatnonzero(channel_orders(J) <= m_max)


def truncate_by_order(S_J: np.ndarray, m_max: int) -> np.ndarray:
    """Flatten ``S_J`` keeping channels of order <= ``m_max``.

    The flattening is row-major over ``(n, q)``: all kept channels of node 0,
    then node 1, and so on. A leading batch axis is preserved.
    """
    S_J = np.asarray(S_J)
    J = S_J.shape[-1].bit_length() - 1
    cols = kept_channels(J, m_max)
    kept = S_J[..., cols]
    return kept.reshape(kept.shape[:-2] + (-1,))


def ensemble_features(x, members: Sequence[MultiresApprox], J: int, m_max: int) -> np.ndarray:
    """Order-truncated ``S_J`` features of every member, concatenated per signal in member order."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.concatenate([truncate_by_order(transform_last(x, m, J), m_max) for m in members], axis=1)


def feature_layout(d: int, J: int, m_max: int) -> list[tuple[int, int]]:
    """``(n, q)`` for each entry of :func:`truncate_by_order` output."""
    cols = kept_channels(J, m_max).tolist()
    return [(n, q) for n in range(d >> J) for q in cols]


def order_energy(S_J: np.ndarray) -> np.ndarray:
    """Share of ``||S_J x||^2`` carried by each order ``0..J`` (summed over any batch)."""
    S_J = np.asarray(S_J)
    J = S_J.shape[-1].bit_length() - 1
    orders = channel_orders(J)
    sq = (S_J ** 2).reshape(-1, S_J.shape[-1]).sum(axis=0)
    per = np.bincount(orders, weights=sq, minlength=J + 1)
    total = per.sum()
    return per / total if total > 0 else per


def l1_norms(layer: np.ndarray) -> np.ndarray:
    """``||S_j x||_1`` per signal."""
    return np.abs(layer).sum(axis=(-2, -1))


# ---------------------------------------------------------------------------
# Feature export
# ---------------------------------------------------------------------------

def write_features(path: str | Path, features: np.ndarray, *, J: int, m_max: int,
                   multires_ids: Sequence[str] | None = None, d: int | None = None,
                   extra: dict | None = None) -> Path:
    """Write a ``(rows, cols)`` feature matrix as little-endian float64 plus a JSON sidecar.

    The sidecar (``<path>.json``) records the shape, ``J``, ``m_max``, the
    multiresolution ids in concatenation order and the ``(n, q)`` layout of
    each block; ``extra`` entries (labels, for instance) are added as is.
    """
    path = Path(path)
    features = np.ascontiguousarray(features, dtype="<f8")
    if features.ndim == 1:
        features = features[None, :]
    path.write_bytes(features.tobytes())
    meta = {
        "rows": int(features.shape[0]),
        "cols": int(features.shape[1]),
        "dtype": "<f8",
        "J": J,
        "m_max": m_max,
        "multires_ids": list(multires_ids or []),
        "order": "row-major over (multires, n, q); q restricted to order <= m_max",
    }
    if d is not None:
        meta["d"] = d
        meta["layout"] = feature_layout(d, J, m_max)
    meta.update(extra or {})
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=1))
    return sidecar


def read_features(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    if data.size != meta["rows"] * meta["cols"]:
        raise ValueError(f"{path}: expected {meta['rows']}x{meta['cols']} floats, found {data.size}")
    return data.reshape(meta["rows"], meta["cols"]).astype(np.float64), meta
