"""Minimum-weight perfect matching on complete graphs.

:func:`min_weight_perfect_matching` is Edmonds' primal-dual blossom method
for a dense integer cost matrix. It runs as a maximum-weight,
maximum-cardinality matching on ``w = max(c) - c``; on a complete graph with
an even number of vertices the matching found is perfect, so maximizing
``w`` minimizes ``c``. Dual variables are kept doubled so every quantity
stays an exact 64-bit integer. Edge scans and dual updates are vectorized
over the vertex set, which gives ``O(n**3)`` arithmetic in ``O(n**2)``
Python-level steps.

:func:`brute_force_matching` enumerates every perfect matching and is only
meant as an oracle for small instances.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

_FREE, _S, _T = 0, 1, 2
_BREADCRUMB = 5  # transient marker used while tracing alternating trees


class _Blossom:
    __slots__ = ("childs", "edges", "leaves")

    def __init__(self):
        self.childs: list[int] = []
        self.edges: list[tuple[int, int]] = []
        self.leaves: np.ndarray = np.zeros(0, dtype=np.int64)


class _Matcher:
    """State of one run; blossoms are numbered ``n .. 2n-1``, vertices ``0 .. n-1``."""

    def __init__(self, weight: np.ndarray):
        n = weight.shape[0]
        self.n = n
        self.W2 = 2 * weight
        self.mate = np.full(n, -1, dtype=np.int64)
        self.label = np.zeros(2 * n, dtype=np.int8)
        self.labeledge_v = np.full(2 * n, -1, dtype=np.int64)
        self.labeledge_w = np.full(2 * n, -1, dtype=np.int64)
        self.inblossom = np.arange(n, dtype=np.int64)
        self.blossomparent = np.full(2 * n, -1, dtype=np.int64)
        self.blossombase = np.concatenate([np.arange(n), np.full(n, -1)]).astype(np.int64)
        self.bestedge_v = np.full(2 * n, -1, dtype=np.int64)
        self.bestedge_w = np.full(2 * n, -1, dtype=np.int64)
        self.in_use = np.zeros(2 * n, dtype=bool)
        self.in_use[:n] = True
        maxweight = int(weight.max()) if n > 1 else 0
        self.dualvar = np.full(n, maxweight, dtype=np.int64)
        self.blossomdual = np.zeros(2 * n, dtype=np.int64)
        self.allowedge = np.zeros((n, n), dtype=bool)
        self.blossoms: dict[int, _Blossom] = {}
        self.unused_ids = list(range(2 * n - 1, n - 1, -1))
        self.queue: list[int] = []
        self.all_vertices = np.arange(n, dtype=np.int64)

    # -- helpers -----------------------------------------------------------
    def slack(self, v: int, w: int) -> int:
        return int(self.dualvar[v] + self.dualvar[w] - self.W2[v, w])

    def leaves(self, b: int) -> np.ndarray:
        if b < self.n:
            return np.array([b], dtype=np.int64)
        return self.blossoms[b].leaves

    def greedy_start(self):
        # Match along edges that are tight under the uniform initial duals,
        # scanning vertices in ascending order. Keeps all invariants and
        # fixes the outcome for ties at the global optimum.
        n = self.n
        tight = self.W2 == self.dualvar[0] * 2
        np.fill_diagonal(tight, False)
        for v in range(n):
            if self.mate[v] >= 0:
                continue
            cand = np.flatnonzero(tight[v] & (self.mate < 0))
            if len(cand):
                w = int(cand[0])
                self.mate[v] = w
                self.mate[w] = v

    # -- labels ------------------------------------------------------------
    def assign_label(self, w: int, t: int, v: int):
        b = int(self.inblossom[w])
        self.label[w] = self.label[b] = t
        self.labeledge_v[w] = self.labeledge_v[b] = v
        self.labeledge_w[w] = self.labeledge_w[b] = w if v >= 0 else -1
        self.bestedge_v[w] = self.bestedge_v[b] = -1
        self.bestedge_w[w] = self.bestedge_w[b] = -1
        if t == _S:
            self.queue.extend(self.leaves(b).tolist())
        else:
            base = int(self.blossombase[b])
            self.assign_label(int(self.mate[base]), _S, base)

    def scan_blossom(self, v: int, w: int) -> int:
        path = []
        base = -1
        while v != -1:
            b = int(self.inblossom[v])
            if self.label[b] & 4:
                base = int(self.blossombase[b])
                break
            path.append(b)
            self.label[b] = _BREADCRUMB
            if self.labeledge_v[b] == -1:
                v = -1
            else:
                v = int(self.labeledge_v[b])
                b = int(self.inblossom[v])
                v = int(self.labeledge_v[b])
            if w != -1:
                v, w = w, v
        for b in path:
            self.label[b] = _S
        return base

    def add_blossom(self, base: int, v: int, w: int):
        bb = int(self.inblossom[base])
        bv = int(self.inblossom[v])
        bw = int(self.inblossom[w])
        b = self.unused_ids.pop()
        blossom = _Blossom()
        self.blossoms[b] = blossom
        self.in_use[b] = True
        self.blossombase[b] = base
        self.blossomparent[b] = -1
        self.blossomparent[bb] = b
        path = blossom.childs
        edges = blossom.edges
        edges.append((v, w))
        while bv != bb:
            self.blossomparent[bv] = b
            path.append(bv)
            edges.append((int(self.labeledge_v[bv]), int(self.labeledge_w[bv])))
            v = int(self.labeledge_v[bv])
            bv = int(self.inblossom[v])
        path.append(bb)
        path.reverse()
        edges.reverse()
        while bw != bb:
            self.blossomparent[bw] = b
            path.append(bw)
            edges.append((int(self.labeledge_w[bw]), int(self.labeledge_v[bw])))
            w = int(self.labeledge_v[bw])
            bw = int(self.inblossom[w])
        self.label[b] = _S
        self.labeledge_v[b] = self.labeledge_v[bb]
        self.labeledge_w[b] = self.labeledge_w[bb]
        self.blossomdual[b] = 0
        blossom.leaves = np.concatenate([self.leaves(c) for c in path])
        leaves = blossom.leaves
        relabel_t = leaves[self.label[self.inblossom[leaves]] == _T]
        self.queue.extend(relabel_t.tolist())
        self.inblossom[leaves] = b
        for c in path:
            self.bestedge_v[c] = self.bestedge_w[c] = -1
        # least-slack edge from the new blossom to any other S-blossom
        others = np.flatnonzero((self.inblossom != b) & (self.label[self.inblossom] == _S))
        self.bestedge_v[b] = self.bestedge_w[b] = -1
        if len(others):
            sl = self.dualvar[leaves][:, None] + self.dualvar[others][None, :] - self.W2[np.ix_(leaves, others)]
            k = int(np.argmin(sl))
            i, j = divmod(k, len(others))
            self.bestedge_v[b] = leaves[i]
            self.bestedge_w[b] = others[j]

    def expand_blossom(self, b: int, endstage: bool):
        blossom = self.blossoms[b]
        for s in blossom.childs:
            self.blossomparent[s] = -1
            if s < self.n:
                self.inblossom[s] = s
            elif endstage and self.blossomdual[s] == 0:
                self.expand_blossom(s, endstage)
            else:
                self.inblossom[self.leaves(s)] = s
        if not endstage and self.label[b] == _T:
            entrychild = int(self.inblossom[self.labeledge_w[b]])
            childs = blossom.childs
            j = childs.index(entrychild)
            if j & 1:
                j -= len(childs)
                jstep = 1
            else:
                jstep = -1
            v, w = int(self.labeledge_v[b]), int(self.labeledge_w[b])
            while j != 0:
                if jstep == 1:
                    p, q = blossom.edges[j]
                else:
                    q, p = blossom.edges[j - 1]
                self.label[w] = _FREE
                self.label[q] = _FREE
                self.assign_label(w, _T, v)
                self.allowedge[p, q] = self.allowedge[q, p] = True
                j += jstep
                if jstep == 1:
                    v, w = blossom.edges[j]
                else:
                    w, v = blossom.edges[j - 1]
                self.allowedge[v, w] = self.allowedge[w, v] = True
                j += jstep
            bw = childs[j]
            self.label[w] = self.label[bw] = _T
            self.labeledge_v[w] = self.labeledge_v[bw] = v
            self.labeledge_w[w] = self.labeledge_w[bw] = w
            self.bestedge_v[bw] = self.bestedge_w[bw] = -1
            j += jstep
            while childs[j] != entrychild:
                bv = childs[j]
                if self.label[bv] == _S:
                    j += jstep
                    continue
                lv = self.leaves(bv)
                labeled = lv[self.label[lv] != _FREE]
                if len(labeled):
                    v = int(labeled[0])
                    self.label[v] = _FREE
                    self.label[self.mate[self.blossombase[bv]]] = _FREE
                    self.assign_label(v, _T, int(self.labeledge_v[v]))
                j += jstep
        self.label[b] = _FREE
        self.labeledge_v[b] = self.labeledge_w[b] = -1
        self.bestedge_v[b] = self.bestedge_w[b] = -1
        self.blossomparent[b] = -1
        self.blossombase[b] = -1
        self.blossomdual[b] = 0
        self.in_use[b] = False
        del self.blossoms[b]
        self.unused_ids.append(b)

    def augment_blossom(self, b: int, v: int):
        t = v
        while self.blossomparent[t] != b:
            t = int(self.blossomparent[t])
        if t >= self.n:
            self.augment_blossom(t, v)
        blossom = self.blossoms[b]
        i = j = blossom.childs.index(t)
        if i & 1:
            j -= len(blossom.childs)
            jstep = 1
        else:
            jstep = -1
        while j != 0:
            j += jstep
            t = blossom.childs[j]
            if jstep == 1:
                w, x = blossom.edges[j]
            else:
                x, w = blossom.edges[j - 1]
            if t >= self.n:
                self.augment_blossom(t, w)
            j += jstep
            t = blossom.childs[j]
            if t >= self.n:
                self.augment_blossom(t, x)
            self.mate[w] = x
            self.mate[x] = w
        blossom.childs = blossom.childs[i:] + blossom.childs[:i]
        blossom.edges = blossom.edges[i:] + blossom.edges[:i]
        self.blossombase[b] = self.blossombase[blossom.childs[0]]

    def augment_matching(self, v: int, w: int):
        for s, j in ((v, w), (w, v)):
            while True:
                bs = int(self.inblossom[s])
                if bs >= self.n:
                    self.augment_blossom(bs, s)
                self.mate[s] = j
                if self.labeledge_v[bs] == -1:
                    break
                t = int(self.labeledge_v[bs])
                bt = int(self.inblossom[t])
                s, j = int(self.labeledge_v[bt]), int(self.labeledge_w[bt])
                if bt >= self.n:
                    self.augment_blossom(bt, j)
                self.mate[j] = s

    # -- main loop ---------------------------------------------------------
    def scan(self, v: int) -> bool:
        """Examine all edges at S-vertex ``v``; True when the matching was augmented."""
        ws = self.all_vertices
        bv = int(self.inblossom[v])
        outside = self.inblossom[ws] != bv
        sl = self.dualvar[v] + self.dualvar - self.W2[v]
        tight = outside & ((sl <= 0) | self.allowedge[v])
        tight_ws = np.flatnonzero(tight)
        if len(tight_ws):
            self.allowedge[v, tight_ws] = True
            self.allowedge[tight_ws, v] = True
        for w in tight_ws.tolist():
            bv = int(self.inblossom[v])
            bw = int(self.inblossom[w])
            if bv == bw:
                continue
            lb = self.label[bw]
            if lb == _FREE:
                self.assign_label(w, _T, v)
            elif lb == _S:
                base = self.scan_blossom(v, w)
                if base >= 0:
                    self.add_blossom(base, v, w)
                else:
                    self.augment_matching(v, w)
                    return True
            elif self.label[w] == _FREE:
                self.label[w] = _T
                self.labeledge_v[w] = v
                self.labeledge_w[w] = w
        # non-tight edges feed the delta bookkeeping, judged with current labels
        bv = int(self.inblossom[v])
        rest = ~tight & (self.inblossom != bv)
        rest[v] = False
        if not rest.any():
            return False
        blab = self.label[self.inblossom]
        to_s = np.flatnonzero(rest & (blab == _S))
        if len(to_s):
            k = int(to_s[np.argmin(sl[to_s])])
            cur = self.bestedge_v[bv]
            if cur == -1 or sl[k] < self.slack(int(cur), int(self.bestedge_w[bv])):
                self.bestedge_v[bv] = v
                self.bestedge_w[bv] = k
        to_free = np.flatnonzero(rest & (blab != _S) & (self.label[:self.n] == _FREE))
        if len(to_free):
            cur_v = self.bestedge_v[to_free]
            cur_w = self.bestedge_w[to_free]
            has = cur_v >= 0
            cur_sl = np.where(has, self.dualvar[np.maximum(cur_v, 0)] + self.dualvar[np.maximum(cur_w, 0)]
                              - self.W2[np.maximum(cur_v, 0), np.maximum(cur_w, 0)], 0)
            better = ~has | (sl[to_free] < cur_sl)
            upd = to_free[better]
            self.bestedge_v[upd] = v
            self.bestedge_w[upd] = upd
        return False

    def edge_slacks(self, ev: np.ndarray, ew: np.ndarray) -> np.ndarray:
        return self.dualvar[ev] + self.dualvar[ew] - self.W2[ev, ew]

    def run(self):
        n = self.n
        self.greedy_start()
        while True:
            self.label[:] = _FREE
            self.labeledge_v[:] = -1
            self.labeledge_w[:] = -1
            self.bestedge_v[:] = -1
            self.bestedge_w[:] = -1
            self.allowedge[:] = False
            self.queue = []
            for v in range(n):
                if self.mate[v] == -1 and self.label[self.inblossom[v]] == _FREE:
                    self.assign_label(v, _S, -1)
            augmented = False
            while True:
                while self.queue and not augmented:
                    v = self.queue.pop()
                    augmented = self.scan(v)
                if augmented:
                    break
                deltatype, delta, dedge, dblossom = -1, 0, (-1, -1), -1
                # delta2: free vertex to S-vertex
                vlab = self.label[self.inblossom]
                cand = np.flatnonzero((vlab == _FREE) & (self.bestedge_v[:n] >= 0))
                if len(cand):
                    sl = self.edge_slacks(self.bestedge_v[cand], self.bestedge_w[cand])
                    k = int(np.argmin(sl))
                    deltatype, delta = 2, int(sl[k])
                    dedge = (int(self.bestedge_v[cand[k]]), int(self.bestedge_w[cand[k]]))
                # delta3: between two S-blossoms
                top = (self.blossomparent == -1) & self.in_use
                cand = np.flatnonzero(top & (self.label == _S) & (self.bestedge_v >= 0))
                if len(cand):
                    sl = self.edge_slacks(self.bestedge_v[cand], self.bestedge_w[cand])
                    k = int(np.argmin(sl))
                    if sl[k] % 2:
                        raise AssertionError("odd slack between S-blossoms")
                    d3 = int(sl[k]) // 2
                    if deltatype == -1 or d3 < delta:
                        deltatype, delta = 3, d3
                        dedge = (int(self.bestedge_v[cand[k]]), int(self.bestedge_w[cand[k]]))
                # delta4: shrink a T-blossom dual to zero
                ids = np.arange(n, 2 * n)
                cand = ids[top[n:] & (self.label[n:] == _T)]
                if len(cand):
                    k = int(np.argmin(self.blossomdual[cand]))
                    d4 = int(self.blossomdual[cand[k]])
                    if deltatype == -1 or d4 < delta:
                        deltatype, delta, dblossom = 4, d4, int(cand[k])
                if deltatype == -1:
                    # no augmenting path left: the matching has maximum cardinality
                    deltatype = 1
                    delta = max(0, int(self.dualvar.min()))
                self.dualvar[vlab == _S] -= delta
                self.dualvar[vlab == _T] += delta
                bl = self.label[n:]
                topb = top[n:]
                self.blossomdual[n:][topb & (bl == _S)] += delta
                self.blossomdual[n:][topb & (bl == _T)] -= delta
                if deltatype == 1:
                    break
                if deltatype in (2, 3):
                    v, w = dedge
                    self.allowedge[v, w] = self.allowedge[w, v] = True
                    self.queue.append(v)
                else:
                    self.expand_blossom(dblossom, False)
            if not augmented:
                break
            for b in list(self.blossoms):
                if b in self.blossoms and self.blossomparent[b] == -1 and self.label[b] == _S \
                        and self.blossomdual[b] == 0:
                    self.expand_blossom(b, True)
        return self.mate


def _as_int_costs(cost) -> np.ndarray:
    c = np.asarray(cost)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.issubdtype(c.dtype, np.integer):
        if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
            raise ValueError("costs must be integers; quantize first")
    c = c.astype(np.int64)
    if not np.array_equal(c, c.T):
        raise ValueError("cost matrix must be symmetric")
    return c


def _pairs_from_mate(mate: np.ndarray) -> list[tuple[int, int]]:
    return [(int(v), int(mate[v])) for v in range(len(mate)) if v < mate[v]]


def min_weight_perfect_matching(cost) -> list[tuple[int, int]]:
    """Exact minimum-cost perfect matching of the complete graph with integer ``cost``.

    Returns pairs ``(a, b)`` with ``a < b`` sorted by ``a``. The diagonal is
    ignored.
    """
    c = _as_int_costs(cost)
    n = c.shape[0]
    if n % 2:
        raise ValueError(f"perfect matching needs an even vertex count, got {n}")
    if n == 0:
        return []
    off = ~np.eye(n, dtype=bool)
    cmax = int(c[off].max()) if n > 1 else 0
    cmin = int(c[off].min()) if n > 1 else 0
    if cmax - cmin > (1 << 60):
        raise OverflowError("cost range too large for exact 64-bit duals")
    weight = np.where(off, cmax - c, 0)
    mate = _Matcher(weight).run()
    if np.any(mate < 0):
        raise AssertionError("matching is not perfect")  # pragma: no cover
    return _pairs_from_mate(mate)


def _matchings(items: tuple[int, ...]) -> Iterator[list[tuple[int, int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k, partner in enumerate(rest):
        for tail in _matchings(rest[:k] + rest[k + 1:]):
            yield [(first, partner)] + tail


BRUTE_FORCE_LIMIT = 14


def brute_force_matching(cost) -> tuple[list[tuple[int, int]], float]:
    """Enumerate all ``(n-1)!!`` perfect matchings; ties go to the lexicographically smallest.

    Enumeration order is already lexicographic, so the first minimum wins.
    """
    c = np.asarray(cost)
    n = c.shape[0]
    if n % 2:
        raise ValueError(f"perfect matching needs an even vertex count, got {n}")
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} vertices, got {n}")
    best, best_cost = None, None
    for m in _matchings(tuple(range(n))):
        total = sum(c[a, b] for a, b in m)
        if best_cost is None or total < best_cost:
            best, best_cost = m, total
    return best, best_cost
