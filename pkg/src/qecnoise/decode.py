"""Minimum-weight perfect matching decoding of detector samples.

For each shot the flagged detectors are paired with each other or with the
boundary. Shortest paths come from Dijkstra on the matching graph with integer
(quantized) weights, cached per source row. Pairs whose direct path costs at
least as much as sending both ends to the boundary are never needed, so the
defect graph splits into small independent components; only components with
three or more defects go through the blossom solver, on the standard reduction
with one boundary twin per defect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numba import njit

from .blossom import _mwpm
from .dem import BOUNDARY, DetectorErrorModel, MatchingGraph
from .sim import ShotBatch

__all__ = [
    "Syndrome",
    "Matching",
    "MatchingDecoder",
    "DecodeError",
    "mwpm_decode",
    "decode_batch",
    "brute_force_mle_decode",
    "brute_force_mle",
    "MLEResult",
    "WEIGHT_SCALE",
]

# edge weights are stored as round(weight * WEIGHT_SCALE) so path sums are exact
WEIGHT_SCALE = 1 << 14
_INF = np.int64(1) << np.int64(52)
# largest graph for which full distance rows are cached (rows x rows entries)
CACHE_MAX_NODES = 3000


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Syndrome:
    flagged: frozenset[int]

    def __init__(self, flagged: Iterable[int]):
        object.__setattr__(self, "flagged", frozenset(int(d) for d in flagged))

    @classmethod
    def from_bits(cls, bits) -> "Syndrome":
        return cls(np.flatnonzero(np.asarray(bits)))

    def check(self, num_detectors: int) -> None:
        bad = [d for d in self.flagged if not 0 <= d < num_detectors]
        if bad:
            raise DecodeError(f"syndrome references detectors {sorted(bad)[:5]} outside [0, {num_detectors})")


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]  # (detector, detector or BOUNDARY)
    total_weight: float
    observable_flip: tuple[bool, ...]


@njit(cache=True)
def _dijkstra(src, indptr, nbr, wts, obs, dist, par):
    """Single-source shortest paths; ``par`` gets the XOR of observable masks along the path."""
    n = dist.shape[0]
    for i in range(n):
        dist[i] = _INF
        par[i] = 0
    cap = 16 + 2 * nbr.shape[0]
    hd = np.empty(cap, dtype=np.int64)
    hv = np.empty(cap, dtype=np.int64)
    size = 0
    dist[src] = 0
    hd[0] = 0
    hv[0] = src
    size = 1
    done = np.zeros(n, dtype=np.bool_)
    while size > 0:
        d = hd[0]
        u = hv[0]
        size -= 1
        if size > 0:
            # sift the last entry down from the root
            ld = hd[size]
            lv = hv[size]
            i = 0
            while True:
                c = 2 * i + 1
                if c >= size:
                    break
                if c + 1 < size and (hd[c + 1] < hd[c] or (hd[c + 1] == hd[c] and hv[c + 1] < hv[c])):
                    c += 1
                if hd[c] < ld or (hd[c] == ld and hv[c] < lv):
                    hd[i] = hd[c]
                    hv[i] = hv[c]
                    i = c
                else:
                    break
            hd[i] = ld
            hv[i] = lv
        if done[u]:
            continue
        done[u] = True
        for q in range(indptr[u], indptr[u + 1]):
            v = nbr[q]
            nd = d + wts[q]
            if nd < dist[v]:
                dist[v] = nd
                par[v] = par[u] ^ obs[q]
                i = size
                size += 1
                while i > 0:
                    p = (i - 1) >> 1
                    if hd[p] > nd or (hd[p] == nd and hv[p] > v):
                        hd[i] = hd[p]
                        hv[i] = hv[p]
                        i = p
                    else:
                        break
                hd[i] = nd
                hv[i] = v


@njit(cache=True)
def _row(u, indptr, nbr, wts, obs, dmat, pmat, rowdone, use_cache, scratch_d, scratch_p, slot):
    """Distances from node u; returns the row index into dmat or scratch."""
    if use_cache:
        if not rowdone[u]:
            _dijkstra(u, indptr, nbr, wts, obs, dmat[u], pmat[u])
            rowdone[u] = True
        return u
    _dijkstra(u, indptr, nbr, wts, obs, scratch_d[slot], scratch_p[slot])
    return slot


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _decode_one(defects, indptr, nbr, wts, obs, bdist, bpar, dmat, pmat, rowdone, use_cache,
                pairs_out):
    """Decode one shot. Returns (observable mask, total weight, number of pairs, status).

    ``pairs_out`` receives local node pairs, with -1 standing for the boundary.
    status 0 = ok, 1 = infeasible.
    """
    k = defects.shape[0]
    if k == 0:
        return 0, 0, 0, 0
    n = bdist.shape[0]
    if use_cache:
        sd = np.empty((1, 1), dtype=np.int64)
        sp = np.empty((1, 1), dtype=np.int64)
    else:
        sd = np.empty((k, n), dtype=np.int64)
        sp = np.empty((k, n), dtype=np.int64)
    rows = np.empty(k, dtype=np.int64)
    for a in range(k):
        rows[a] = _row(defects[a], indptr, nbr, wts, obs, dmat, pmat, rowdone, use_cache, sd, sp, a)
    src_d = dmat if use_cache else sd
    src_p = pmat if use_cache else sp

    # candidate pairs: strictly cheaper than sending both ends to the boundary
    cap = 16
    ca = np.empty(cap, dtype=np.int64)
    cb = np.empty(cap, dtype=np.int64)
    nc = 0
    parent = np.arange(k)
    for a in range(k):
        ra = rows[a]
        for b in range(a + 1, k):
            dab = src_d[ra, defects[b]]
            if dab >= _INF:
                continue
            if dab < bdist[defects[a]] + bdist[defects[b]]:
                if nc == cap:
                    cap *= 2
                    na_ = np.empty(cap, dtype=np.int64)
                    nb_ = np.empty(cap, dtype=np.int64)
                    na_[:nc] = ca[:nc]
                    nb_[:nc] = cb[:nc]
                    ca = na_
                    cb = nb_
                ca[nc] = a
                cb[nc] = b
                nc += 1
                x = _find(parent, a)
                y = _find(parent, b)
                if x != y:
                    if x < y:
                        parent[y] = x
                    else:
                        parent[x] = y
    comp = np.empty(k, dtype=np.int64)
    for a in range(k):
        comp[a] = _find(parent, a)
    # group members of each component, in increasing defect order
    order = np.argsort(comp, kind="mergesort")
    mask = 0
    weight = 0
    npairs = 0
    local = np.full(k, -1, dtype=np.int64)
    s = 0
    while s < k:
        root = comp[order[s]]
        e = s
        while e < k and comp[order[e]] == root:
            e += 1
        c = e - s
        members = order[s:e]
        if c == 1:
            a = members[0]
            if bdist[defects[a]] >= _INF:
                return mask, weight, npairs, 1
            weight += bdist[defects[a]]
            mask ^= bpar[defects[a]]
            pairs_out[npairs, 0] = defects[a]
            pairs_out[npairs, 1] = -1
            npairs += 1
        elif c == 2:
            a = members[0]
            b = members[1]
            weight += src_d[rows[a], defects[b]]
            mask ^= src_p[rows[a], defects[b]]
            pairs_out[npairs, 0] = defects[a]
            pairs_out[npairs, 1] = defects[b]
            npairs += 1
        else:
            for i in range(c):
                local[members[i]] = i
            m = 0
            for q in range(nc):
                if local[ca[q]] >= 0 and comp[ca[q]] == root:
                    m += 1
            nb = 0
            for i in range(c):
                if bdist[defects[members[i]]] < _INF:
                    nb += 1
            ei = np.empty(2 * m + nb, dtype=np.int64)
            ej = np.empty(2 * m + nb, dtype=np.int64)
            ew = np.empty(2 * m + nb, dtype=np.int64)
            t = 0
            for q in range(nc):
                a = ca[q]
                if comp[a] != root:
                    continue
                b = cb[q]
                ei[t] = local[a]
                ej[t] = local[b]
                ew[t] = src_d[rows[a], defects[b]]
                t += 1
                ei[t] = c + local[a]
                ej[t] = c + local[b]
                ew[t] = 0
                t += 1
            for i in range(c):
                a = members[i]
                if bdist[defects[a]] < _INF:
                    ei[t] = i
                    ej[t] = c + i
                    ew[t] = bdist[defects[a]]
                    t += 1
            mate = _mwpm(2 * c, ei, ej, ew)
            for i in range(2 * c):
                if mate[i] < 0:
                    return mask, weight, npairs, 1
            for i in range(c):
                a = members[i]
                j = mate[i]
                if j == c + i:
                    weight += bdist[defects[a]]
                    mask ^= bpar[defects[a]]
                    pairs_out[npairs, 0] = defects[a]
                    pairs_out[npairs, 1] = -1
                    npairs += 1
                elif j < c and j > i:
                    b = members[j]
                    weight += src_d[rows[a], defects[b]]
                    mask ^= src_p[rows[a], defects[b]]
                    pairs_out[npairs, 0] = defects[a]
                    pairs_out[npairs, 1] = defects[b]
                    npairs += 1
            for i in range(c):
                local[members[i]] = -1
        s = e
    return mask, weight, npairs, 0


@njit(cache=True)
def _decode_many(flat, offsets, indptr, nbr, wts, obs, bdist, bpar, dmat, pmat, rowdone,
                 use_cache, masks, weights):
    shots = offsets.shape[0] - 1
    maxk = 0
    for s in range(shots):
        if offsets[s + 1] - offsets[s] > maxk:
            maxk = offsets[s + 1] - offsets[s]
    pairs = np.empty((maxk + 1, 2), dtype=np.int64)
    for s in range(shots):
        d = flat[offsets[s] : offsets[s + 1]]
        mk, w, _, status = _decode_one(d, indptr, nbr, wts, obs, bdist, bpar, dmat, pmat, rowdone,
                                       use_cache, pairs)
        if status != 0:
            return s
        masks[s] = mk
        weights[s] = w
    return -1


class MatchingDecoder:
    """Decoder bound to one matching graph; holds the shortest-path cache.

    The cache only memoizes exact integer distances, so results do not depend
    on what has been decoded before. Not thread-safe: give each worker its own
    instance.
    """

    def __init__(self, graph: MatchingGraph):
        if graph.num_observables > 62:
            raise DecodeError("at most 62 observables are supported")
        self.graph = graph
        ids = np.asarray(graph.detector_ids, dtype=np.int64)
        self.detector_ids = ids
        n = len(ids)
        self.n = n
        self._local = np.full(graph.num_detectors, -1, dtype=np.int64)
        self._local[ids] = np.arange(n)
        bnode = n
        us, vs, ws, os_ = [], [], [], []
        for e in graph.edges:
            u = int(self._local[e.u])
            v = bnode if e.v == BOUNDARY else int(self._local[e.v])
            if u < 0 or v < 0:
                raise DecodeError(f"edge ({e.u}, {e.v}) touches a detector outside the graph")
            w = int(round(e.weight * WEIGHT_SCALE))
            us += [u, v]
            vs += [v, u]
            ws += [w, w]
            os_ += [e.obs_mask, e.obs_mask]
        us = np.asarray(us, dtype=np.int64)
        order = np.argsort(us, kind="stable")
        self._nbr = np.asarray(vs, dtype=np.int64)[order]
        self._wts = np.asarray(ws, dtype=np.int64)[order]
        self._obs = np.asarray(os_, dtype=np.int64)[order]
        self._indptr = np.searchsorted(us[order], np.arange(n + 2)).astype(np.int64)
        bd = np.empty(n + 1, dtype=np.int64)
        bp = np.empty(n + 1, dtype=np.int64)
        _dijkstra(bnode, self._indptr, self._nbr, self._wts, self._obs, bd, bp)
        self._bdist = bd[:n].copy()
        self._bpar = bp[:n].copy()
        self.has_observables = bool(np.any(self._obs))
        self.use_cache = n <= CACHE_MAX_NODES
        if self.use_cache:
            self._dmat = np.zeros((n, n + 1), dtype=np.int64)
            self._pmat = np.zeros((n, n + 1), dtype=np.int64)
        else:
            self._dmat = np.zeros((1, 1), dtype=np.int64)
            self._pmat = np.zeros((1, 1), dtype=np.int64)
        self._rowdone = np.zeros(n + 1, dtype=np.bool_)

    def _masks(self, flat: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        shots = len(offsets) - 1
        masks = np.zeros(shots, dtype=np.int64)
        weights = np.zeros(shots, dtype=np.int64)
        bad = _decode_many(
            flat, offsets, self._indptr, self._nbr, self._wts, self._obs, self._bdist, self._bpar,
            self._dmat, self._pmat, self._rowdone, self.use_cache, masks, weights,
        )
        if bad >= 0:
            raise DecodeError(f"shot {bad}: no perfect matching (odd defects with no boundary path)")
        return masks, weights

    def decode(self, syndrome: Syndrome) -> Matching:
        syndrome.check(self.graph.num_detectors)
        glob = np.asarray(sorted(syndrome.flagged), dtype=np.int64)
        loc = self._local[glob] if len(glob) else glob
        if np.any(loc < 0):
            raise DecodeError("syndrome flags detectors that are not nodes of this graph")
        pairs = np.empty((len(loc) + 1, 2), dtype=np.int64)
        mask, w, npairs, status = _decode_one(
            loc, self._indptr, self._nbr, self._wts, self._obs, self._bdist, self._bpar,
            self._dmat, self._pmat, self._rowdone, self.use_cache, pairs,
        )
        if status:
            raise DecodeError("no perfect matching: odd defect count with no boundary path")
        ids = self.detector_ids
        out = []
        for a, b in pairs[:npairs].tolist():
            out.append((int(ids[a]), BOUNDARY if b < 0 else int(ids[b])))
        flips = tuple(bool(mask >> k & 1) for k in range(self.graph.num_observables))
        return Matching(tuple(sorted(out)), w / WEIGHT_SCALE, flips)

    def decode_bits(self, detectors: np.ndarray) -> np.ndarray:
        """Observable masks (int64 per shot) from a (shots, num_detectors) bool matrix."""
        sub = np.asarray(detectors, dtype=bool)[:, self.detector_ids]
        rows, cols = np.nonzero(sub)
        offsets = np.searchsorted(rows, np.arange(sub.shape[0] + 1)).astype(np.int64)
        masks, _ = self._masks(cols.astype(np.int64), offsets)
        return masks


def mwpm_decode(graph: MatchingGraph | MatchingDecoder, syndrome: Syndrome) -> Matching:
    dec = graph if isinstance(graph, MatchingDecoder) else MatchingDecoder(graph)
    return dec.decode(syndrome)


def _decoders(graphs) -> list[MatchingDecoder]:
    if isinstance(graphs, (MatchingGraph, MatchingDecoder)):
        graphs = [graphs]
    return [g if isinstance(g, MatchingDecoder) else MatchingDecoder(g) for g in graphs]


def decode_batch(graphs: MatchingGraph | MatchingDecoder | Sequence, batch: ShotBatch) -> np.ndarray:
    """Predicted observable flips, a (shots, num_observables) bool matrix.

    ``graphs`` may be one graph or the X/Z halves of a split model; the halves
    are decoded independently and their predictions XORed.
    """
    decs = _decoders(graphs)
    nobs = batch.num_observables
    for d in decs:
        if d.graph.num_detectors != batch.num_detectors:
            raise DecodeError(
                f"batch has {batch.num_detectors} detectors, graph expects {d.graph.num_detectors}"
            )
    masks = np.zeros(batch.shots, dtype=np.int64)
    if batch.shots:
        dets = batch.detectors
        for d in decs:
            if d.has_observables:
                masks ^= d.decode_bits(dets)
    return ((masks[:, None] >> np.arange(nobs)) & 1).astype(bool)


class MLEResult(NamedTuple):
    observables: tuple[bool, ...]
    mechanisms: tuple[int, ...]  # indices into dem.mechanisms
    log_prob: float


def brute_force_mle(dem: DetectorErrorModel, syndrome: Syndrome, max_mechanisms: int = 20) -> MLEResult:
    """Most probable mechanism subset reproducing ``syndrome``, by exhaustive enumeration."""
    m = len(dem.mechanisms)
    if m > max_mechanisms:
        raise DecodeError(f"{m} mechanisms exceed the exhaustive limit of {max_mechanisms}")
    syndrome.check(dem.num_detectors)
    target = sum(1 << d for d in syndrome.flagged)
    wide = dem.num_detectors > 62
    dtype = object if wide else np.int64
    # tables over all subsets, built by doubling: bit i of the index selects mechanism i
    det = np.zeros(1, dtype=dtype)
    obs = np.zeros(1, dtype=np.int64)
    lp = np.zeros(1)
    for mech in dem.mechanisms:
        dm = sum(1 << d for d in mech.detectors)
        det = np.concatenate([det, det ^ (dm if wide else np.int64(dm))])
        obs = np.concatenate([obs, obs ^ mech.obs_mask])
        lp = np.concatenate([lp + np.log1p(-mech.p), lp + np.log(mech.p)])
    ok = np.flatnonzero(det == target)
    if len(ok) == 0:
        raise DecodeError("no mechanism subset reproduces the syndrome")
    idx = int(ok[np.argmax(lp[ok])])
    best = int(obs[idx])
    flips = tuple(bool(best >> k & 1) for k in range(dem.num_observables))
    return MLEResult(flips, tuple(i for i in range(m) if idx >> i & 1), float(lp[idx]))


def brute_force_mle_decode(dem: DetectorErrorModel, syndrome: Syndrome, max_mechanisms: int = 20) -> tuple[bool, ...]:
    """Observable flips of the most probable mechanism subset matching ``syndrome``."""
    return brute_force_mle(dem, syndrome, max_mechanisms).observables
