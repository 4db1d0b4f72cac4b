"""Edmonds' blossom algorithm for maximum-weight matching on general graphs.

Array-based O(n^3) primal-dual implementation following the classic
formulation with S/T labels, nested blossoms and four dual-update cases. All
state lives in flat numpy arrays so that the whole search compiles under numba.
Weights must be integers; every quantity stays integral because duals are kept
doubled (slack = y_i + y_j - 2 w).

Minimum-weight perfect matching is obtained from the maximum-cardinality,
maximum-weight matching of the transformed weights ``W - w``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["max_weight_matching", "min_weight_perfect_matching", "MatchingInfeasible"]


class MatchingInfeasible(ValueError):
    """The graph has no perfect matching."""


@njit(cache=True)
def _slack(k, ei, ej, ew, dual):
    return dual[ei[k]] + dual[ej[k]] - 2 * ew[k]


@njit(cache=True)
def _leaves(b, n, childs, nchilds, out, stack):
    """Write the vertices inside (sub-)blossom ``b`` into ``out``; return count."""
    if b < n:
        out[0] = b
        return 1
    cnt = 0
    top = 0
    stack[0] = b
    top = 1
    while top > 0:
        top -= 1
        x = stack[top]
        for i in range(nchilds[x]):
            t = childs[x, i]
            if t < n:
                out[cnt] = t
                cnt += 1
            else:
                stack[top] = t
                top += 1
    return cnt


@njit(cache=True)
def _push(queue, qlen, v):
    if qlen[0] == queue.shape[0]:
        bigger = np.empty(2 * queue.shape[0] + 4, dtype=np.int64)
        bigger[: queue.shape[0]] = queue
        queue = bigger
    queue[qlen[0]] = v
    qlen[0] += 1
    return queue


@njit(cache=True)
def _assign_label(w, t, p, n, endpoint, mate, label, labelend, inblossom, bestedge,
                  bbase, childs, nchilds, queue, qlen, leafbuf, stackbuf):
    while True:
        b = inblossom[w]
        label[w] = t
        label[b] = t
        labelend[w] = p
        labelend[b] = p
        bestedge[w] = -1
        bestedge[b] = -1
        if t == 1:
            cnt = _leaves(b, n, childs, nchilds, leafbuf, stackbuf)
            for i in range(cnt):
                queue = _push(queue, qlen, leafbuf[i])
            return queue
        base = bbase[b]
        mb = mate[base]
        w = endpoint[mb]
        t = 1
        p = mb ^ 1


@njit(cache=True)
def _scan_blossom(v, w, endpoint, mate, label, labelend, inblossom, bbase, path):
    """Trace back from S-vertices v and w; return the new blossom base or -1."""
    npath = 0
    base = -1
    while v != -1 or w != -1:
        b = inblossom[v]
        if label[b] & 4:
            base = bbase[b]
            break
        path[npath] = b
        npath += 1
        label[b] = 5
        if labelend[b] == -1:
            v = -1
        else:
            v = endpoint[labelend[b]]
            b = inblossom[v]
            v = endpoint[labelend[b]]
        if w != -1:
            tmp = v
            v = w
            w = tmp
    for i in range(npath):
        label[path[i]] = 1
    return base


@njit(cache=True)
def _add_blossom(base, k, n, ei, ej, ew, endpoint, nbs, nbl, mate, label, labelend,
                 inblossom, bparent, childs, nchilds, endps, bbase, bestedge, unused,
                 nunused, dual, queue, qlen, leafbuf, stackbuf, bestto, tmpa, tmpb):
    v = ei[k]
    w = ej[k]
    bb = inblossom[base]
    bv = inblossom[v]
    bw = inblossom[w]
    nunused[0] -= 1
    b = unused[nunused[0]]
    bbase[b] = base
    bparent[b] = -1
    bparent[bb] = b
    # walk from v's side back to the base, collected in reverse
    na = 0
    while bv != bb:
        bparent[bv] = b
        tmpa[na] = bv
        tmpb[na] = labelend[bv]
        na += 1
        v = endpoint[labelend[bv]]
        bv = inblossom[v]
    c = 0
    childs[b, c] = bb
    c += 1
    for i in range(na - 1, -1, -1):
        childs[b, c] = tmpa[i]
        c += 1
    ne = 0
    for i in range(na - 1, -1, -1):
        endps[b, ne] = tmpb[i]
        ne += 1
    endps[b, ne] = 2 * k
    ne += 1
    while bw != bb:
        bparent[bw] = b
        childs[b, c] = bw
        c += 1
        endps[b, ne] = labelend[bw] ^ 1
        ne += 1
        w = endpoint[labelend[bw]]
        bw = inblossom[w]
    nchilds[b] = c
    label[b] = 1
    labelend[b] = labelend[bb]
    dual[b] = 0
    cnt = _leaves(b, n, childs, nchilds, leafbuf, stackbuf)
    for i in range(cnt):
        x = leafbuf[i]
        if label[inblossom[x]] == 2:
            queue = _push(queue, qlen, x)
        inblossom[x] = b
    # least-slack edge from the new blossom to every neighbouring S-blossom
    touched = 0
    for ci in range(c):
        sub = childs[b, ci]
        cnt = _leaves(sub, n, childs, nchilds, leafbuf, stackbuf)
        for li in range(cnt):
            x = leafbuf[li]
            for q in range(nbs[x], nbs[x + 1]):
                kk = nbl[q] >> 1
                i = ei[kk]
                j = ej[kk]
                if inblossom[j] == b:
                    i, j = j, i
                bj = inblossom[j]
                if bj != b and label[bj] == 1:
                    if bestto[bj] == -1:
                        bestto[bj] = kk
                        tmpa[touched] = bj
                        touched += 1
                    elif _slack(kk, ei, ej, ew, dual) < _slack(bestto[bj], ei, ej, ew, dual):
                        bestto[bj] = kk
        bestedge[sub] = -1
    bestedge[b] = -1
    for i in range(touched):
        kk = bestto[tmpa[i]]
        if bestedge[b] == -1 or _slack(kk, ei, ej, ew, dual) < _slack(bestedge[b], ei, ej, ew, dual):
            bestedge[b] = kk
        bestto[tmpa[i]] = -1
    return queue


@njit(cache=True)
def _free_blossom(b, label, labelend, nchilds, bbase, bestedge, unused, nunused):
    label[b] = -1
    labelend[b] = -1
    nchilds[b] = 0
    bbase[b] = -1
    bestedge[b] = -1
    unused[nunused[0]] = b
    nunused[0] += 1


@njit(cache=True)
def _expand_end(b0, n, inblossom, bparent, childs, nchilds, dual, label, labelend,
                bbase, bestedge, unused, nunused, leafbuf, stackbuf, work):
    """Dissolve blossom b0 and, recursively, every zero-dual sub-blossom."""
    top = 1
    work[0] = b0
    while top > 0:
        top -= 1
        b = work[top]
        for ci in range(nchilds[b]):
            s = childs[b, ci]
            bparent[s] = -1
            if s < n:
                inblossom[s] = s
            elif dual[s] == 0:
                work[top] = s
                top += 1
            else:
                cnt = _leaves(s, n, childs, nchilds, leafbuf, stackbuf)
                for i in range(cnt):
                    inblossom[leafbuf[i]] = s
        _free_blossom(b, label, labelend, nchilds, bbase, bestedge, unused, nunused)


@njit(cache=True)
def _expand_t(b, n, endpoint, mate, label, labelend, inblossom, bparent, childs,
              nchilds, endps, bbase, bestedge, allowedge, unused, nunused, queue, qlen,
              leafbuf, stackbuf):
    """Expand a T-blossom whose dual reached zero in the middle of a stage."""
    nc = nchilds[b]
    for ci in range(nc):
        s = childs[b, ci]
        bparent[s] = -1
        if s < n:
            inblossom[s] = s
        else:
            cnt = _leaves(s, n, childs, nchilds, leafbuf, stackbuf)
            for i in range(cnt):
                inblossom[leafbuf[i]] = s
    entrychild = inblossom[endpoint[labelend[b] ^ 1]]
    j = 0
    for ci in range(nc):
        if childs[b, ci] == entrychild:
            j = ci
            break
    if j & 1:
        j -= nc
        jstep = 1
        endptrick = 0
    else:
        jstep = -1
        endptrick = 1
    p = labelend[b]
    while j != 0:
        # relabel the T-sub-blossom
        label[endpoint[p ^ 1]] = 0
        label[endpoint[endps[b, (j - endptrick) % nc] ^ endptrick ^ 1]] = 0
        queue = _assign_label(endpoint[p ^ 1], 2, p, n, endpoint, mate, label, labelend,
                              inblossom, bestedge, bbase, childs, nchilds, queue, qlen,
                              leafbuf, stackbuf)
        allowedge[endps[b, (j - endptrick) % nc] >> 1] = True
        j += jstep
        p = endps[b, (j - endptrick) % nc] ^ endptrick
        allowedge[p >> 1] = True
        j += jstep
    bv = childs[b, j % nc]
    label[endpoint[p ^ 1]] = 2
    label[bv] = 2
    labelend[endpoint[p ^ 1]] = p
    labelend[bv] = p
    bestedge[bv] = -1
    j += jstep
    while childs[b, j % nc] != entrychild:
        bv = childs[b, j % nc]
        if label[bv] == 1:
            j += jstep
            continue
        cnt = _leaves(bv, n, childs, nchilds, leafbuf, stackbuf)
        v = -1
        for i in range(cnt):
            if label[leafbuf[i]] != 0:
                v = leafbuf[i]
                break
        if v != -1:
            label[v] = 0
            label[endpoint[mate[bbase[bv]]]] = 0
            queue = _assign_label(v, 2, labelend[v], n, endpoint, mate, label, labelend,
                                  inblossom, bestedge, bbase, childs, nchilds, queue, qlen,
                                  leafbuf, stackbuf)
        j += jstep
    _free_blossom(b, label, labelend, nchilds, bbase, bestedge, unused, nunused)
    return queue


@njit(cache=True)
def _augment_blossom(b0, v0, n, endpoint, mate, bparent, childs, nchilds, endps, bbase,
                     work, rot):
    """Swap matched/unmatched edges inside blossom b0 so that v0 becomes its base.

    Nested calls touch disjoint vertex sets, so a work stack replaces recursion.
    """
    top = 1
    work[0, 0] = b0
    work[0, 1] = v0
    while top > 0:
        top -= 1
        b = work[top, 0]
        v = work[top, 1]
        t = v
        while bparent[t] != b:
            t = bparent[t]
        if t >= n:
            work[top, 0] = t
            work[top, 1] = v
            top += 1
        nc = nchilds[b]
        i = 0
        for ci in range(nc):
            if childs[b, ci] == t:
                i = ci
                break
        j = i
        if i & 1:
            j -= nc
            jstep = 1
            endptrick = 0
        else:
            jstep = -1
            endptrick = 1
        while j != 0:
            j += jstep
            t = childs[b, j % nc]
            p = endps[b, (j - endptrick) % nc] ^ endptrick
            if t >= n:
                work[top, 0] = t
                work[top, 1] = endpoint[p]
                top += 1
            j += jstep
            t = childs[b, j % nc]
            if t >= n:
                work[top, 0] = t
                work[top, 1] = endpoint[p ^ 1]
                top += 1
            mate[endpoint[p]] = p ^ 1
            mate[endpoint[p ^ 1]] = p
        # rotate so that the child holding the new base comes first
        for ci in range(nc):
            rot[ci] = childs[b, (ci + i) % nc]
        for ci in range(nc):
            childs[b, ci] = rot[ci]
        for ci in range(nc):
            rot[ci] = endps[b, (ci + i) % nc]
        for ci in range(nc):
            endps[b, ci] = rot[ci]
        # nested calls may still be pending, so read the new base off v directly
        bbase[b] = v


@njit(cache=True)
def _augment_matching(k, n, ei, ej, endpoint, mate, labelend, inblossom, bparent, childs,
                      nchilds, endps, bbase, work, rot):
    for side in range(2):
        if side == 0:
            s = ei[k]
            p = 2 * k + 1
        else:
            s = ej[k]
            p = 2 * k
        while True:
            bs = inblossom[s]
            if bs >= n:
                _augment_blossom(bs, s, n, endpoint, mate, bparent, childs, nchilds, endps, bbase, work, rot)
            mate[s] = p
            if labelend[bs] == -1:
                break
            t = endpoint[labelend[bs]]
            bt = inblossom[t]
            s = endpoint[labelend[bt]]
            j = endpoint[labelend[bt] ^ 1]
            if bt >= n:
                _augment_blossom(bt, j, n, endpoint, mate, bparent, childs, nchilds, endps, bbase, work, rot)
            mate[j] = labelend[bt]
            p = labelend[bt] ^ 1


@njit(cache=True)
def _mwm(n, ei, ej, ew, maxcardinality):
    m = ei.shape[0]
    mate = np.full(n, -1, dtype=np.int64)
    if m == 0 or n == 0:
        return mate
    maxw = 0
    for k in range(m):
        if ew[k] > maxw:
            maxw = ew[k]
    endpoint = np.empty(2 * m, dtype=np.int64)
    deg = np.zeros(n + 1, dtype=np.int64)
    for k in range(m):
        endpoint[2 * k] = ei[k]
        endpoint[2 * k + 1] = ej[k]
        deg[ei[k] + 1] += 1
        deg[ej[k] + 1] += 1
    nbs = np.cumsum(deg)
    fill = nbs[:-1].copy()
    nbl = np.empty(2 * m, dtype=np.int64)
    for k in range(m):
        nbl[fill[ei[k]]] = 2 * k + 1
        fill[ei[k]] += 1
        nbl[fill[ej[k]]] = 2 * k
        fill[ej[k]] += 1

    label = np.zeros(2 * n, dtype=np.int64)
    labelend = np.full(2 * n, -1, dtype=np.int64)
    inblossom = np.arange(n, dtype=np.int64)
    bparent = np.full(2 * n, -1, dtype=np.int64)
    childs = np.zeros((2 * n, n + 1), dtype=np.int64)
    nchilds = np.zeros(2 * n, dtype=np.int64)
    endps = np.zeros((2 * n, n + 1), dtype=np.int64)
    bbase = np.full(2 * n, -1, dtype=np.int64)
    bbase[:n] = np.arange(n)
    bestedge = np.full(2 * n, -1, dtype=np.int64)
    unused = np.empty(n, dtype=np.int64)
    for i in range(n):
        unused[i] = 2 * n - 1 - i
    nunused = np.array([n], dtype=np.int64)
    dual = np.zeros(2 * n, dtype=np.int64)
    dual[:n] = maxw
    allowedge = np.zeros(m, dtype=np.bool_)
    queue = np.empty(2 * n + 4, dtype=np.int64)
    qlen = np.zeros(1, dtype=np.int64)
    leafbuf = np.empty(n, dtype=np.int64)
    stackbuf = np.empty(2 * n, dtype=np.int64)
    bestto = np.full(2 * n, -1, dtype=np.int64)
    tmpa = np.empty(2 * n, dtype=np.int64)
    tmpb = np.empty(2 * n, dtype=np.int64)
    path = np.empty(2 * n, dtype=np.int64)
    work = np.empty((2 * n, 2), dtype=np.int64)
    work1 = np.empty(2 * n, dtype=np.int64)
    rot = np.empty(n + 1, dtype=np.int64)

    for _stage in range(n):
        label[:] = 0
        bestedge[:] = -1
        allowedge[:] = False
        qlen[0] = 0
        for v in range(n):
            if mate[v] == -1 and label[inblossom[v]] == 0:
                queue = _assign_label(v, 1, -1, n, endpoint, mate, label, labelend, inblossom,
                                      bestedge, bbase, childs, nchilds, queue, qlen, leafbuf, stackbuf)
        augmented = False
        while True:
            while qlen[0] > 0 and not augmented:
                qlen[0] -= 1
                v = queue[qlen[0]]
                for q in range(nbs[v], nbs[v + 1]):
                    p = nbl[q]
                    k = p >> 1
                    w = endpoint[p]
                    if inblossom[v] == inblossom[w]:
                        continue
                    kslack = 0
                    if not allowedge[k]:
                        kslack = _slack(k, ei, ej, ew, dual)
                        if kslack <= 0:
                            allowedge[k] = True
                    if allowedge[k]:
                        if label[inblossom[w]] == 0:
                            queue = _assign_label(w, 2, p ^ 1, n, endpoint, mate, label, labelend,
                                                  inblossom, bestedge, bbase, childs, nchilds,
                                                  queue, qlen, leafbuf, stackbuf)
                        elif label[inblossom[w]] == 1:
                            base = _scan_blossom(v, w, endpoint, mate, label, labelend, inblossom, bbase, path)
                            if base >= 0:
                                queue = _add_blossom(base, k, n, ei, ej, ew, endpoint, nbs, nbl, mate,
                                                     label, labelend, inblossom, bparent, childs,
                                                     nchilds, endps, bbase, bestedge, unused, nunused,
                                                     dual, queue, qlen, leafbuf, stackbuf, bestto,
                                                     tmpa, tmpb)
                            else:
                                _augment_matching(k, n, ei, ej, endpoint, mate, labelend, inblossom,
                                                  bparent, childs, nchilds, endps, bbase, work, rot)
                                augmented = True
                                break
                        elif label[w] == 0:
                            label[w] = 2
                            labelend[w] = p ^ 1
                    elif label[inblossom[w]] == 1:
                        b = inblossom[v]
                        if bestedge[b] == -1 or kslack < _slack(bestedge[b], ei, ej, ew, dual):
                            bestedge[b] = k
                    elif label[w] == 0:
                        if bestedge[w] == -1 or kslack < _slack(bestedge[w], ei, ej, ew, dual):
                            bestedge[w] = k
            if augmented:
                break

            deltatype = -1
            delta = 0
            deltaedge = -1
            deltablossom = -1
            if not maxcardinality:
                deltatype = 1
                delta = dual[0]
                for v in range(1, n):
                    if dual[v] < delta:
                        delta = dual[v]
            for v in range(n):
                if label[inblossom[v]] == 0 and bestedge[v] != -1:
                    d = _slack(bestedge[v], ei, ej, ew, dual)
                    if deltatype == -1 or d < delta:
                        delta = d
                        deltatype = 2
                        deltaedge = bestedge[v]
            for b in range(2 * n):
                if bparent[b] == -1 and label[b] == 1 and bestedge[b] != -1 and (b < n or bbase[b] >= 0):
                    d = _slack(bestedge[b], ei, ej, ew, dual) // 2
                    if deltatype == -1 or d < delta:
                        delta = d
                        deltatype = 3
                        deltaedge = bestedge[b]
            for b in range(n, 2 * n):
                if bbase[b] >= 0 and bparent[b] == -1 and label[b] == 2 and (deltatype == -1 or dual[b] < delta):
                    delta = dual[b]
                    deltatype = 4
                    deltablossom = b
            if deltatype == -1:
                # maximum cardinality reached; one last dual update to reach optimality
                deltatype = 1
                delta = dual[0]
                for v in range(1, n):
                    if dual[v] < delta:
                        delta = dual[v]
                if delta < 0:
                    delta = 0

            for v in range(n):
                lb = label[inblossom[v]]
                if lb == 1:
                    dual[v] -= delta
                elif lb == 2:
                    dual[v] += delta
            for b in range(n, 2 * n):
                if bbase[b] >= 0 and bparent[b] == -1:
                    if label[b] == 1:
                        dual[b] += delta
                    elif label[b] == 2:
                        dual[b] -= delta

            if deltatype == 1:
                break
            elif deltatype == 2:
                allowedge[deltaedge] = True
                i = ei[deltaedge]
                if label[inblossom[i]] == 0:
                    i = ej[deltaedge]
                queue = _push(queue, qlen, i)
            elif deltatype == 3:
                allowedge[deltaedge] = True
                queue = _push(queue, qlen, ei[deltaedge])
            else:
                queue = _expand_t(deltablossom, n, endpoint, mate, label, labelend, inblossom,
                                  bparent, childs, nchilds, endps, bbase, bestedge, allowedge,
                                  unused, nunused, queue, qlen, leafbuf, stackbuf)
        if not augmented:
            break
        for b in range(n, 2 * n):
            if bparent[b] == -1 and bbase[b] >= 0 and label[b] == 1 and dual[b] == 0:
                _expand_end(b, n, inblossom, bparent, childs, nchilds, dual, label, labelend,
                            bbase, bestedge, unused, nunused, leafbuf, stackbuf, work1)

    out = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if mate[v] >= 0:
            out[v] = endpoint[mate[v]]
    return out


def max_weight_matching(n: int, edges, maxcardinality: bool = False) -> np.ndarray:
    """Maximum-weight matching of integer-weighted ``edges`` = [(i, j, w), ...].

    Returns ``mate`` with ``mate[v]`` the partner of ``v`` or -1.
    """
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    if np.any(arr[:, 0] == arr[:, 1]):
        raise ValueError("self-loops are not allowed")
    if arr.size and (arr[:, :2].min() < 0 or arr[:, :2].max() >= n):
        raise ValueError("edge endpoint out of range")
    return _mwm(int(n), arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), bool(maxcardinality))


@njit(cache=True)
def _mwpm(n, ei, ej, w):
    # doubled so that W - w keeps every slack even
    top = 0
    for k in range(w.shape[0]):
        if w[k] > top:
            top = w[k]
    tw = 2 * (top - w)
    mate = _mwm(n, ei, ej, tw, True)
    return mate


def min_weight_perfect_matching(n: int, edges) -> tuple[np.ndarray, int]:
    """Minimum-weight perfect matching; returns (mate, total weight).

    Raises ``MatchingInfeasible`` if no perfect matching exists.
    """
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    if np.any(arr[:, 2] < 0):
        raise ValueError("negative weights are not supported")
    mate = _mwpm(int(n), arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())
    if np.any(mate < 0):
        raise MatchingInfeasible("graph has no perfect matching")
    best: dict[tuple[int, int], int] = {}
    for i, j, w in arr.tolist():
        key = (min(i, j), max(i, j))
        best[key] = min(w, best.get(key, w))
    total = sum(best[(v, int(mate[v]))] for v in range(n) if v < mate[v])
    return mate, total
