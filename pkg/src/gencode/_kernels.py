"""Compiled inner loops for echelon maintenance over GF(2^k).

Rows are ``uint8`` vectors laid out as ``[coefficients | payload]``; only the
first ``g`` entries take part in pivoting.  Matrices are kept in reduced row
echelon form, so reducing a new row needs one pass over the stored rows.
"""
import numpy as np
from numba import njit

INCONSISTENT = -1


@njit(cache=True)
def substitute_known(row, members, resolved, values, g, mul):
    """Move resolved unknowns to the right-hand side and zero their columns."""
    w = row.shape[0]
    for c in range(g):
        a = row[c]
        if a != 0 and resolved[members[c]]:
            x = values[members[c]]
            for t in range(w - g):
                row[g + t] ^= mul[a, x[t]]
            row[c] = 0


@njit(cache=True)
def reduce_insert(mat, rank, piv, row, g, mul, inv):
    """Reduce ``row`` against ``mat[:rank]`` and insert it if it is innovative.

    Returns the new rank, or ``INCONSISTENT`` when the coefficients vanish but
    the payload does not.
    """
    w = row.shape[0]
    for r in range(rank):
        a = row[piv[r]]
        if a != 0:
            src = mat[r]
            for t in range(w):
                row[t] ^= mul[a, src[t]]
    p = -1
    for c in range(g):
        if row[c] != 0:
            p = c
            break
    if p < 0:
        for t in range(g, w):
            if row[t] != 0:
                return INCONSISTENT
        return rank
    s = inv[row[p]]
    if s != 1:
        for t in range(w):
            row[t] = mul[s, row[t]]
    for r in range(rank):
        a = mat[r, p]
        if a != 0:
            for t in range(w):
                mat[r, t] ^= mul[a, row[t]]
    for t in range(w):
        mat[rank, t] = row[t]
    piv[rank] = p
    return rank + 1


@njit(cache=True)
def drop_resolved(mat, rank, piv, members, resolved, values, g, mul, inv):
    """Eliminate every resolved column and restore echelon form.

    Rows whose pivot column became known are pulled out and re-inserted; the
    rank can drop when they turn out dependent on the remaining rows.
    """
    w = mat.shape[1]
    for r in range(rank):
        substitute_known(mat[r], members, resolved, values, g, mul)
    tmp = np.empty((rank, w), dtype=np.uint8)
    nred = 0
    keep = 0
    for r in range(rank):
        if resolved[members[piv[r]]]:
            tmp[nred] = mat[r]
            nred += 1
        else:
            if keep != r:
                mat[keep] = mat[r]
                piv[keep] = piv[r]
            keep += 1
    rank = keep
    for t in range(nred):
        rank = reduce_insert(mat, rank, piv, tmp[t], g, mul, inv)
        if rank == INCONSISTENT:
            return INCONSISTENT
    return rank


@njit(cache=True)
def rank_prefix_counts(g, q, s_max, trials, seed, mul, inv):
    """For ``trials`` sequences of ``s_max`` uniform vectors in GF(q)^g, count
    how often the first ``s`` vectors fail to span, for every s = 1..s_max."""
    np.random.seed(seed)
    deficient = np.zeros(s_max + 1, dtype=np.int64)
    mat = np.zeros((g, g), dtype=np.uint8)
    piv = np.zeros(g, dtype=np.int64)
    row = np.zeros(g, dtype=np.uint8)
    for _ in range(trials):
        rank = 0
        for s in range(1, s_max + 1):
            if rank < g:
                for c in range(g):
                    row[c] = np.random.randint(0, q)
                rank = reduce_insert(mat, rank, piv, row, g, mul, inv)
            if rank < g:
                deficient[s] += 1
    return deficient


@njit(cache=True)
def disjoint_latencies(sizes, cdf, q, eps, trials, seed, uniform):
    """Latency samples for disjoint generations.

    Each generation's completion count is drawn from the rank process of
    uniform random coding vectors (a new vector is innovative w.p.
    1 - q^(rank-g)); generations are then scheduled by ``cdf`` until every
    one has received its count.  Erased transmissions are counted.  With
    ``uniform`` the generation index is drawn directly instead of by search.
    """
    np.random.seed(seed)
    n = sizes.shape[0]
    need = np.zeros(n, dtype=np.int64)
    got = np.zeros(n, dtype=np.int64)
    out = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        for i in range(n):
            g = sizes[i]
            k = 0
            m = 0
            while k < g:
                m += 1
                if np.random.random() >= float(q) ** (k - g):
                    k += 1
            need[i] = m
            got[i] = 0
        remaining = n
        sent = 0
        while remaining > 0:
            sent += 1
            if eps > 0.0 and np.random.random() < eps:
                continue
            u = np.random.random()
            if uniform:
                lo = min(int(u * n), n - 1)
                hi = lo
            else:
                lo = 0
                hi = n - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if cdf[mid] > u:
                    hi = mid
                else:
                    lo = mid + 1
            got[lo] += 1
            if got[lo] == need[lo]:
                remaining -= 1
        out[t] = sent
    return out
