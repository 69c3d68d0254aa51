"""Hot inner loops: IDNC adjacency construction and greedy weighted clique growth.

Both kernels exist twice, as numba ``@njit`` functions and as plain numpy.
The numba path is used when numba imports cleanly and the environment
variable ``IDNC_DISABLE_NUMBA`` is unset (or ``0``).  Set it to ``1`` to force
the numpy path; results are identical up to the tie tolerance below.
"""
import os

import numpy as np

# Weights within this relative distance of the maximum count as tied.  Ties
# go to the candidate adjacent to most other candidates, then to the lowest
# vertex index.  The tolerance keeps the two backends in agreement when
# summation order differs by an ulp.
TIE_RTOL = 1e-12

_disabled = os.environ.get("IDNC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("numba disabled by IDNC_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def build_adjacency_numpy(sfm, recv, pkt):
    """Adjacency of vertices (recv[k], pkt[k]) under conditions C1/C2."""
    same_packet = pkt[:, None] == pkt[None, :]
    # C2: my packet is held by the other receiver and vice versa
    held = sfm[recv[None, :], pkt[:, None]] == 0
    adj = same_packet | (held & held.T)
    np.fill_diagonal(adj, False)
    return adj


def greedy_clique_numpy(adj, a, b, cand):
    """Grow a clique by repeatedly adding the max-weight candidate.

    The weight of candidate u is ``a[u] * sum(b[x] for candidates x ~ u)``,
    recomputed on the surviving candidate set each round.  Returns the
    chosen vertex indices in selection order.
    """
    cand = cand.copy()
    adjf = adj.astype(np.float64)
    chosen = []
    while cand.any():
        idx = np.flatnonzero(cand)
        sub = adjf[np.ix_(idx, idx)]
        w = a[idx] * (sub @ b[idx])
        best = w.max()
        thr = best * (1.0 - TIE_RTOL) if best > 0 else best
        deg = np.where(w >= thr, sub.sum(axis=1), -1.0)
        u = idx[int(np.argmax(deg))]
        chosen.append(u)
        cand &= adj[u]
    return np.array(chosen, dtype=np.int64)


if HAVE_NUMBA:

    @njit(cache=True)
    def build_adjacency_numba(sfm, recv, pkt):
        v = recv.shape[0]
        adj = np.zeros((v, v), dtype=np.bool_)
        for s in range(v):
            for t in range(s + 1, v):
                if pkt[s] == pkt[t] or (sfm[recv[t], pkt[s]] == 0 and sfm[recv[s], pkt[t]] == 0):
                    adj[s, t] = True
                    adj[t, s] = True
        return adj

    @njit(cache=True)
    def greedy_clique_numba(adj, a, b, cand0):
        v = adj.shape[0]
        cand = cand0.copy()
        chosen = np.empty(v, dtype=np.int64)
        n_chosen = 0
        idx = np.empty(v, dtype=np.int64)
        w = np.empty(v, dtype=np.float64)
        deg = np.empty(v, dtype=np.int64)
        while True:
            c = 0
            for u in range(v):
                if cand[u]:
                    idx[c] = u
                    c += 1
            if c == 0:
                break
            best = -1.0
            for s in range(c):
                u = idx[s]
                tot = 0.0
                d = 0
                for t in range(c):
                    x = idx[t]
                    if adj[u, x]:
                        tot += b[x]
                        d += 1
                w[s] = a[u] * tot
                deg[s] = d
                if w[s] > best:
                    best = w[s]
            thr = best * (1.0 - TIE_RTOL) if best > 0 else best
            pick = -1
            for s in range(c):
                if w[s] >= thr and (pick < 0 or deg[s] > deg[pick]):
                    pick = s
            u = idx[pick]
            chosen[n_chosen] = u
            n_chosen += 1
            for x in range(v):
                cand[x] = cand[x] and adj[u, x]
        return chosen[:n_chosen]

    build_adjacency = build_adjacency_numba
    greedy_clique = greedy_clique_numba
    BACKEND = "numba"
else:
    build_adjacency = build_adjacency_numpy
    greedy_clique = greedy_clique_numpy
    BACKEND = "numpy"
