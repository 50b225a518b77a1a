"""Pure-Python agglomerative kernel; reference implementation of the
compiled extension with identical merge order and tie-breaking."""

from __future__ import annotations

import numpy as np


def _objective(dist: np.ndarray, imp: np.ndarray, rho: float, members) -> float:
    sub = dist[np.ix_(members, members)]
    return float(sub.max(axis=1).min() + rho * imp[members].max())


def agglomerate(dist: np.ndarray, imp: np.ndarray, rho: float,
                n_clusters: int) -> tuple[np.ndarray, np.ndarray]:
    """Greedy merging of the pair whose union minimizes the joint objective.

    Slots are keyed by their smallest member id; ties on the linkage value are
    broken toward the lexicographically smallest slot pair. Returns cluster
    labels (clusters numbered by ascending smallest member) and the merge
    record (slot_a, slot_b, linkage) per step.
    """
    K = dist.shape[0]
    members = {s: [s] for s in range(K)}
    active = list(range(K))
    link = np.full((K, K), np.inf)
    for a in range(K):
        for b in range(a + 1, K):
            link[a, b] = _objective(dist, imp, rho, [a, b])

    merges = np.empty((K - n_clusters, 3))
    for step in range(K - n_clusters):
        flat = int(np.argmin(link))
        a, b = divmod(flat, K)
        merges[step] = (a, b, link[a, b])
        members[a] += members[b]
        del members[b]
        active.remove(b)
        link[b, :] = np.inf
        link[:, b] = np.inf
        for c in active:
            if c == a:
                continue
            lo, hi = (a, c) if a < c else (c, a)
            link[lo, hi] = _objective(dist, imp, rho, members[a] + members[c])

    labels = np.empty(K, dtype=np.int64)
    for idx, slot in enumerate(sorted(members)):
        labels[members[slot]] = idx
    return labels, merges
