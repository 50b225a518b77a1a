"""Per-round device clustering and lead selection.

Clusters are formed by greedy agglomeration under a joint objective: the
minimax radius of the merged set plus ``rho`` times the largest member
importance. The hot merging loop lives in a compiled extension
(``airfed._linkage_cy``) with a pure-Python fallback selected at import;
set AIRFED_PURE_PYTHON=1 to force the fallback.

Tie-breaking everywhere is toward the lowest device id.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import _linkage_py

if os.environ.get("AIRFED_PURE_PYTHON"):
    _kernel = _linkage_py
else:
    try:
        from . import _linkage_cy as _kernel
    except ImportError:
        _kernel = _linkage_py

KERNEL_BACKEND = "cython" if _kernel.__name__.endswith("_cy") else "python"


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of device ids into clusters with one lead each.

    ``clusters[n]`` is a sorted id array, ``leads[n]`` a member of it. In
    direct mode every device forms its own cluster and transmits for itself.
    """

    clusters: list[np.ndarray]
    leads: list[int]
    round_index: int = 0
    direct: bool = False

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def subordinates(self, n: int) -> np.ndarray:
        members = self.clusters[n]
        return members[members != self.leads[n]]

    def validate(self, n_devices: int):
        all_ids = np.concatenate(self.clusters)
        if sorted(all_ids.tolist()) != list(range(n_devices)):
            raise ValueError("clusters do not partition the device set")
        for members, lead in zip(self.clusters, self.leads):
            if members.size == 0:
                raise ValueError("empty cluster")
            if lead not in members:
                raise ValueError("lead outside its cluster")


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.linalg.norm(diff, axis=-1)


def set_objective(dist: np.ndarray, members, importances: np.ndarray,
                  rho: float) -> float:
    """Minimax radius of a device set plus rho times its largest importance."""
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("empty set")
    sub = dist[np.ix_(members, members)]
    return float(sub.max(axis=1).min() + rho * np.asarray(importances)[members].max())


def cluster(dist: np.ndarray, importances: np.ndarray, n_clusters: int,
            rho: float, return_merges: bool = False):
    """Agglomerate K singletons down to ``n_clusters`` sets.

    Returns cluster member lists sorted by id, ordered by smallest member.
    """
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    importances = np.ascontiguousarray(importances, dtype=np.float64)
    K = dist.shape[0]
    if not 1 <= n_clusters <= K:
        raise ValueError("cluster count must be in [1, K]")
    labels, merges = _kernel.agglomerate(dist, importances, float(rho), int(n_clusters))
    groups = [np.flatnonzero(labels == i) for i in range(n_clusters)]
    if return_merges:
        return groups, merges
    return groups


def select_leads(clusters: list[np.ndarray], dist: np.ndarray,
                 dist_to_ps: np.ndarray, importances: np.ndarray,
                 rho1: float, rho2: float) -> list[int]:
    """Pick each cluster's lead: argmin of mean intra-cluster distance
    + rho1 * distance-to-PS + rho2 * importance (lowest id on ties)."""
    leads = []
    for members in clusters:
        if members.size == 1:
            leads.append(int(members[0]))
            continue
        sub = dist[np.ix_(members, members)]
        mean_dist = sub.sum(axis=1) / (members.size - 1)
        score = mean_dist + rho1 * dist_to_ps[members] + rho2 * importances[members]
        leads.append(int(members[np.argmin(score)]))
    return leads


def assign_clusters(positions: np.ndarray, ps_position: np.ndarray,
                    importances: np.ndarray, n_clusters: int,
                    rho: float, rho1: float, rho2: float,
                    round_index: int = 0) -> ClusterAssignment:
    dist = pairwise_distances(positions)
    groups = cluster(dist, importances, n_clusters, rho)
    d_ps = np.linalg.norm(positions - ps_position, axis=1)
    leads = select_leads(groups, dist, d_ps, importances, rho1, rho2)
    return ClusterAssignment(clusters=groups, leads=leads, round_index=round_index)


def similarity_clusters(gradients: np.ndarray, n_clusters: int) -> list[np.ndarray]:
    """Agglomerate by cosine similarity: repeatedly merge the cluster pair
    whose union has the largest minimum pairwise similarity."""
    K = gradients.shape[0]
    if not 1 <= n_clusters <= K:
        raise ValueError("cluster count must be in [1, K]")
    norms = np.linalg.norm(gradients, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = gradients / safe[:, None]
    sim = unit @ unit.T
    sim[norms == 0, :] = 0.0
    sim[:, norms == 0] = 0.0

    # cluster-level min-similarity matrix; merging takes the elementwise min
    members = {s: [s] for s in range(K)}
    minsim = sim.copy()
    np.fill_diagonal(minsim, -np.inf)
    for _ in range(K - n_clusters):
        flat = int(np.argmax(minsim))
        a, b = divmod(flat, K)
        if a > b:
            a, b = b, a
        members[a] += members[b]
        del members[b]
        merged = np.minimum(minsim[a, :], minsim[b, :])
        minsim[a, :] = merged
        minsim[:, a] = merged
        minsim[a, a] = -np.inf
        minsim[b, :] = -np.inf
        minsim[:, b] = -np.inf
    return [np.sort(np.asarray(members[s], dtype=np.int64)) for s in sorted(members)]


def scale_defaults(dist: np.ndarray, n_classes: int) -> tuple[float, float]:
    """Default linkage/lead importance weights: median pairwise distance over
    the importance ceiling log(n_classes), so both criteria share one scale."""
    iu = np.triu_indices(dist.shape[0], k=1)
    med = float(np.median(dist[iu])) if iu[0].size else 0.0
    scale = med / np.log(n_classes) if n_classes > 1 else 0.0
    return scale, scale


def dump_assignments(path, rows: list[tuple[int, ClusterAssignment]]):
    """Write (round, device, cluster, is_lead) rows for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "device", "cluster", "is_lead"])
        for round_index, assignment in rows:
            for n, members in enumerate(assignment.clusters):
                for dev in members:
                    writer.writerow([round_index, int(dev), n,
                                     int(dev == assignment.leads[n])])
