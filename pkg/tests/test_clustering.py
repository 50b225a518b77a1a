import numpy as np
import pytest

from airfed import _linkage_py
from airfed.clustering import (KERNEL_BACKEND, ClusterAssignment, assign_clusters,
                               cluster, pairwise_distances, select_leads,
                               set_objective, similarity_clusters)
from oracles import best_two_partition, greedy_reference_merges

try:
    from airfed import _linkage_cy
except ImportError:
    _linkage_cy = None


def _line_positions(xs):
    return np.array([[x, 0.0] for x in xs])


def test_set_objective_examples():
    dist = pairwise_distances(_line_positions([0.0, 10.0]))
    imps = np.array([1.0, 2.0])
    assert set_objective(dist, [0], imps, 0.0) == 0.0
    assert set_objective(dist, [0, 1], imps, 0.0) == pytest.approx(10.0)
    assert set_objective(dist, [0, 1], imps, 3.0) == pytest.approx(16.0)
    with pytest.raises(ValueError, match="empty"):
        set_objective(dist, [], imps, 0.0)


def test_cluster_line_points_two_groups():
    dist = pairwise_distances(_line_positions([0.0, 1.0, 10.0, 11.0]))
    groups = cluster(dist, np.zeros(4), 2, 0.0)
    as_tuples = [tuple(g) for g in groups]
    assert as_tuples == [(0, 1), (2, 3)]
    # brute force over all 2-partitions agrees
    left, right = best_two_partition(dist, np.zeros(4), 0.0)
    assert {frozenset(g) for g in as_tuples} == {left, right}


def test_cluster_n_equals_k_all_singletons():
    dist = pairwise_distances(_line_positions([3.0, 1.0, 2.0]))
    groups = cluster(dist, np.zeros(3), 3, 0.0)
    assert [tuple(g) for g in groups] == [(0,), (1,), (2,)]


def test_cluster_invalid_counts():
    dist = pairwise_distances(_line_positions([0.0, 1.0]))
    with pytest.raises(ValueError):
        cluster(dist, np.zeros(2), 3, 0.0)
    with pytest.raises(ValueError):
        cluster(dist, np.zeros(2), 0, 0.0)


def test_high_importance_device_isolated_with_large_weight():
    rng = np.random.default_rng(4)
    pos = rng.uniform(0, 10, size=(6, 2))
    dist = pairwise_distances(pos)
    imps = np.zeros(6)
    imps[3] = 1.0
    groups = cluster(dist, imps, 2, rho=1e6)
    holder = [tuple(g) for g in groups if 3 in g]
    assert holder == [(3,)]


def test_greedy_matches_exhaustive_reference_small_k(rng):
    for trial in range(40):
        k = int(rng.integers(3, 9))
        n = int(rng.integers(1, k + 1))
        pos = rng.uniform(0, 100, size=(k, 2))
        imps = rng.uniform(0, 2.3, size=k)
        rho = float(rng.uniform(0, 30))
        dist = pairwise_distances(pos)
        groups, merges = cluster(dist, imps, n, rho, return_merges=True)
        ref_merges, ref_final = greedy_reference_merges(dist, imps, rho, n)
        assert [tuple(g) for g in groups] == ref_final
        assert len(merges) == len(ref_merges)
        for got, want in zip(merges, ref_merges):
            assert (int(got[0]), int(got[1])) == (want[0], want[1])
            assert got[2] == pytest.approx(want[2], rel=1e-12)


def test_partition_invariants_random_instances(rng):
    for _ in range(300):
        k = int(rng.integers(2, 30))
        n = int(rng.integers(1, k + 1))
        pos = rng.uniform(0, 50, size=(k, 2))
        imps = rng.uniform(0, 2.3, size=k)
        asg = assign_clusters(pos, np.zeros(2), imps, n, rho=1.0, rho1=0.5,
                              rho2=-1.0)
        asg.validate(k)
        assert asg.n_clusters == n


def test_rho_zero_reduces_to_pure_minimax(rng):
    pos = rng.uniform(0, 10, size=(7, 2))
    dist = pairwise_distances(pos)
    imps = rng.uniform(0, 5, size=7)
    with_imp = cluster(dist, imps, 3, 0.0)
    without = cluster(dist, np.zeros(7), 3, 0.0)
    assert [tuple(g) for g in with_imp] == [tuple(g) for g in without]


def test_determinism_identical_inputs(rng):
    pos = rng.uniform(0, 10, size=(12, 2))
    imps = rng.uniform(0, 1, size=12)
    a = assign_clusters(pos, np.zeros(2), imps, 4, 1.0, 0.5, -1.0)
    b = assign_clusters(pos, np.zeros(2), imps, 4, 1.0, 0.5, -1.0)
    assert [tuple(g) for g in a.clusters] == [tuple(g) for g in b.clusters]
    assert a.leads == b.leads


def test_kernel_parity_bitwise(rng):
    if _linkage_cy is None:
        pytest.skip("compiled kernel unavailable")
    for _ in range(60):
        k = int(rng.integers(2, 25))
        n = int(rng.integers(1, k + 1))
        pos = rng.uniform(0, 10, size=(k, 2))
        dist = pairwise_distances(pos)
        imps = rng.uniform(0, 2, size=k)
        rho = float(rng.uniform(0, 3))
        lab_c, mer_c = _linkage_cy.agglomerate(dist, imps, rho, n)
        lab_p, mer_p = _linkage_py.agglomerate(dist, imps, rho, n)
        np.testing.assert_array_equal(lab_c, lab_p)
        np.testing.assert_array_equal(mer_c, mer_p)


def test_kernel_parity_with_ties():
    if _linkage_cy is None:
        pytest.skip("compiled kernel unavailable")
    # symmetric grid: many exactly-equal linkage values
    xs = [0.0, 1.0, 2.0, 3.0]
    pos = np.array([[x, y] for x in xs for y in xs])
    dist = pairwise_distances(pos)
    imps = np.zeros(len(pos))
    for n in (1, 2, 4, 7):
        lab_c, mer_c = _linkage_cy.agglomerate(dist, imps, 0.0, n)
        lab_p, mer_p = _linkage_py.agglomerate(dist, imps, 0.0, n)
        np.testing.assert_array_equal(lab_c, lab_p)
        np.testing.assert_array_equal(mer_c, mer_p)


def test_backend_reported():
    assert KERNEL_BACKEND in ("cython", "python")


# ---------------------------------------------------------------- leads

def test_lead_tie_breaks_to_lowest_id():
    pos = np.array([[0.0, 0.0], [10.0, 0.0]])
    dist = pairwise_distances(pos)
    d_ps = np.linalg.norm(pos - np.array([5.0, 100.0]), axis=1)
    leads = select_leads([np.array([0, 1])], dist, d_ps, np.zeros(2), 0.0, 0.0)
    assert leads == [0]


def test_lead_large_rho1_prefers_closest_to_ps(rng):
    for _ in range(20):
        pos = rng.uniform(0, 100, size=(5, 2))
        dist = pairwise_distances(pos)
        d_ps = np.linalg.norm(pos, axis=1)
        members = np.arange(5)
        leads = select_leads([members], dist, d_ps, rng.uniform(0, 1, 5),
                             rho1=1e9, rho2=1.0)
        assert leads[0] == int(members[np.argmin(d_ps)])


def test_lead_importance_sign_changes_selection():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]])
    dist = pairwise_distances(pos)
    d_ps = np.full(3, 10.0)
    imps = np.array([0.1, 0.1, 2.0])
    neutral = select_leads([np.arange(3)], dist, d_ps, imps, 0.0, 0.0)
    prefer_importance = select_leads([np.arange(3)], dist, d_ps, imps, 0.0, -10.0)
    assert neutral != prefer_importance
    assert prefer_importance == [2]


def test_lead_is_argmin_exhaustive(rng):
    for _ in range(100):
        k = int(rng.integers(2, 10))
        pos = rng.uniform(0, 50, size=(k, 2))
        dist = pairwise_distances(pos)
        d_ps = np.linalg.norm(pos, axis=1)
        imps = rng.uniform(0, 2.3, k)
        rho1, rho2 = rng.uniform(0, 2), rng.uniform(-2, 2)
        members = np.sort(rng.choice(k, size=int(rng.integers(1, k + 1)),
                                     replace=False))
        lead = select_leads([members], dist, d_ps, imps, rho1, rho2)[0]
        scores = {}
        for i in members:
            others = [j for j in members if j != i]
            mean_d = np.mean([dist[i, j] for j in others]) if others else 0.0
            scores[i] = mean_d + rho1 * d_ps[i] + rho2 * imps[i]
        assert scores[lead] == pytest.approx(min(scores.values()), abs=1e-12)


def test_singleton_cluster_lead_is_sole_member():
    pos = np.array([[0.0, 0.0], [5.0, 5.0]])
    dist = pairwise_distances(pos)
    leads = select_leads([np.array([1])], dist, np.zeros(2), np.zeros(2), 1.0, 1.0)
    assert leads == [1]


# ------------------------------------------------------------- similarity

def test_similarity_clusters_group_aligned_gradients():
    base1 = np.array([1.0, 0.0, 0.0])
    base2 = np.array([0.0, 1.0, 0.0])
    G = np.stack([base1, 1.5 * base1, base2, 2.0 * base2])
    groups = similarity_clusters(G, 2)
    assert {frozenset(g.tolist()) for g in groups} == {frozenset({0, 1}),
                                                       frozenset({2, 3})}


def test_similarity_partition_property(rng):
    G = rng.normal(size=(15, 8))
    groups = similarity_clusters(G, 4)
    ClusterAssignment(clusters=groups, leads=[int(g[0]) for g in groups]).validate(15)
