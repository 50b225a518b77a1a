import numpy as np
import pytest

from airfed.aircomp import PowerBudgets
from airfed.channel import ChannelRealization


def random_instance(rng: np.random.Generator, max_devices: int = 50,
                    max_clusters: int = 10, scale: str = "unit"):
    """Random solver instance: cluster sizes, O(1) or physical channel scales.

    Returns (chan, budgets). Every cluster gets at least one member (the
    lead); remaining devices are spread at random.
    """
    n_clusters = int(rng.integers(1, max_clusters + 1))
    k = int(rng.integers(n_clusters, max_devices + 1))
    extra = rng.integers(0, n_clusters, size=k - n_clusters)
    sub_cluster = np.sort(extra).astype(np.int64)
    n_subs = sub_cluster.size
    if scale == "unit":
        sub_mags = rng.uniform(0.2, 2.0, n_subs)
        lead_mags = rng.uniform(0.2, 2.0, n_clusters)
        noise_lead = rng.uniform(0.01, 0.5, n_clusters)
        noise_ps = float(rng.uniform(0.01, 0.5))
        pmax = rng.uniform(0.5, 4.0)
    else:
        sub_mags = rng.uniform(1e-6, 1e-4, n_subs)
        lead_mags = rng.uniform(1e-7, 1e-5, n_clusters)
        noise_lead = np.full(n_clusters, 1e-11)
        noise_ps = 1e-11
        pmax = 0.2
    sub_ids = np.arange(n_subs, dtype=np.int64)
    lead_ids = np.arange(n_subs, n_subs + n_clusters, dtype=np.int64)
    chan = ChannelRealization(sub_ids=sub_ids, sub_cluster=sub_cluster,
                              sub_mags=sub_mags, lead_ids=lead_ids,
                              lead_mags=lead_mags, noise_power_lead=noise_lead,
                              noise_power_ps=noise_ps)
    budgets = PowerBudgets(sub_pmax=np.full(n_subs, pmax),
                           lead_pmax=np.full(n_clusters, pmax))
    return chan, budgets


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
