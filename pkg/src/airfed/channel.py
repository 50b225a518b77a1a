"""Distance-dependent Rayleigh channel model and device geometry.

Each link magnitude is sqrt(omega0 * d**-kappa) * |h0| with |h0| the magnitude
of a unit-variance complex Gaussian, redrawn independently every round
(quasi-static within a round). Received signals and additive noise are
modeled real-valued; noise powers are per real sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Geometry:
    """Fixed device locations plus the receiver position, in meters."""

    device_positions: np.ndarray   # (K, 2)
    ps_position: np.ndarray        # (2,)

    def distance_to_ps(self, ids=None) -> np.ndarray:
        pos = self.device_positions if ids is None else self.device_positions[ids]
        return np.linalg.norm(pos - self.ps_position, axis=-1)

    def pairwise_distances(self) -> np.ndarray:
        diff = self.device_positions[:, None, :] - self.device_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ChannelRealization:
    """One round's link magnitudes and noise powers, aligned to an assignment.

    Subordinate entries are stored flat in cluster order: ``sub_ids[i]`` is the
    device id, ``sub_cluster[i]`` the index of its cluster, and ``sub_mags[i]``
    the amplitude gain of its link to that cluster's lead. ``lead_mags[n]`` is
    the lead-to-receiver gain of cluster n.
    """

    sub_ids: np.ndarray          # (S,) int
    sub_cluster: np.ndarray      # (S,) int, non-decreasing
    sub_mags: np.ndarray         # (S,) float
    lead_ids: np.ndarray         # (N,) int
    lead_mags: np.ndarray        # (N,) float
    noise_power_lead: np.ndarray # (N,) float, watts
    noise_power_ps: float        # watts

    @property
    def n_clusters(self) -> int:
        return self.lead_ids.shape[0]

    @property
    def n_subordinates(self) -> int:
        return self.sub_ids.shape[0]

    def sub_to_lead_mag(self, sub_id: int, lead_id: int) -> float:
        n = int(np.flatnonzero(self.lead_ids == lead_id)[0])
        i = int(np.flatnonzero((self.sub_ids == sub_id) & (self.sub_cluster == n))[0])
        return float(self.sub_mags[i])

    def lead_to_ps_mag(self, lead_id: int) -> float:
        n = int(np.flatnonzero(self.lead_ids == lead_id)[0])
        return float(self.lead_mags[n])


def sample_ring_geometry(n_devices: int, inner_m: float, outer_m: float,
                         rng: np.random.Generator) -> Geometry:
    """Devices i.i.d. uniform over the annulus around the receiver at the origin.

    Uniform in area: radius = sqrt(u*(outer^2 - inner^2) + inner^2).
    """
    if not 0 < inner_m < outer_m:
        raise ValueError("need 0 < inner < outer")
    u = rng.random(n_devices)
    r = np.sqrt(u * (outer_m ** 2 - inner_m ** 2) + inner_m ** 2)
    theta = rng.random(n_devices) * 2.0 * np.pi
    pos = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return Geometry(device_positions=pos, ps_position=np.zeros(2))


def fading_magnitudes(distances: np.ndarray, omega0: float, kappa: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Amplitude gains sqrt(omega0 * d**-kappa) * |h0|, |h0|^2 ~ exponential(1)."""
    distances = np.asarray(distances, dtype=float)
    if np.any(distances <= 0):
        raise ValueError("degenerate link")
    small_scale = np.hypot(rng.standard_normal(distances.shape),
                           rng.standard_normal(distances.shape)) / np.sqrt(2.0)
    return np.sqrt(omega0 * distances ** (-kappa)) * small_scale


def sample_channels(geometry: Geometry, assignment, omega0: float, kappa: float,
                    noise_lead_w: float, noise_ps_w: float,
                    rng: np.random.Generator) -> ChannelRealization:
    """Draw one round's magnitudes for every subordinate->lead and lead->PS link.

    ``assignment`` provides clusters (id lists) and one lead per cluster; in
    direct mode every device is its own lead and only device->PS links exist.
    """
    if assignment.direct:
        lead_ids = np.asarray(assignment.leads, dtype=np.int64)
        d_ps = geometry.distance_to_ps(lead_ids)
        lead_mags = fading_magnitudes(d_ps, omega0, kappa, rng)
        return ChannelRealization(
            sub_ids=np.empty(0, dtype=np.int64),
            sub_cluster=np.empty(0, dtype=np.int64),
            sub_mags=np.empty(0),
            lead_ids=lead_ids,
            lead_mags=lead_mags,
            noise_power_lead=np.zeros(lead_ids.shape[0]),
            noise_power_ps=noise_ps_w,
        )

    sub_ids, sub_cluster, sub_dist = [], [], []
    pos = geometry.device_positions
    for n, (members, lead) in enumerate(zip(assignment.clusters, assignment.leads)):
        for dev in members:
            if dev == lead:
                continue
            sub_ids.append(dev)
            sub_cluster.append(n)
            sub_dist.append(np.linalg.norm(pos[dev] - pos[lead]))
    sub_ids = np.asarray(sub_ids, dtype=np.int64)
    sub_cluster = np.asarray(sub_cluster, dtype=np.int64)
    sub_dist = np.asarray(sub_dist, dtype=float)
    lead_ids = np.asarray(assignment.leads, dtype=np.int64)

    sub_mags = (fading_magnitudes(sub_dist, omega0, kappa, rng)
                if sub_ids.size else np.empty(0))
    lead_mags = fading_magnitudes(geometry.distance_to_ps(lead_ids), omega0, kappa, rng)
    return ChannelRealization(
        sub_ids=sub_ids,
        sub_cluster=sub_cluster,
        sub_mags=sub_mags,
        lead_ids=lead_ids,
        lead_mags=lead_mags,
        noise_power_lead=np.full(lead_ids.shape[0], noise_lead_w),
        noise_power_ps=noise_ps_w,
    )
