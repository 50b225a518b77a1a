"""Gradient normalization and two-tier analog aggregation.

Per-round flow: device gradients are standardized with the global mean/std,
subordinates transmit the symbols to their cluster lead over one noisy hop,
leads forward the superposition to the receiver over a second hop, and the
receiver rescales with a de-noising factor and de-normalizes. The aggregation
error (estimate minus the plain gradient average) is computed both directly
and from its closed form over the recorded noise; the two must agree, which
is asserted on every round as an integrity check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization

ERROR_IDENTITY_TOL = 1e-9
POWER_SLACK = 1e-9


@dataclass(frozen=True)
class GradientStats:
    """Per-device and population mean/variance of the round's gradients."""

    per_device_mean: np.ndarray   # (K,)
    per_device_var: np.ndarray    # (K,)
    mean: float                   # population average of per-device means
    var: float                    # population average of per-device variances

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))


@dataclass(frozen=True)
class PowerAllocation:
    """Transmit powers and the receiver-side de-noising factor for one round.

    ``alpha`` is per subordinate (flat, cluster order), ``beta`` per lead; in
    direct mode ``alpha`` is empty and ``beta`` holds the per-device powers.
    """

    alpha: np.ndarray
    beta: np.ndarray
    zeta: float


@dataclass(frozen=True)
class PowerBudgets:
    sub_pmax: np.ndarray    # (S,)
    lead_pmax: np.ndarray   # (N,)

    @classmethod
    def uniform(cls, chan: ChannelRealization, pmax: float) -> "PowerBudgets":
        return cls(sub_pmax=np.full(chan.n_subordinates, pmax),
                   lead_pmax=np.full(chan.n_clusters, pmax))


@dataclass(frozen=True)
class AggregationOutcome:
    estimated_gradient: np.ndarray   # (M,)
    ideal_gradient: np.ndarray       # (M,)
    error: np.ndarray                # (M,) estimated - ideal, identity-checked
    lead_noise: np.ndarray           # (N, M) recorded draws
    ps_noise: np.ndarray             # (M,)


def compute_stats(gradients: np.ndarray) -> GradientStats:
    """Entrywise mean and population variance per device, then averaged."""
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    if G.shape[0] == 0:
        raise ValueError("no gradients")
    means = G.mean(axis=1)
    variances = G.var(axis=1)
    return GradientStats(per_device_mean=means, per_device_var=variances,
                         mean=float(means.mean()), var=float(variances.mean()))


def normalize(gradients: np.ndarray, stats: GradientStats) -> np.ndarray:
    """Standardize with the population mean and std shared by all devices."""
    if stats.var <= 0:
        raise ValueError("degenerate normalization")
    return (np.asarray(gradients, dtype=float) - stats.mean) / stats.std


def denormalize(symbols: np.ndarray, stats: GradientStats) -> np.ndarray:
    return symbols * stats.std + stats.mean


def _check_subordinate_power(alloc: PowerAllocation, budgets: PowerBudgets):
    if np.any(alloc.alpha > budgets.sub_pmax * (1 + POWER_SLACK)):
        raise ValueError("subordinate power constraint violated")


def lead_transmit_power(alloc: PowerAllocation, chan: ChannelRealization) -> np.ndarray:
    """Per-lead transmit power: beta times (received signal power + noise)."""
    received = np.bincount(chan.sub_cluster, weights=chan.sub_mags ** 2 * alloc.alpha,
                           minlength=chan.n_clusters)
    return alloc.beta * (received + chan.noise_power_lead)


def _check_lead_power(alloc: PowerAllocation, chan: ChannelRealization,
                      budgets: PowerBudgets):
    if np.any(lead_transmit_power(alloc, chan) > budgets.lead_pmax * (1 + POWER_SLACK)):
        raise ValueError("lead power constraint violated")


def intra_cluster_aggregate(symbols: np.ndarray, alloc: PowerAllocation,
                            chan: ChannelRealization, budgets: PowerBudgets,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """First hop: per-lead superposition of the subordinates' scaled symbols.

    ``symbols`` is (S, M) in the channel's flat subordinate order. Returns the
    (N, M) received signals and the recorded (N, M) noise draws.
    """
    _check_subordinate_power(alloc, budgets)
    n, m = chan.n_clusters, symbols.shape[1]
    gains = chan.sub_mags * np.sqrt(alloc.alpha)
    received = np.zeros((n, m))
    for cluster_idx in range(n):
        mask = chan.sub_cluster == cluster_idx
        if np.any(mask):
            received[cluster_idx] = gains[mask] @ symbols[mask]
    noise = rng.standard_normal((n, m)) * np.sqrt(chan.noise_power_lead)[:, None]
    return received + noise, noise


def inter_cluster_aggregate(lead_signals: np.ndarray, alloc: PowerAllocation,
                            chan: ChannelRealization, budgets: PowerBudgets,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Second hop: superposition of the scaled lead signals at the receiver."""
    _check_lead_power(alloc, chan, budgets)
    gains = chan.lead_mags * np.sqrt(alloc.beta)
    noise = rng.standard_normal(lead_signals.shape[1]) * np.sqrt(chan.noise_power_ps)
    return gains @ lead_signals + noise, noise


def estimate_global(ps_signal: np.ndarray, stats: GradientStats, zeta: float,
                    n_devices: int) -> np.ndarray:
    """De-noise and de-normalize the received superposition."""
    if zeta <= 0:
        raise ValueError("de-noising factor must be positive")
    return stats.std * (zeta / n_devices) * ps_signal + stats.mean


def alignment_products(alloc: PowerAllocation, chan: ChannelRealization) -> np.ndarray:
    """End-to-end gain per subordinate symbol: zeta * lead-hop * intra-hop.

    A value of 1 means that subordinate's centered gradient arrives with the
    exact weight the plain average would give it.
    """
    lead_gain = chan.lead_mags * np.sqrt(alloc.beta)
    return alloc.zeta * lead_gain[chan.sub_cluster] * chan.sub_mags * np.sqrt(alloc.alpha)


def closed_form_error(gradients: np.ndarray, stats: GradientStats,
                      chan: ChannelRealization, alloc: PowerAllocation,
                      lead_noise: np.ndarray, ps_noise: np.ndarray) -> np.ndarray:
    """Aggregation error reconstructed from its decomposition: misalignment of
    each subordinate's centered gradient, omission of the leads' own centered
    gradients, and the forwarded plus receiver noise, all scaled by 1/K."""
    G = np.atleast_2d(gradients)
    k = G.shape[0]
    centered = G - stats.mean
    products = alignment_products(alloc, chan)
    misalign = (products - 1.0) @ centered[chan.sub_ids]
    omission = centered[chan.lead_ids].sum(axis=0)
    lead_gain = chan.lead_mags * np.sqrt(alloc.beta)
    noise = alloc.zeta * stats.std * (lead_gain @ lead_noise + ps_noise)
    return (misalign - omission + noise) / k


def direct_closed_form_error(gradients: np.ndarray, stats: GradientStats,
                             chan: ChannelRealization, alloc: PowerAllocation,
                             ps_noise: np.ndarray) -> np.ndarray:
    """Single-hop variant: every device transmits for itself, nothing is omitted."""
    G = np.atleast_2d(gradients)
    k = G.shape[0]
    centered = G - stats.mean
    products = alloc.zeta * chan.lead_mags * np.sqrt(alloc.beta)
    misalign = (products - 1.0) @ centered[chan.lead_ids]
    return (misalign + alloc.zeta * stats.std * ps_noise) / k


def _checked_error(estimate: np.ndarray, ideal: np.ndarray,
                   closed: np.ndarray) -> np.ndarray:
    direct = estimate - ideal
    if not np.allclose(direct, closed, rtol=ERROR_IDENTITY_TOL,
                       atol=ERROR_IDENTITY_TOL):
        raise AssertionError("aggregation error decomposition mismatch "
                             "(implementation bug)")
    return direct


def two_tier_round(gradients: np.ndarray, stats: GradientStats,
                   chan: ChannelRealization, alloc: PowerAllocation,
                   budgets: PowerBudgets, rng: np.random.Generator) -> AggregationOutcome:
    """Run one full aggregation round and cross-check the error identity."""
    G = np.atleast_2d(gradients)
    symbols = normalize(G, stats)
    lead_signals, lead_noise = intra_cluster_aggregate(
        symbols[chan.sub_ids], alloc, chan, budgets, rng)
    ps_signal, ps_noise = inter_cluster_aggregate(
        lead_signals, alloc, chan, budgets, rng)
    estimate = estimate_global(ps_signal, stats, alloc.zeta, G.shape[0])
    ideal = G.mean(axis=0)
    closed = closed_form_error(G, stats, chan, alloc, lead_noise, ps_noise)
    error = _checked_error(estimate, ideal, closed)
    return AggregationOutcome(estimated_gradient=estimate, ideal_gradient=ideal,
                              error=error, lead_noise=lead_noise, ps_noise=ps_noise)


def direct_round(gradients: np.ndarray, stats: GradientStats,
                 chan: ChannelRealization, alloc: PowerAllocation,
                 budgets: PowerBudgets, rng: np.random.Generator) -> AggregationOutcome:
    """Single-hop aggregation round (each device is its own lead)."""
    G = np.atleast_2d(gradients)
    symbols = normalize(G, stats)
    if np.any(alloc.beta > budgets.lead_pmax * (1 + POWER_SLACK)):
        raise ValueError("transmit power constraint violated")
    gains = chan.lead_mags * np.sqrt(alloc.beta)
    ps_noise = rng.standard_normal(G.shape[1]) * np.sqrt(chan.noise_power_ps)
    ps_signal = gains @ symbols[chan.lead_ids] + ps_noise
    estimate = estimate_global(ps_signal, stats, alloc.zeta, G.shape[0])
    ideal = G.mean(axis=0)
    closed = direct_closed_form_error(G, stats, chan, alloc, ps_noise)
    error = _checked_error(estimate, ideal, closed)
    return AggregationOutcome(estimated_gradient=estimate, ideal_gradient=ideal,
                              error=error, lead_noise=np.zeros((0, G.shape[1])),
                              ps_noise=ps_noise)


def analytic_error_moments(gradients: np.ndarray, stats: GradientStats,
                           chan: ChannelRealization, alloc: PowerAllocation,
                           direct: bool = False) -> tuple[float, float]:
    """Exact squared bias and mean squared error of the aggregation error,
    expectations over the channel noise with everything else held fixed."""
    G = np.atleast_2d(gradients)
    k, m = G.shape
    centered = G - stats.mean
    if direct:
        products = alloc.zeta * chan.lead_mags * np.sqrt(alloc.beta)
        bias_vec = (products - 1.0) @ centered[chan.lead_ids] / k
        noise_power = chan.noise_power_ps
    else:
        products = alignment_products(alloc, chan)
        bias_vec = ((products - 1.0) @ centered[chan.sub_ids]
                    - centered[chan.lead_ids].sum(axis=0)) / k
        forwarded = chan.lead_mags ** 2 * alloc.beta * chan.noise_power_lead
        noise_power = forwarded.sum() + chan.noise_power_ps
    bias_sq = float(bias_vec @ bias_vec)
    mse = bias_sq + m * (alloc.zeta * stats.std / k) ** 2 * noise_power
    return bias_sq, mse
