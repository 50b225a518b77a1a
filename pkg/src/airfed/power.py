"""Per-round transmit power and de-noising control.

The round objective trades two error sources against each other: a weighted
sum of squared deviations of every subordinate's end-to-end gain from 1
(misalignment) and the noise carried through the lead forwarding and receiver
stages. It is minimized by cycling three exact block updates: subordinate
powers (waterfilling-style clamped inversion with one dual variable per
cluster found by bisection), lead powers (clamped first-order optimum), and
the de-noising factor (scalar quadratic optimum). Each block solve is exact,
so the objective trace is non-increasing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .aircomp import PowerAllocation, PowerBudgets, alignment_products, lead_transmit_power
from .channel import ChannelRealization

BISECT_MAX_ITER = 200
BISECT_REL_TOL = 1e-9


@dataclass(frozen=True)
class ObjectiveCoefficients:
    """Weights of the round objective plus the per-round scalars they encode.

    ``c1`` multiplies the misalignment sum, ``c2`` the noise sum; both carry
    a 1/K^2 factor. ``sum_centered_sq`` is the total squared norm of the
    centered device gradients, ``nu_sq`` the population gradient variance.
    """

    c1: float
    c2: float
    sum_centered_sq: float
    nu_sq: float
    m_dim: int
    n_devices: int


def learning_coefficients(sum_centered_sq: float, nu_sq: float, m_dim: int,
                          n_devices: int, lr: float, lipschitz: float) -> ObjectiveCoefficients:
    """Weights from the optimality-gap bound: bias term gets lr/2, noise term
    gets lipschitz * lr^2; the shared geometric factor drops out of the argmin."""
    bias_w = lr / 2.0
    mse_w = lipschitz * lr ** 2
    k2 = n_devices ** 2
    return ObjectiveCoefficients(
        c1=(bias_w + mse_w) * sum_centered_sq / k2,
        c2=m_dim * mse_w / k2,
        sum_centered_sq=sum_centered_sq,
        nu_sq=nu_sq, m_dim=m_dim, n_devices=n_devices,
    )


def symbol_mse_coefficients(sum_centered_sq: float, nu_sq: float, m_dim: int,
                            n_devices: int) -> ObjectiveCoefficients:
    """Weights for plain symbol-MSE minimization (learning weights stripped)."""
    k2 = n_devices ** 2
    return ObjectiveCoefficients(
        c1=sum_centered_sq / k2, c2=m_dim / k2,
        sum_centered_sq=sum_centered_sq,
        nu_sq=nu_sq, m_dim=m_dim, n_devices=n_devices,
    )


@dataclass
class SolverTrace:
    objective_per_iter: list[float]
    iterations: int
    converged: bool

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "f"])
            for i, f in enumerate(self.objective_per_iter):
                writer.writerow([i, repr(float(f))])


def _noise_power_sum(alloc: PowerAllocation, chan: ChannelRealization) -> float:
    forwarded = chan.lead_mags ** 2 * alloc.beta * chan.noise_power_lead
    return float(forwarded.sum() + chan.noise_power_ps)


def objective_f(alloc: PowerAllocation, chan: ChannelRealization,
                coeffs: ObjectiveCoefficients) -> float:
    """c1 * sum (end-to-end gain - 1)^2 + c2 * zeta^2 nu^2 * (noise power sum)."""
    products = alignment_products(alloc, chan)
    misalign = float(((products - 1.0) ** 2).sum())
    noise = alloc.zeta ** 2 * coeffs.nu_sq * _noise_power_sum(alloc, chan)
    return coeffs.c1 * misalign + coeffs.c2 * noise


def bias_bound(alloc: PowerAllocation, chan: ChannelRealization,
               coeffs: ObjectiveCoefficients) -> float:
    """Upper bound on the squared bias of the aggregation error (Cauchy)."""
    products = alignment_products(alloc, chan)
    k2 = coeffs.n_devices ** 2
    misalign = float(((products - 1.0) ** 2).sum())
    return (coeffs.sum_centered_sq / k2) * misalign \
        + chan.n_clusters * coeffs.sum_centered_sq / k2


def mse_bound(alloc: PowerAllocation, chan: ChannelRealization,
              coeffs: ObjectiveCoefficients) -> float:
    """Upper bound on the expected squared error: bias bound plus exact noise."""
    k2 = coeffs.n_devices ** 2
    noise = coeffs.m_dim * (alloc.zeta ** 2) * coeffs.nu_sq \
        * _noise_power_sum(alloc, chan) / k2
    return bias_bound(alloc, chan, coeffs) + noise


def solve_alpha(beta: np.ndarray, zeta: float, chan: ChannelRealization,
                budgets: PowerBudgets, coeffs: ObjectiveCoefficients,
                return_duals: bool = False):
    """Exact subordinate-power block solve.

    Unconstrained optimum is clamped channel inversion; when a cluster's
    forwarding budget binds, its dual variable is raised by bisection until
    the received-power constraint is tight.
    """
    hs = chan.sub_mags
    hl = chan.lead_mags[chan.sub_cluster]
    b_sub = beta[chan.sub_cluster]
    c1 = coeffs.c1
    num = c1 * zeta * hl * np.sqrt(b_sub) * hs
    den0 = c1 * zeta ** 2 * hl ** 2 * b_sub * hs ** 2
    cap = np.sqrt(budgets.sub_pmax)
    hs2 = hs ** 2
    n = chan.n_clusters

    def amplitude(mu: np.ndarray) -> np.ndarray:
        den = den0 + mu[chan.sub_cluster] * hs2
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return np.minimum(out, cap)

    def received(mu: np.ndarray) -> np.ndarray:
        return np.bincount(chan.sub_cluster, weights=hs2 * amplitude(mu) ** 2,
                           minlength=n)

    pbar = np.where(beta > 0, budgets.lead_pmax / np.where(beta > 0, beta, 1.0), np.inf)
    target = pbar - chan.noise_power_lead
    if np.any(target < -BISECT_REL_TOL * np.where(np.isfinite(pbar), pbar, 1.0)):
        raise ValueError("infeasible lead budget")
    target = np.maximum(target, 0.0)

    mu = np.zeros(n)
    load = received(mu)
    tol = BISECT_REL_TOL * np.where(np.isfinite(pbar), pbar, 1.0)
    binding = np.isfinite(target) & (load > target + tol)
    if np.any(binding):
        hi = np.ones(n)
        for _ in range(BISECT_MAX_ITER):
            probe = np.where(binding, hi, 0.0)
            still = binding & (received(probe) > target)
            if not np.any(still):
                break
            hi[still] *= 2.0
        lo = np.zeros(n)
        active = binding.copy()
        for _ in range(BISECT_MAX_ITER):
            if not np.any(active):
                break
            mid = 0.5 * (lo + hi)
            probe = np.where(binding, np.where(active, mid, hi), 0.0)
            load = received(probe)
            over = load > target
            lo = np.where(active & over, mid, lo)
            hi = np.where(active & ~over, mid, hi)
            active = active & (np.abs(load - target) > tol)
        mu = np.where(binding, hi, 0.0)

    alpha = amplitude(mu) ** 2
    if return_duals:
        return alpha, mu
    return alpha


def solve_beta(alpha: np.ndarray, zeta: float, chan: ChannelRealization,
               budgets: PowerBudgets, coeffs: ObjectiveCoefficients) -> np.ndarray:
    """Exact lead-power block solve: clamped first-order optimum per cluster."""
    s1 = np.bincount(chan.sub_cluster, weights=chan.sub_mags * np.sqrt(alpha),
                     minlength=chan.n_clusters)
    s2 = np.bincount(chan.sub_cluster, weights=chan.sub_mags ** 2 * alpha,
                     minlength=chan.n_clusters)
    hl = chan.lead_mags
    num = coeffs.c1 * zeta * hl * s1
    den = coeffs.c1 * zeta ** 2 * hl ** 2 * s2 \
        + coeffs.c2 * zeta ** 2 * coeffs.nu_sq * hl ** 2 * chan.noise_power_lead
    root = np.zeros_like(num)
    np.divide(num, den, out=root, where=den > 0)
    received = s2 + chan.noise_power_lead
    cap = np.full(chan.n_clusters, np.inf)
    np.divide(budgets.lead_pmax, received, out=cap, where=received > 0)
    return np.minimum(root ** 2, cap)


def solve_zeta(alpha: np.ndarray, beta: np.ndarray, chan: ChannelRealization,
               coeffs: ObjectiveCoefficients) -> float | None:
    """Exact de-noising block solve; None when everything is silent (caller
    keeps the previous value)."""
    lead_amp = chan.lead_mags * np.sqrt(beta)
    per_sub = lead_amp[chan.sub_cluster] * chan.sub_mags * np.sqrt(alpha)
    num = coeffs.c1 * per_sub.sum()
    den = coeffs.c1 * (per_sub ** 2).sum() \
        + coeffs.c2 * coeffs.nu_sq * float((lead_amp ** 2 * chan.noise_power_lead).sum()) \
        + coeffs.c2 * coeffs.nu_sq * chan.noise_power_ps
    if den <= 0:
        return None
    return float(num / den)


def initial_allocation(chan: ChannelRealization, budgets: PowerBudgets,
                       coeffs: ObjectiveCoefficients) -> PowerAllocation:
    alpha = budgets.sub_pmax / 2.0
    received = np.bincount(chan.sub_cluster, weights=chan.sub_mags ** 2 * alpha,
                           minlength=chan.n_clusters) + chan.noise_power_lead
    cap = np.full(chan.n_clusters, np.inf)
    np.divide(budgets.lead_pmax, received, out=cap, where=received > 0)
    beta = np.where(np.isfinite(cap), cap / 2.0, 0.0)
    zeta = solve_zeta(alpha, beta, chan, coeffs)
    return PowerAllocation(alpha=alpha, beta=beta, zeta=zeta if zeta else 1.0)


def _assert_feasible(alloc: PowerAllocation, chan: ChannelRealization,
                     budgets: PowerBudgets):
    slack = 1 + 1e-9
    if np.any(alloc.alpha > budgets.sub_pmax * slack):
        raise AssertionError("subordinate budget violated inside solver")
    if np.any(lead_transmit_power(alloc, chan) > budgets.lead_pmax * slack):
        raise AssertionError("lead budget violated inside solver")


def alternating_minimize(chan: ChannelRealization, budgets: PowerBudgets,
                         coeffs: ObjectiveCoefficients, max_iter: int = 100,
                         tol: float = 1e-6,
                         init: PowerAllocation | None = None
                         ) -> tuple[PowerAllocation, SolverTrace]:
    """Cycle the three exact block solves until the relative objective
    improvement drops below ``tol`` or ``max_iter`` cycles are done."""
    if max_iter < 1 or tol <= 0:
        raise ValueError("need max_iter >= 1 and tol > 0")
    alloc = init if init is not None else initial_allocation(chan, budgets, coeffs)
    trace = [objective_f(alloc, chan, coeffs)]
    converged = False
    iterations = 0
    zeta = alloc.zeta
    beta = alloc.beta
    for _ in range(max_iter):
        alpha = solve_alpha(beta, zeta, chan, budgets, coeffs)
        beta = solve_beta(alpha, zeta, chan, budgets, coeffs)
        new_zeta = solve_zeta(alpha, beta, chan, coeffs)
        if new_zeta is not None and new_zeta > 0:
            zeta = new_zeta
        alloc = PowerAllocation(alpha=alpha, beta=beta, zeta=zeta)
        _assert_feasible(alloc, chan, budgets)
        trace.append(objective_f(alloc, chan, coeffs))
        iterations += 1
        prev, cur = trace[-2], trace[-1]
        if abs(cur - prev) <= tol * max(abs(prev), 1e-300):
            converged = True
            break
    return alloc, SolverTrace(objective_per_iter=trace, iterations=iterations,
                              converged=converged)


def max_power_allocation(chan: ChannelRealization, budgets: PowerBudgets,
                         coeffs: ObjectiveCoefficients) -> PowerAllocation:
    """Full-power baseline: budgets spent exactly, de-noising still optimized."""
    alpha = budgets.sub_pmax.copy()
    received = np.bincount(chan.sub_cluster, weights=chan.sub_mags ** 2 * alpha,
                           minlength=chan.n_clusters) + chan.noise_power_lead
    beta = np.zeros(chan.n_clusters)
    np.divide(budgets.lead_pmax, received, out=beta, where=received > 0)
    zeta = solve_zeta(alpha, beta, chan, coeffs)
    return PowerAllocation(alpha=alpha, beta=beta, zeta=zeta if zeta else 1.0)


def direct_objective(alloc: PowerAllocation, chan: ChannelRealization,
                     coeffs: ObjectiveCoefficients) -> float:
    """Single-hop analogue: misalignment of each device's own gain plus
    receiver noise (nothing is forwarded, nothing omitted)."""
    products = alloc.zeta * chan.lead_mags * np.sqrt(alloc.beta)
    noise = alloc.zeta ** 2 * coeffs.nu_sq * chan.noise_power_ps
    return coeffs.c1 * float(((products - 1.0) ** 2).sum()) + coeffs.c2 * noise


def solve_direct(chan: ChannelRealization, budgets: PowerBudgets,
                 coeffs: ObjectiveCoefficients, max_iter: int = 100,
                 tol: float = 1e-6) -> tuple[PowerAllocation, SolverTrace]:
    """Direct-transmission solver: alternate clamped inversion of each
    device's own power with the scalar de-noising optimum."""
    hl = chan.lead_mags
    beta = budgets.lead_pmax / 2.0
    c1, c2 = coeffs.c1, coeffs.c2

    def zeta_step(beta):
        amp = hl * np.sqrt(beta)
        den = c1 * float((amp ** 2).sum()) + c2 * coeffs.nu_sq * chan.noise_power_ps
        if den <= 0:
            return None
        return c1 * float(amp.sum()) / den

    zeta = zeta_step(beta) or 1.0
    alloc = PowerAllocation(alpha=np.empty(0), beta=beta, zeta=zeta)
    trace = [direct_objective(alloc, chan, coeffs)]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        root = np.zeros_like(hl)
        np.divide(1.0, zeta * hl, out=root, where=zeta * hl > 0)
        beta = np.minimum(root ** 2, budgets.lead_pmax)
        new_zeta = zeta_step(beta)
        if new_zeta is not None and new_zeta > 0:
            zeta = new_zeta
        alloc = PowerAllocation(alpha=np.empty(0), beta=beta, zeta=zeta)
        trace.append(direct_objective(alloc, chan, coeffs))
        iterations += 1
        prev, cur = trace[-2], trace[-1]
        if abs(cur - prev) <= tol * max(abs(prev), 1e-300):
            converged = True
            break
    return alloc, SolverTrace(objective_per_iter=trace, iterations=iterations,
                              converged=converged)


def kkt_report(alloc: PowerAllocation, mu: np.ndarray, chan: ChannelRealization,
               budgets: PowerBudgets, coeffs: ObjectiveCoefficients) -> dict:
    """Residuals of the subordinate-power optimality system, for verification.

    stationarity: gradient of the per-subordinate Lagrangian at unclamped
    entries (clamped entries absorb it into their own non-negative
    multiplier); comp_slack: dual variable times forwarding-constraint slack.
    """
    hs = chan.sub_mags
    hl = chan.lead_mags[chan.sub_cluster]
    b_sub = alloc.beta[chan.sub_cluster]
    root = np.sqrt(alloc.alpha)
    mu_sub = mu[chan.sub_cluster]
    c1, zeta = coeffs.c1, alloc.zeta
    grad = 2.0 * (c1 * zeta ** 2 * hl ** 2 * b_sub * hs ** 2 + mu_sub * hs ** 2) * root \
        - 2.0 * c1 * zeta * hl * np.sqrt(b_sub) * hs
    cap = np.sqrt(budgets.sub_pmax)
    unclamped = root < cap * (1 - 1e-9)
    scale = np.maximum(np.abs(2.0 * c1 * zeta * hl * np.sqrt(b_sub) * hs), 1.0)
    stationarity = float(np.max(np.abs(grad[unclamped]) / scale[unclamped],
                                initial=0.0))
    box_mult_ok = bool(np.all(grad[~unclamped] <= 1e-9 * scale[~unclamped]))

    received = np.bincount(chan.sub_cluster, weights=hs ** 2 * alloc.alpha,
                           minlength=chan.n_clusters) + chan.noise_power_lead
    pbar = np.where(alloc.beta > 0,
                    budgets.lead_pmax / np.where(alloc.beta > 0, alloc.beta, 1.0),
                    np.inf)
    slack = pbar - received
    finite = np.isfinite(pbar)
    norm = np.where(finite, np.maximum(pbar, 1.0), 1.0)
    comp_slack = float(np.max(np.abs(mu * np.where(finite, slack, 0.0)) / norm,
                              initial=0.0))
    return {
        "stationarity": stationarity,
        "dual_feasible": bool(np.all(mu >= 0)),
        "comp_slack": comp_slack,
        "box_multipliers_ok": box_mult_ok,
        "primal_feasible": bool(np.all(np.where(finite, received <= pbar * (1 + 1e-9),
                                                True))),
    }
