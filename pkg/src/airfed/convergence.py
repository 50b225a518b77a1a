"""Optimality-gap bound evaluation and smoothness sanity checks.

The bound couples the geometric contraction factor eta = 2L^2 g^2 - L g + 1
(g the learning rate, L the smoothness constant; 0 < eta < 1 whenever
g < 1/(2L)) with three accumulated terms: the decayed initial gap, the
mini-batch gradient-variance floor, and the per-round aggregation error
contributions weighted by g/2 (squared bias) and L g^2 (mean squared error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def contraction_factor(lipschitz: float, lr: float) -> float:
    if lr >= 1.0 / (2.0 * lipschitz):
        raise ValueError("learning rate violates the bound premise (lr < 1/(2L))")
    return 2.0 * lipschitz ** 2 * lr ** 2 - lipschitz * lr + 1.0


@dataclass(frozen=True)
class GapBoundInputs:
    lipschitz: float
    lr: float
    batch_size: int
    delta_sq: float                 # gradient-variance bound ||delta||^2
    initial_gap: float              # F(w_1) - F*
    bias_sq: np.ndarray             # per-round ||E[error]||^2
    mse: np.ndarray                 # per-round E||error||^2

    @property
    def eta(self) -> float:
        return contraction_factor(self.lipschitz, self.lr)


def gap_bound(inputs: GapBoundInputs, rounds: int) -> float:
    """Bound on E[F(w_{T+1})] - F* after ``rounds`` rounds."""
    return gap_bound_series(inputs, rounds)[-1]


def gap_bound_series(inputs: GapBoundInputs, rounds: int) -> np.ndarray:
    """Bound for every prefix 0..rounds (index t = bound after t rounds)."""
    if rounds > inputs.bias_sq.shape[0]:
        raise ValueError("not enough per-round error terms")
    eta = inputs.eta
    variance_term = inputs.lipschitz * inputs.lr ** 2 * inputs.delta_sq / inputs.batch_size
    error_terms = (inputs.lr / 2.0) * inputs.bias_sq[:rounds] \
        + inputs.lipschitz * inputs.lr ** 2 * inputs.mse[:rounds]
    out = np.empty(rounds + 1)
    out[0] = inputs.initial_gap
    acc = inputs.initial_gap
    for t in range(rounds):
        acc = eta * acc + variance_term + error_terms[t]
        out[t + 1] = acc
    return out


def gradient_gap_check(lipschitz: float, optimal_loss: float,
                               losses: np.ndarray, grad_sq_norms: np.ndarray,
                               rel_tol: float = 1e-9) -> bool:
    """Check ||grad F(w)||^2 <= 2 L (F(w) - F*) at every visited iterate.

    Holds for any valid smoothness constant; a violation indicates L was
    underestimated.
    """
    losses = np.asarray(losses, dtype=float)
    grad_sq_norms = np.asarray(grad_sq_norms, dtype=float)
    rhs = 2.0 * lipschitz * (losses - optimal_loss)
    return bool(np.all(grad_sq_norms <= rhs * (1 + rel_tol) + 1e-15))
