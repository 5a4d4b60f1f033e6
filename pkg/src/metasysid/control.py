"""Certainty-equivalent LQR synthesis and closed-loop cost evaluation.

The gain is synthesized from an (estimated) model by solving the discrete
Riccati equation as if the estimate were exact; the realized cost is then
measured by simulating the true system in closed loop, so model mismatch
shows up as excess cost rather than being hidden in a formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InstabilityError
from .linalg import min_eig_sym, solve_dare, spectral_radius
from .model import RngStream, SystemParams

__all__ = ["LqrWeights", "cec_gain", "is_stabilizing", "lqr_cost_empirical"]


@dataclass(frozen=True)
class LqrWeights:
    """Symmetric positive-definite stage-cost weights ``x^T S x + u^T R u``."""

    s: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64)
        for name, mat in (("s", s), ("r", r)):
            if min_eig_sym(mat) <= 0.0:
                raise ValueError(f"weight {name} must be symmetric positive definite")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "r", r)

    @staticmethod
    def identity(n: int, m: int) -> "LqrWeights":
        return LqrWeights(s=np.eye(n), r=np.eye(m))


def cec_gain(a_hat: np.ndarray, b_hat: np.ndarray, weights: LqrWeights) -> np.ndarray:
    """Certainty-equivalent LQR gain for the estimated model.

    ``K = -(R + B^T P B)^{-1} B^T P A`` with ``P`` the Riccati fixed point
    of the estimate; Riccati failures propagate.
    """
    a_hat = np.asarray(a_hat, dtype=np.float64)
    b_hat = np.asarray(b_hat, dtype=np.float64)
    p = solve_dare(a_hat, b_hat, weights.s, weights.r)
    return -np.linalg.solve(weights.r + b_hat.T @ p @ b_hat, b_hat.T @ p @ a_hat)


def is_stabilizing(a: np.ndarray, b: np.ndarray, gain: np.ndarray) -> tuple[bool, float]:
    """Whether ``u = K x`` stabilizes ``(A, B)``, with the closed-loop
    spectral radius as the margin witness."""
    closed = np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64) @ np.asarray(
        gain, dtype=np.float64
    )
    radius = spectral_radius(closed)
    return radius < 1.0, radius


def lqr_cost_empirical(
    params: SystemParams,
    gain: np.ndarray,
    weights: LqrWeights,
    horizon: int,
    sigma_w2: float,
    trials: int,
    rng: RngStream,
) -> float:
    """Monte-Carlo mean per-stage cost of ``u = K x`` on the true system.

    Averages ``(1/T) sum_{t<T} (x_t^T S x_t + u_t^T R u_t)`` over
    ``trials`` independent noise realizations from ``x_0 = 0``.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if sigma_w2 < 0:
        raise ValueError(f"sigma_w2 must be >= 0, got {sigma_w2}")
    gain = np.asarray(gain, dtype=np.float64)
    stable, radius = is_stabilizing(params.a, params.b, gain)
    if not stable:
        raise InstabilityError(
            f"closed loop is unstable (spectral radius {radius:.6g}); "
            "cost simulation would diverge"
        )
    n = params.n
    noises = math.sqrt(sigma_w2) * rng.generator.standard_normal((trials, horizon, n))
    a_stack = np.ascontiguousarray(np.broadcast_to(params.a, (trials, n, n)))
    b_stack = np.ascontiguousarray(np.broadcast_to(params.b, (trials, n, params.m)))
    states, inputs = kernels.closed_loop_blocks(
        a_stack, b_stack, gain, noises, np.zeros((trials, n))
    )
    x = states[:, :horizon, :]
    state_cost = np.einsum("bti,ij,btj->bt", x, weights.s, x)
    input_cost = np.einsum("bti,ij,btj->bt", inputs, weights.r, inputs)
    return float(np.mean(state_cost + input_cost))
