"""Online adaptation of system estimates within a single block.

Two estimators operate on a block trajectory: a projected stochastic
gradient recursion (`lsa_adapt`) that updates the parameter after every
observed transition, and batch least squares (`lse_fit`) over a segment.
Both produce estimates in the stacked ``(n+m) x n`` parameterization used
throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError
from .linalg import pinv, solve_dlyap, spectral_norm
from .meta import Segment, _as_segment, _sgd_gradient, inner_adapt
from .model import BlockTrajectory, NoiseConfig, gamma

__all__ = [
    "AdaptConfig",
    "AdaptTrace",
    "project_z",
    "project_phi",
    "one_shot_adapt",
    "lsa_adapt",
    "lse_fit",
    "estimation_gap",
    "default_c_z",
    "default_c_phi",
]


@dataclass(frozen=True)
class AdaptConfig:
    """Step size, horizon, and projection radii for online adaptation.

    ``math.inf`` for either radius disables the corresponding projection.
    """

    alpha: float
    steps: int
    c_phi: float = math.inf
    c_z: float = math.inf

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not self.c_phi > 0:
            raise ValueError(f"c_phi must be positive, got {self.c_phi}")
        if not self.c_z > 0:
            raise ValueError(f"c_z must be positive, got {self.c_z}")


@dataclass(frozen=True)
class AdaptTrace:
    """All iterates of an online run plus projection diagnostics.

    ``iterates`` has ``steps + 1`` slices; slice ``0`` is the initial
    parameter, slice ``t`` the estimate after ``t`` transitions.
    """

    iterates: np.ndarray
    grad_norms: np.ndarray
    z_clips: int
    phi_clips: int

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def _rescale_into_ball(norm: float, radius: float, arr: np.ndarray) -> np.ndarray:
    """Scale ``arr`` onto the radius-``radius`` sphere, nudging down until the
    recomputed norm is within the ball (guards the one-ulp overshoot that a
    single multiplication can produce). ``norm`` must come from the same
    ``np.linalg.norm`` computation the guard re-runs, or the inside-ball
    check of the caller and this guard can disagree on boundary bits."""
    out = arr * (radius / norm)
    for _ in range(4):
        if float(np.linalg.norm(out)) <= radius:
            break
        out = out * (1.0 - 1e-16)
    return out


def project_z(z: np.ndarray, c_z: float) -> np.ndarray:
    """Euclidean projection of a covariate vector onto the ball of radius
    ``c_z``. Returns the input object unchanged when already inside."""
    if not c_z > 0:
        raise ValueError(f"c_z must be positive, got {c_z}")
    if math.isinf(c_z):
        return z
    norm = float(np.linalg.norm(z))
    if norm <= c_z:
        return z
    return _rescale_into_ball(norm, c_z, z)


def project_phi(phi: np.ndarray, c_phi: float, mode: str = "frobenius") -> np.ndarray:
    """Project a parameter matrix onto the radius-``c_phi`` ball.

    ``mode="frobenius"`` rescales the whole matrix (projection in the
    Frobenius norm); ``mode="spectral"`` clips singular values at ``c_phi``
    instead, which is the metric projection in the spectral norm only on
    the dominant singular direction but never increases any of them.
    Either way the input object is returned unchanged when already inside
    the ball, so idempotence is exact.
    """
    if not c_phi > 0:
        raise ValueError(f"c_phi must be positive, got {c_phi}")
    if mode not in ("frobenius", "spectral"):
        raise ValueError(f"unknown projection mode {mode!r}")
    if math.isinf(c_phi):
        return phi
    if mode == "frobenius":
        norm = float(np.linalg.norm(phi))
        if norm <= c_phi:
            return phi
        return _rescale_into_ball(norm, c_phi, phi)
    # spectral: clip singular values
    u, s, vt = np.linalg.svd(phi, full_matrices=False)
    if s.size == 0 or s[0] <= c_phi:
        return phi
    return (u * np.minimum(s, c_phi)) @ vt


def one_shot_adapt(phi_theta: np.ndarray, train: Segment, alpha: float) -> np.ndarray:
    """Single batch gradient step on a training segment (the offline inner
    step, re-exported here as the one-shot online rule)."""
    return inner_adapt(phi_theta, train, alpha)


def lsa_adapt(
    phi_init: np.ndarray,
    trajectory: BlockTrajectory,
    cfg: AdaptConfig,
    mode: str = "frobenius",
) -> AdaptTrace:
    """Projected stochastic-gradient recursion along a trajectory.

    Transition ``t`` (zero-based) uses the projected covariate
    ``z~_t`` and the observed next state ``x_{t+1}``:

    ``phi <- project_phi(phi - alpha (z~ z~^T phi - z~ x_{t+1}^T), c_phi)``

    Runs for ``cfg.steps`` transitions (capped at the trajectory length)
    and records every iterate, the per-step gradient norms, and how many
    times each projection actually clipped.
    """
    phi = np.asarray(phi_init, dtype=np.float64)
    p = trajectory.n + trajectory.m
    if phi.shape != (p, trajectory.n):
        raise ValueError(
            f"phi_init shape {phi.shape} does not match trajectory dims "
            f"({p}, {trajectory.n})"
        )
    steps = min(cfg.steps, trajectory.length)
    covs = trajectory.covariates(0, steps)
    iterates = np.empty((steps + 1, p, trajectory.n))
    grad_norms = np.empty(steps)
    iterates[0] = phi
    z_clips = 0
    phi_clips = 0
    for t in range(steps):
        z = covs[:, t : t + 1]
        z_proj = project_z(z, cfg.c_z)
        if z_proj is not z:
            z_clips += 1
        x_next = trajectory.states[t + 1 : t + 2].T
        grad = _sgd_gradient(phi, z_proj, x_next)
        grad_norms[t] = float(np.linalg.norm(grad))
        candidate = phi - cfg.alpha * grad
        phi = project_phi(candidate, cfg.c_phi, mode)
        if phi is not candidate:
            phi_clips += 1
        iterates[t + 1] = phi
    return AdaptTrace(
        iterates=iterates, grad_norms=grad_norms, z_clips=z_clips, phi_clips=phi_clips
    )


def lse_fit(segment: Segment, rcond: float | None = None) -> np.ndarray:
    """Least-squares estimate from a segment: minimum-norm solution of
    ``z^T phi = x_next^T``."""
    z, x_next = _as_segment(segment)
    return pinv(z.T, rcond) @ x_next.T


def estimation_gap(phi_hat, phi_true, norm: str = "spectral") -> float:
    """Distance between an estimate and the truth in the requested norm
    (``"spectral"`` or ``"fro"``)."""
    diff = np.asarray(phi_hat, dtype=np.float64) - np.asarray(phi_true, dtype=np.float64)
    if norm == "spectral":
        return spectral_norm(diff)
    if norm == "fro":
        return float(np.linalg.norm(diff))
    raise ValueError(f"unknown norm {norm!r}")


def default_c_z(params_list, noise: NoiseConfig, margin: float = 10.0) -> float:
    """Covariate-projection radius from the stationary covariate second
    moment: ``margin * sqrt(max_d trace(Gamma_inf(d)))``.

    ``Gamma_inf = diag(sigma_a2 * G_inf + sigma_w2 * F_inf, sigma_a2 I)``
    where the infinite-horizon Gramians solve discrete Lyapunov equations.
    Falls back to the horizon-capped second moment when a system is not
    stable enough for the stationary solve.
    """
    worst = 0.0
    for params in params_list:
        try:
            g_inf = solve_dlyap(params.a, params.b @ params.b.T)
            f_inf = solve_dlyap(params.a, np.eye(params.n))
            trace = noise.sigma_a2 * float(np.trace(g_inf)) + noise.sigma_w2 * float(
                np.trace(f_inf)
            ) + noise.sigma_a2 * params.m
        except InstabilityError:
            trace = float(np.trace(gamma(params, 64, noise)))
        worst = max(worst, trace)
    return margin * math.sqrt(worst)


def default_c_phi(params_list, margin: float = 2.0) -> float:
    """Parameter-projection radius: ``margin * max_d ||phi_d||_F``."""
    worst = max(float(np.linalg.norm(p.phi)) for p in params_list)
    if worst == 0.0:
        worst = 1.0
    return margin * worst
