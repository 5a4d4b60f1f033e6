"""Offline meta-initialization from episodic blocks.

The offline stage collects ``D`` blocks, each split into a train segment
(consumed by one inner gradient step) and a test segment (scoring the
adapted parameter). The resulting objective is quadratic; both its
closed-form minimizer and an iterative gradient-descent solver are provided
and cross-check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalError
from .linalg import pinv
from .model import (
    BlockTrajectory,
    NoiseConfig,
    RngStream,
    SystemParams,
    TaskSampler,
    sample_task,
)

Segment = tuple[np.ndarray, np.ndarray]


def _as_segment(segment) -> Segment:
    z, x_next = segment
    z = np.asarray(z, dtype=np.float64)
    x_next = np.asarray(x_next, dtype=np.float64)
    if z.ndim != 2 or x_next.ndim != 2 or z.shape[1] != x_next.shape[1]:
        raise ValueError(
            f"segment needs matching covariate/next-state columns, got {z.shape} and {x_next.shape}"
        )
    return z, x_next


def train_segment(block: BlockTrajectory) -> Segment:
    """The block's training columns ``(z_tr, x_tr)``."""
    return block.z_tr, block.x_tr


def test_segment(block: BlockTrajectory) -> Segment:
    """The block's held-out columns ``(z_te, x_te)``."""
    return block.z_te, block.x_te


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class MetaDataset:
    """``D`` blocks with their generating tasks.

    ``alpha`` optionally records the inner-adaptation rate this dataset is
    meant to be assembled with; the solvers always take the rate explicitly.
    """

    blocks: tuple[BlockTrajectory, ...]
    params: tuple[SystemParams, ...]
    alpha: float | None = None

    def __post_init__(self):
        blocks = tuple(self.blocks)
        params = tuple(self.params)
        if not blocks:
            raise ValueError("dataset must contain at least one block")
        if len(blocks) != len(params):
            raise ValueError("one task per block required")
        first = blocks[0]
        for blk, par in zip(blocks, params):
            if (blk.n, blk.m) != (par.n, par.m):
                raise ValueError("block and task dimensions disagree")
            if (blk.length, blk.train_len) != (first.length, first.train_len):
                raise ValueError("all blocks must share length and split")
        if not 1 <= first.train_len < first.length:
            raise ValueError(
                f"need 1 <= train_len < length, got train_len={first.train_len}, "
                f"length={first.length}"
            )
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "params", params)

    @property
    def d_blocks(self) -> int:
        return len(self.blocks)

    @property
    def length(self) -> int:
        return self.blocks[0].length

    @property
    def train_len(self) -> int:
        return self.blocks[0].train_len

    @property
    def n(self) -> int:
        return self.blocks[0].n

    @property
    def m(self) -> int:
        return self.blocks[0].m

    def stacked(self, attr: str) -> np.ndarray:
        """Per-block arrays stacked along a leading block axis."""
        return np.stack([getattr(blk, attr) for blk in self.blocks])


def generate_offline_dataset(
    d_blocks: int,
    length: int,
    train_len: int,
    sampler: TaskSampler,
    noise: NoiseConfig,
    rng: RngStream,
) -> MetaDataset:
    """Sample ``d_blocks`` tasks and simulate one zero-initialized block each.

    Block ``d`` uses the child streams ``("task", d)`` and ``("block", d)``,
    so any prefix of the dataset is independent of ``d_blocks``.
    """
    if d_blocks < 1:
        raise ValueError(f"need at least one block, got {d_blocks}")
    if not 1 <= train_len < length:
        raise ValueError(f"need 1 <= train_len < length, got {train_len}, {length}")
    tasks = [sample_task(sampler, d, rng.child("task", d)) for d in range(d_blocks)]
    n, m = tasks[0].n, tasks[0].m
    inputs = np.empty((d_blocks, length, m))
    noises = np.empty((d_blocks, length, n))
    sig_a = math.sqrt(noise.sigma_a2)
    sig_w = math.sqrt(noise.sigma_w2)
    for d in range(d_blocks):
        gen = rng.child("block", d).generator
        inputs[d] = sig_a * gen.standard_normal((length, m))
        noises[d] = sig_w * gen.standard_normal((length, n))
    a_stack = np.ascontiguousarray(np.stack([t.a for t in tasks]))
    b_stack = np.ascontiguousarray(np.stack([t.b for t in tasks]))
    states = kernels.simulate_blocks(
        a_stack, b_stack, inputs, noises, np.zeros((d_blocks, n))
    )
    blocks = tuple(
        BlockTrajectory(states=states[d], inputs=inputs[d], noises=noises[d], train_len=train_len)
        for d in range(d_blocks)
    )
    return MetaDataset(blocks=blocks, params=tuple(tasks))


# ---------------------------------------------------------------------------
# Loss and inner adaptation


def loss(segment, phi) -> float:
    """Half the squared prediction error of ``phi`` on a segment:
    ``0.5 * sum_k ||x_{k+1} - phi^T z_k||^2``."""
    z, x_next = _as_segment(segment)
    phi = np.asarray(phi, dtype=np.float64)
    residual = x_next - phi.T @ z
    return 0.5 * float(np.sum(residual * residual))


def _sgd_gradient(phi: np.ndarray, z: np.ndarray, x_next: np.ndarray) -> np.ndarray:
    """Gradient of :func:`loss` at ``phi``: ``z z^T phi - z x_next^T``.

    Single code path shared by the offline inner step and the online
    update so the two are bit-identical on identical samples.
    """
    z = np.ascontiguousarray(z)
    x_next = np.ascontiguousarray(x_next)
    return z @ (z.T @ phi) - z @ x_next.T


def inner_adapt(phi_theta, train, alpha: float) -> np.ndarray:
    """One gradient step on the training segment from ``phi_theta``."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    z, x_next = _as_segment(train)
    phi_theta = np.asarray(phi_theta, dtype=np.float64)
    return phi_theta - alpha * _sgd_gradient(phi_theta, z, x_next)


# ---------------------------------------------------------------------------
# Design matrices


@dataclass(frozen=True)
class DesignMatrices:
    """Stacked design quantities for the quadratic meta objective.

    ``z`` has one column block per episodic block (ascending block order);
    ``w_tilde = pi + w`` holds by construction up to rounding.
    """

    z: np.ndarray
    w_tilde: np.ndarray
    pi: np.ndarray
    w: np.ndarray


def assemble_design(dataset: MetaDataset, alpha: float) -> DesignMatrices:
    """Assemble the design matrices for a dataset at inner rate ``alpha``.

    Per block: ``Z_d = (I - alpha z_tr z_tr^T) z_te`` and
    ``W~_d = x_te^T - alpha z_te^T z_tr x_tr^T`` (same shape for the noise
    part ``W_d`` and the signal part ``Pi_d = Z_d^T phi_d``).
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    p = dataset.n + dataset.m
    z_tr = dataset.stacked("z_tr")  # (D, p, M)
    z_te = dataset.stacked("z_te")  # (D, p, T)
    x_tr = dataset.stacked("x_tr")
    x_te = dataset.stacked("x_te")
    w_tr = dataset.stacked("w_tr")
    w_te = dataset.stacked("w_te")
    phi = np.stack([par.phi for par in dataset.params])  # (D, p, n)

    eye = np.eye(p)
    shrink = eye[None, :, :] - alpha * np.einsum("dim,djm->dij", z_tr, z_tr)
    z_blocks = np.einsum("dij,djt->dit", shrink, z_te)  # (D, p, T)
    cross = np.einsum("dit,dim->dtm", z_te, z_tr)  # (D, T, M)

    w_mat = w_te.transpose(0, 2, 1) - alpha * np.einsum("dtm,dnm->dtn", cross, w_tr)
    w_tilde = x_te.transpose(0, 2, 1) - alpha * np.einsum("dtm,dnm->dtn", cross, x_tr)
    pi = np.einsum("dit,din->dtn", z_blocks, phi)

    d, _, t_cols = z_blocks.shape
    n = dataset.n
    design = DesignMatrices(
        z=z_blocks.transpose(1, 0, 2).reshape(p, d * t_cols),
        w_tilde=w_tilde.reshape(d * t_cols, n),
        pi=pi.reshape(d * t_cols, n),
        w=w_mat.reshape(d * t_cols, n),
    )
    gap = float(np.linalg.norm(design.w_tilde - design.pi - design.w))
    if gap > 1e-10 * (1.0 + float(np.linalg.norm(design.w_tilde))):
        raise NumericalError(
            f"design-matrix identity violated: ||w_tilde - pi - w|| = {gap:.3e}"
        )
    return design


# ---------------------------------------------------------------------------
# Solvers


def meta_solve_closed_form(
    dataset: MetaDataset, alpha: float, rcond: float | None = None
) -> np.ndarray:
    """Minimum-norm minimizer of the meta objective: ``pinv(Z^T) @ w_tilde``.

    Equals the normal-equation solution ``(Z Z^T)^{-1} Z w_tilde`` whenever
    the curvature ``Z Z^T`` is nonsingular; for rank-deficient designs the
    pseudo-inverse picks the minimum-norm representative.
    """
    design = assemble_design(dataset, alpha)
    return pinv(design.z.T, rcond) @ design.w_tilde


def meta_objective(dataset: MetaDataset, alpha: float, phi_theta) -> float:
    """Sum over blocks of the test loss after inner adaptation."""
    phi_theta = np.asarray(phi_theta, dtype=np.float64)
    total = 0.0
    for block in dataset.blocks:
        adapted = inner_adapt(phi_theta, train_segment(block), alpha)
        total += loss(test_segment(block), adapted)
    return total


def meta_gradient(dataset: MetaDataset, alpha: float, phi_theta) -> np.ndarray:
    """Gradient of :func:`meta_objective` in ``phi_theta``.

    Per block the chain rule through the inner step gives
    ``E (z_te z_te^T E phi + alpha z_te z_te^T z_tr x_tr^T - z_te x_te^T)``
    with ``E = I - alpha z_tr z_tr^T``; summed over blocks this equals
    ``Z Z^T phi - Z w_tilde`` in assembled form.
    """
    phi_theta = np.asarray(phi_theta, dtype=np.float64)
    grad = np.zeros_like(phi_theta)
    for block in dataset.blocks:
        z_tr, x_tr = train_segment(block)
        z_te, x_te = test_segment(block)
        shrink = np.eye(z_tr.shape[0]) - alpha * z_tr @ z_tr.T
        inner = (
            z_te @ (z_te.T @ (shrink @ phi_theta))
            + alpha * z_te @ (z_te.T @ (z_tr @ x_tr.T))
            - z_te @ x_te.T
        )
        grad += shrink @ inner
    return grad


@dataclass(frozen=True)
class GdResult:
    """Last iterate of the gradient-descent solver with its diagnostics."""

    phi: np.ndarray
    grad_norm: float
    objective: float
    steps_run: int


def _power_lambda_max(h: np.ndarray, iters: int = 200) -> float:
    v = np.ones(h.shape[0]) / math.sqrt(h.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = h @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = norm
    return lam


def meta_solve_gd(
    dataset: MetaDataset, alpha: float, steps: int, lr: float | None = None
) -> GdResult:
    """Gradient descent on the meta objective from the zero matrix.

    The default step size is ``0.5 / lambda_max(Z Z^T)`` (power-iteration
    estimate), which guarantees descent on the quadratic. Raises a
    divergence error if the objective ever exceeds ten times its initial
    value - that only happens with an oversized ``lr``.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    design = assemble_design(dataset, alpha)
    curvature = design.z @ design.z.T
    linear = design.z @ design.w_tilde

    def objective(phi: np.ndarray) -> float:
        residual = design.w_tilde - design.z.T @ phi
        return 0.5 * float(np.sum(residual * residual))

    if lr is None:
        lam = _power_lambda_max(curvature)
        lr = 0.5 / lam if lam > 0 else 1.0
    elif lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")

    p, n = design.z.shape[0], dataset.n
    phi = np.zeros((p, n))
    f_init = objective(phi)
    steps_run = 0
    grad = curvature @ phi - linear
    for _ in range(steps):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= 1e-13 * (1.0 + float(np.linalg.norm(phi))):
            break
        phi = phi - lr * grad
        steps_run += 1
        value = objective(phi)
        if value > 10.0 * f_init + 1e-12:
            raise NumericalError(
                f"gradient descent diverged (objective {value:.3e} vs initial "
                f"{f_init:.3e}); try a smaller lr"
            )
        grad = curvature @ phi - linear
    return GdResult(
        phi=phi,
        grad_norm=float(np.linalg.norm(grad)),
        objective=objective(phi),
        steps_run=steps_run,
    )
