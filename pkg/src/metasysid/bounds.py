"""Closed-form performance guarantees and their Monte-Carlo verifiers.

Everything here evaluates to plain numbers: energy caps on covariates,
excitation thresholds, a curvature lower bound for the assembled design,
the offline estimation-gap bound, and the online tracking-error bound for
projected stochastic-gradient adaptation under a stabilizing controller.
All evaluators are deterministic pure functions of their inputs; the
empirical small-ball probe is the only randomized routine and draws from
an explicit stream.

Set-wide extremes of the covariate second moment are approximated by
sample envelopes (see `bound_inputs_from_model`), so every number
downstream is exact arithmetic on those sampled scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .adapt import AdaptConfig
from .errors import NumericalError
from .linalg import hinf_resolvent_norm, min_eig_sym, solve_dlyap, spectral_norm, spectral_radius
from .model import (
    NoiseConfig,
    RngStream,
    SystemParams,
    _gamma_unchecked,
    gamma_envelopes,
    task_sample,
)

__all__ = [
    "BoundInputs",
    "bound_inputs_from_model",
    "covariate_energy_cap",
    "small_ball_rate",
    "excitation_threshold",
    "excitation_requirement_met",
    "curvature_lower_bound",
    "SimilarityStats",
    "similarity_stats",
    "OfflineGapBound",
    "meta_gap_bound",
    "SmallBallEstimate",
    "empirical_small_ball",
    "StationaryAnalysis",
    "stationary_analysis",
    "chi_mean",
    "TrackingBound",
    "tracking_error_bound",
    "BoundReport",
    "build_report",
    "render_report",
]


# ---------------------------------------------------------------------------
# Inputs


@dataclass(frozen=True)
class BoundInputs:
    """Scalar inputs shared by the offline-bound evaluators.

    The ``gamma_*`` fields are eigenvalue envelopes of the covariate second
    moment over the task set: ``gamma_half_k_*`` at horizon ``k // 2``
    (upper/lower), ``gamma_last_*`` at horizon ``l - 1`` (upper), and
    ``gamma_under_partial_sum`` is the sum over ``t < m_train`` of the
    lower envelope's smallest eigenvalue.
    """

    d: int
    l: int
    m_train: int
    k: int
    delta: float
    alpha: float
    sigma_a2: float
    sigma_w2: float
    m: int
    n: int
    b_norm: float
    gamma_half_k_max: float
    gamma_half_k_min: float
    gamma_last_max: float
    gamma_last_trace: float
    gamma_under_partial_sum: float
    p: float = 0.15

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"need d >= 1 blocks, got {self.d}")
        if not 1 <= self.m_train < self.l:
            raise ValueError(
                f"need 1 <= m_train < l, got m_train={self.m_train}, l={self.l}"
            )
        if not 1 <= self.k <= (self.l - self.m_train) // 2:
            raise ValueError(
                f"need 1 <= k <= (l - m_train) // 2, got k={self.k} with "
                f"l - m_train = {self.l - self.m_train}"
            )
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"need 0 < delta < 1, got {self.delta}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"need 0 < p <= 1, got {self.p}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.n < 1 or self.m < 0:
            raise ValueError(f"need n >= 1 and m >= 0, got n={self.n}, m={self.m}")
        if self.sigma_a2 < 0 or self.sigma_w2 < 0:
            raise ValueError("noise variances must be >= 0")
        if self.b_norm < 0:
            raise ValueError(f"b_norm must be >= 0, got {self.b_norm}")
        for name in (
            "gamma_half_k_max",
            "gamma_half_k_min",
            "gamma_last_max",
            "gamma_last_trace",
            "gamma_under_partial_sum",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.gamma_half_k_min > self.gamma_half_k_max:
            raise ValueError("lower envelope exceeds upper envelope at horizon k // 2")

    @property
    def p_dim(self) -> int:
        return self.n + self.m

    @property
    def test_len(self) -> int:
        return self.l - self.m_train

    @property
    def s_blocks(self) -> int:
        """Number of disjoint mini-blocks of size ``k`` in the test segment."""
        return (self.l - self.m_train) // self.k


def bound_inputs_from_model(
    source,
    noise: NoiseConfig,
    *,
    d: int,
    l: int,
    m_train: int,
    k: int,
    alpha: float,
    delta: float,
    p: float = 0.15,
    count: int = 1000,
    rng: RngStream | None = None,
) -> BoundInputs:
    """Assemble `BoundInputs` from a task sampler (or explicit task list).

    Tasks are materialized once (``count`` draws for distributional
    samplers, the full list otherwise); all envelopes come from that one
    sample, so the result is deterministic given the stream.
    """
    tasks = task_sample(source, count, rng)
    half = gamma_envelopes(tasks, k // 2, noise)
    last = gamma_envelopes(tasks, l - 1, noise)
    partial = sum(gamma_envelopes(tasks, t, noise).lam_min for t in range(m_train))
    return BoundInputs(
        d=d,
        l=l,
        m_train=m_train,
        k=k,
        delta=delta,
        alpha=alpha,
        sigma_a2=noise.sigma_a2,
        sigma_w2=noise.sigma_w2,
        m=tasks[0].m,
        n=tasks[0].n,
        b_norm=max(spectral_norm(task.b) for task in tasks),
        gamma_half_k_max=half.lam_max,
        gamma_half_k_min=half.lam_min,
        gamma_last_max=last.lam_max,
        gamma_last_trace=last.trace_max,
        gamma_under_partial_sum=float(partial),
        p=p,
    )


# ---------------------------------------------------------------------------
# Offline-bound building blocks


def covariate_energy_cap(inputs: BoundInputs) -> float:
    """High-probability cap on the training-segment covariate energy:

    ``m_train^3 b_norm^2 (1 + 3 sqrt(log(10 d m_train / delta)))^2
    max(m sigma_a2, n sigma_w2)``.
    """
    arg = 10.0 * inputs.d * inputs.m_train / inputs.delta
    if arg <= 1.0:
        raise ValueError(f"log argument 10*d*m_train/delta = {arg} must exceed 1")
    log_factor = (1.0 + 3.0 * math.sqrt(math.log(arg))) ** 2
    scale = max(inputs.m * inputs.sigma_a2, inputs.n * inputs.sigma_w2)
    return inputs.m_train**3 * inputs.b_norm**2 * log_factor * scale


def small_ball_rate(inputs: BoundInputs) -> float:
    """Effective fraction of excited mini-blocks:
    ``1 - exp(-p^2 floor((l - m_train)/k) / 8)``."""
    return 1.0 - math.exp(-(inputs.p**2) * inputs.s_blocks / 8.0)


def excitation_threshold(inputs: BoundInputs) -> float:
    """Block count needed for the curvature bound to hold at confidence
    ``delta``:

    ``(9 gmax^2 / (2 gmin^2)) [log(4/delta) + 4(m+n) log(6(m+n)/(delta p))
    + (m+n) log(trace_cap / gmin)]``

    with ``gmax``/``gmin`` the horizon-``k//2`` envelopes and ``trace_cap``
    the horizon-``l-1`` trace envelope.
    """
    gmin = inputs.gamma_half_k_min
    if gmin <= 0.0:
        raise NumericalError(
            "degenerate excitation: the lower covariate-moment envelope at "
            f"horizon {inputs.k // 2} is {gmin}; pick k >= 2 or add input noise"
        )
    dims = inputs.p_dim
    bracket = (
        math.log(4.0 / inputs.delta)
        + 4.0 * dims * math.log(6.0 * dims / (inputs.delta * inputs.p))
        + dims * math.log(inputs.gamma_last_trace / gmin)
    )
    return 9.0 * inputs.gamma_half_k_max**2 / (2.0 * gmin**2) * bracket


def excitation_requirement_met(inputs: BoundInputs) -> bool:
    """Whether ``d * small_ball_rate^2`` clears `excitation_threshold`."""
    return inputs.d * small_ball_rate(inputs) ** 2 >= excitation_threshold(inputs)


def curvature_lower_bound(inputs: BoundInputs) -> float:
    """High-probability lower bound on ``lambda_min(Z Z^T)`` of the
    assembled design:

    ``d (l - m_train) p^2 rate (1 - alpha * energy_cap)^2 gmin / 48``.

    Requires ``alpha < 1 / covariate_energy_cap`` and the excitation
    requirement; violations raise with the failed inequality spelled out.
    """
    cap = covariate_energy_cap(inputs)
    if inputs.alpha * cap >= 1.0:
        raise ValueError(
            f"learning rate too large: need alpha < 1 / covariate_energy_cap "
            f"= {1.0 / cap:.6g}, got alpha = {inputs.alpha}"
        )
    rate = small_ball_rate(inputs)
    threshold = excitation_threshold(inputs)
    if inputs.d * rate**2 < threshold:
        raise ValueError(
            f"excitation requirement not met: need d * rate^2 >= "
            f"{threshold:.6g}, got {inputs.d} * {rate:.6g}^2 = "
            f"{inputs.d * rate**2:.6g}"
        )
    return (
        inputs.d
        * inputs.test_len
        * inputs.p**2
        * rate
        * (1.0 - inputs.alpha * cap) ** 2
        * inputs.gamma_half_k_min
        / 48.0
    )


# ---------------------------------------------------------------------------
# Task similarity


@dataclass(frozen=True)
class SimilarityStats:
    """First and second moments of task distance to a reference.

    ``eta`` is the mean spectral-norm distance ``||phi_d - phi_ref||`` over
    the task list, ``v_phi`` the mean squared distance, and ``d0`` the list
    size the means were taken over. Jensen gives ``eta^2 <= v_phi``.
    """

    eta: float
    v_phi: float
    phi_ref: np.ndarray
    d0: int


def similarity_stats(params_list, phi_ref) -> SimilarityStats:
    """Distance moments of a task list to a reference parameter matrix."""
    if isinstance(phi_ref, SystemParams):
        phi_ref = phi_ref.phi
    phi_ref = np.asarray(phi_ref, dtype=np.float64)
    params_list = list(params_list)
    if not params_list:
        raise ValueError("need at least one task")
    dists = [spectral_norm(par.phi - phi_ref) for par in params_list]
    return SimilarityStats(
        eta=float(np.mean(dists)),
        v_phi=float(np.mean(np.square(dists))),
        phi_ref=phi_ref,
        d0=len(params_list),
    )


# ---------------------------------------------------------------------------
# Offline estimation-gap bound


@dataclass(frozen=True)
class OfflineGapBound:
    """The offline gap bound and every named constant it is built from."""

    second_moment_cap: float
    fourth_moment_cap: float
    mixed_moment_cap: float
    fluctuation_const: float
    grad_scale: float
    dissimilarity_gain: float
    quad_log_const: float
    noise_cap: float
    noise_prefactor: float
    test_energy_cap: float
    cross_noise_cap: float
    similarity_term: float
    spread_term: float
    curvature_used: float
    gap_bound: float


def meta_gap_bound(
    inputs: BoundInputs, stats: SimilarityStats, min_curvature: float
) -> OfflineGapBound:
    """Evaluate the estimation-gap bound for the closed-form offline solve.

    ``min_curvature`` is the caller's lower bound on ``lambda_min(Z Z^T)``
    (either `curvature_lower_bound` or an empirical eigenvalue). The bound
    holds with probability ``1 - 5 delta``:

    ``(similarity_term + spread_term) / min_curvature
    + (noise_cap + alpha * cross_noise_cap) / sqrt(min_curvature)``.
    """
    if not min_curvature > 0:
        raise ValueError(f"min_curvature must be positive, got {min_curvature}")
    d, l, m_train = inputs.d, inputs.l, inputs.m_train
    t_len = inputs.test_len
    dims = inputs.p_dim
    delta = inputs.delta
    cap = covariate_energy_cap(inputs)
    shrink = 1.0 - inputs.alpha * cap
    rate = small_ball_rate(inputs)
    noise_scale = max(inputs.m * inputs.sigma_a2, inputs.n * inputs.sigma_w2)
    sigma_w = math.sqrt(inputs.sigma_w2)

    m2 = inputs.gamma_last_max
    m4 = 3.0 * m2**2
    m2_tilde = max(m2 + inputs.sigma_a2, inputs.m * inputs.n * m2 * inputs.sigma_a2)
    fluctuation = (
        inputs.n**2 * m4
        + 2.0 * m2_tilde
        + 3.0 * inputs.m**2 * inputs.sigma_a2**2
        + 0.5 * math.sqrt(inputs.n**2 * m4 * m2_tilde)
    )

    grad_scale = l * m2 - 0.5 * inputs.alpha * inputs.gamma_under_partial_sum**2
    dissimilarity_gain = (
        48.0
        * grad_scale
        / (t_len * inputs.p**2 * rate * shrink**2 * inputs.gamma_half_k_min)
    )

    quad_log = (
        math.log(4.0 / (3.0 * delta))
        + inputs.n * math.log(5.0)
        + 8.0 * dims * math.log(8.0)
        + 3.0 * dims * math.log(dims / delta)
    )
    noise_cap = 10.0 * sigma_w * math.sqrt(
        quad_log
        + 2.0 * dims * math.log(m2 / (inputs.gamma_half_k_min * shrink**2))
    )

    noise_prefactor = (
        sigma_w
        * (math.sqrt(inputs.n) + math.sqrt(2.0 / d * math.log(4.0 / delta)))
        * (1.0 + 3.0 * math.sqrt(math.log(20.0 * t_len * d / delta)))
        * (1.0 + 3.0 * math.sqrt(math.log(20.0 * m_train * d / delta)))
        * inputs.b_norm**2
        * noise_scale
    )
    test_energy_cap = (
        1.5
        * t_len**3
        * inputs.b_norm**2
        * (1.0 + 3.0 * math.sqrt(math.log(20.0 * l * d / delta))) ** 2
        * noise_scale
        * shrink**2
    )
    cross_noise_cap = (
        noise_prefactor
        * (48.0 / (d * inputs.p**2 * rate)) ** dims
        * math.sqrt(d**2 * m_train**3 * t_len**3)
        * (test_energy_cap / (inputs.gamma_half_k_min * shrink**2)) ** (dims / 2.0)
    )

    similarity_term = d * stats.eta * grad_scale
    spread_term = t_len * math.sqrt(1.0 / delta) * math.sqrt(fluctuation * d * stats.v_phi)
    gap_bound = (similarity_term + spread_term) / min_curvature + (
        noise_cap + inputs.alpha * cross_noise_cap
    ) / math.sqrt(min_curvature)

    return OfflineGapBound(
        second_moment_cap=m2,
        fourth_moment_cap=m4,
        mixed_moment_cap=m2_tilde,
        fluctuation_const=fluctuation,
        grad_scale=grad_scale,
        dissimilarity_gain=dissimilarity_gain,
        quad_log_const=quad_log,
        noise_cap=noise_cap,
        noise_prefactor=noise_prefactor,
        test_energy_cap=test_energy_cap,
        cross_noise_cap=cross_noise_cap,
        similarity_term=similarity_term,
        spread_term=spread_term,
        curvature_used=min_curvature,
        gap_bound=gap_bound,
    )


# ---------------------------------------------------------------------------
# Empirical small-ball probe


@dataclass(frozen=True)
class SmallBallEstimate:
    """Worst-direction small-ball probability from simulation.

    ``probability`` is the minimum over directions of the average over the
    ``k`` in-window offsets of ``P(|<u, z>| >= sqrt(u^T Moment u))``, with
    the threshold read from the horizon-``k//2`` covariate moment. When
    that moment vanishes in a direction the threshold degenerates and a
    strict ``|<u, z>| > 0`` test is used instead; ``degenerate`` flags the
    moment being identically zero.
    """

    probability: float
    degenerate: bool
    directions: np.ndarray
    per_direction: np.ndarray


def empirical_small_ball(
    params: SystemParams,
    noise: NoiseConfig,
    k: int,
    window_start: int,
    trials: int,
    rng: RngStream,
    directions: int = 32,
) -> SmallBallEstimate:
    """Monte-Carlo estimate of the block small-ball probability.

    Simulates ``trials`` independent zero-initialized trajectories and
    probes the covariates at offsets ``window_start + 1 .. window_start + k``
    along the canonical axes plus ``directions`` random unit vectors.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if window_start < 0:
        raise ValueError(f"window_start must be >= 0, got {window_start}")
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials for a stable estimate, got {trials}")
    if directions < 32:
        raise ValueError(f"need at least 32 sampled directions, got {directions}")
    n, m = params.n, params.m
    p = n + m
    length = window_start + k + 1
    gen = rng.generator
    inputs_arr = math.sqrt(noise.sigma_a2) * gen.standard_normal((trials, length, m))
    noises_arr = math.sqrt(noise.sigma_w2) * gen.standard_normal((trials, length, n))
    a_stack = np.ascontiguousarray(np.broadcast_to(params.a, (trials, n, n)))
    b_stack = np.ascontiguousarray(np.broadcast_to(params.b, (trials, n, m)))
    states = kernels.simulate_blocks(
        a_stack, b_stack, inputs_arr, noises_arr, np.zeros((trials, n))
    )
    covs = np.concatenate([states[:, :length, :], inputs_arr], axis=2)
    window = covs[:, window_start + 1 : window_start + k + 1, :]  # (trials, k, p)

    moment = _gamma_unchecked(params, k // 2, noise)
    degenerate = not np.any(moment)

    dirs = np.eye(p)
    raw = gen.standard_normal((directions, p))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    dirs = np.vstack([dirs, raw])

    per_direction = np.empty(dirs.shape[0])
    for i, u in enumerate(dirs):
        thresh = math.sqrt(max(float(u @ moment @ u), 0.0))
        proj = np.abs(window @ u)
        hits = proj > 0.0 if thresh == 0.0 else proj >= thresh
        per_direction[i] = float(np.mean(hits))
    return SmallBallEstimate(
        probability=float(per_direction.min()),
        degenerate=degenerate,
        directions=dirs,
        per_direction=per_direction,
    )


# ---------------------------------------------------------------------------
# Online tracking bound


@dataclass(frozen=True)
class StationaryAnalysis:
    """Closed-loop stationary quantities for a stabilizing gain.

    ``stationary_cov`` solves ``P = (A + B K) P (A + B K)^T + I``;
    ``covariate_lift`` is its push-forward ``[I; K] P [I, K^T]`` to
    covariate space, which has rank at most ``n`` and hence a zero smallest
    eigenvalue whenever ``m >= 1`` (``lift_degenerate``). The restricted
    eigenvalue confines the quadratic form to the lift's range.
    """

    stationary_cov: np.ndarray
    covariate_lift: np.ndarray
    min_eig_full: float
    min_eig_restricted: float
    mixing_const: float
    rho: float

    @property
    def lift_degenerate(self) -> bool:
        return self.min_eig_full <= 1e-12 * max(1.0, self.min_eig_restricted)


def stationary_analysis(
    params: SystemParams, gain: np.ndarray, rho: float, grid_points: int = 1024
) -> StationaryAnalysis:
    """Stationary covariances and mixing constant for ``u = K x`` control.

    ``rho`` must lie strictly between the closed-loop spectral radius and
    one; the mixing constant is
    ``hinf_resolvent_norm((A + B K) / rho) / 2 * sqrt(trace(P) + n / (1 - rho^2))``.
    """
    gain = np.asarray(gain, dtype=np.float64)
    if gain.shape != (params.m, params.n):
        raise ValueError(f"gain shape {gain.shape} does not match ({params.m}, {params.n})")
    closed = params.a + params.b @ gain
    radius = spectral_radius(closed)
    if not radius < rho < 1.0:
        raise ValueError(
            f"need closed-loop spectral radius < rho < 1, got radius={radius:.6g}, "
            f"rho={rho}"
        )
    p_inf = solve_dlyap(closed, np.eye(params.n))
    lift_map = np.vstack([np.eye(params.n), gain])
    covariate_lift = lift_map @ p_inf @ lift_map.T
    min_eig_full = max(min_eig_sym(covariate_lift), 0.0)
    sqrt_weight = _sym_sqrt(np.eye(params.n) + gain.T @ gain)
    min_eig_restricted = max(min_eig_sym(sqrt_weight @ p_inf @ sqrt_weight), 0.0)
    mixing = (
        hinf_resolvent_norm(closed / rho, grid_points)
        / 2.0
        * math.sqrt(float(np.trace(p_inf)) + params.n / (1.0 - rho**2))
    )
    return StationaryAnalysis(
        stationary_cov=p_inf,
        covariate_lift=covariate_lift,
        min_eig_full=min_eig_full,
        min_eig_restricted=min_eig_restricted,
        mixing_const=mixing,
        rho=rho,
    )


def _sym_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def chi_mean(n: int) -> float:
    """Mean of a chi distribution with ``n`` degrees of freedom:
    ``sqrt(2) Gamma((n+1)/2) / Gamma(n/2)``."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return math.sqrt(2.0) * math.exp(math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


@dataclass(frozen=True)
class TrackingBound:
    """Tracking-error bound for projected online adaptation.

    ``value`` bounds the expected squared parameter gap after
    ``cfg.steps`` updates; ``contraction`` is the per-step factor
    ``1 - 2 alpha lam``. With the degenerate full-space eigenvalue
    (``lam = 0``) the contraction is one and the bound infinite.
    """

    value: float
    contraction: float
    grad_cap: float
    drift_cap: float
    noise_mean: float
    lam: float
    mode: str
    corrected_noise: bool


def tracking_error_bound(
    gap0_sq: float,
    cfg: AdaptConfig,
    analysis: StationaryAnalysis,
    n: int,
    sigma_w: float,
    mode: str = "restricted",
    corrected_noise: bool = False,
) -> TrackingBound:
    """Evaluate the online tracking-error bound.

    ``gap0_sq`` is the initial squared gap ``||phi_init - phi_true||^2``.
    ``mode`` selects which stationary eigenvalue drives the contraction:
    ``"restricted"`` (range of the covariate lift) or ``"full"`` (the
    ambient smallest eigenvalue, zero whenever ``m >= 1``, making the bound
    vacuous). ``corrected_noise`` switches the additive-noise term of the
    gradient cap from ``c_z^2 n sigma_w`` to the dimensionally consistent
    ``c_z^2 n sigma_w^2``; both variants are reported by `build_report`.

    ``value = alpha grad_cap / (2 lam)
    + contraction^steps (gap0_sq + 2 alpha steps drift_cap / contraction)``
    """
    if gap0_sq < 0:
        raise ValueError(f"gap0_sq must be >= 0, got {gap0_sq}")
    if sigma_w < 0:
        raise ValueError(f"sigma_w must be >= 0, got {sigma_w}")
    if mode not in ("restricted", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    lam = analysis.min_eig_restricted if mode == "restricted" else analysis.min_eig_full
    noise_mean = chi_mean(n)
    noise_term = cfg.c_z**2 * n * (sigma_w**2 if corrected_noise else sigma_w)
    grad_cap = (
        4.0 * cfg.c_phi**2 * cfg.c_z**4
        + 4.0 * cfg.c_phi * cfg.c_z**3 * sigma_w * noise_mean
        + noise_term
    )
    drift_cap = 8.0 * n * cfg.c_z**2 * cfg.c_phi**2 * analysis.mixing_const
    if lam <= 0.0:
        return TrackingBound(
            value=math.inf,
            contraction=1.0,
            grad_cap=grad_cap,
            drift_cap=drift_cap,
            noise_mean=noise_mean,
            lam=0.0,
            mode=mode,
            corrected_noise=corrected_noise,
        )
    limit = (1.0 - analysis.rho) / (2.0 * lam)
    if cfg.alpha >= limit:
        raise ValueError(
            f"step size too large for contraction: need alpha < (1 - rho) / (2 lam) "
            f"= {limit:.6g}, got alpha = {cfg.alpha}"
        )
    contraction = 1.0 - 2.0 * cfg.alpha * lam
    steps = cfg.steps
    value = cfg.alpha * grad_cap / (2.0 * lam) + contraction**steps * (
        gap0_sq + 2.0 * cfg.alpha * steps * drift_cap / contraction
    )
    return TrackingBound(
        value=value,
        contraction=contraction,
        grad_cap=grad_cap,
        drift_cap=drift_cap,
        noise_mean=noise_mean,
        lam=lam,
        mode=mode,
        corrected_noise=corrected_noise,
    )


# ---------------------------------------------------------------------------
# Consolidated report


@dataclass(frozen=True)
class BoundReport:
    """Everything the bound evaluators produce for one configuration."""

    inputs: BoundInputs
    energy_cap: float
    rate: float
    threshold: float
    requirement_met: bool
    curvature_bound: float
    similarity: SimilarityStats
    offline: OfflineGapBound
    stationary: StationaryAnalysis
    adapt: AdaptConfig
    gap0_sq: float
    tracking_literal: TrackingBound
    tracking_restricted: TrackingBound
    grad_cap_corrected: float


def build_report(
    inputs: BoundInputs,
    params_list,
    *,
    gain: np.ndarray,
    rho: float,
    adapt_cfg: AdaptConfig,
    gap0_sq: float,
    reference: int = 0,
    curvature: float | None = None,
    grid_points: int = 1024,
) -> BoundReport:
    """Evaluate every bound for one configuration.

    The offline part uses task ``reference`` as the similarity anchor and
    ``curvature`` (default: `curvature_lower_bound`) as the design
    curvature; the online part analyses the reference task in closed loop
    under ``gain`` and evaluates the tracking bound in both eigenvalue
    modes plus the corrected-noise variant of the gradient cap.
    """
    params_list = list(params_list)
    if not 0 <= reference < len(params_list):
        raise ValueError(
            f"reference index {reference} out of range for {len(params_list)} tasks"
        )
    energy = covariate_energy_cap(inputs)
    rate = small_ball_rate(inputs)
    threshold = excitation_threshold(inputs)
    met = inputs.d * rate**2 >= threshold
    curvature_bound = curvature_lower_bound(inputs)
    used = curvature_bound if curvature is None else curvature
    stats = similarity_stats(params_list, params_list[reference].phi)
    offline = meta_gap_bound(inputs, stats, used)
    analysis = stationary_analysis(params_list[reference], gain, rho, grid_points)
    sigma_w = math.sqrt(inputs.sigma_w2)
    literal = tracking_error_bound(
        gap0_sq, adapt_cfg, analysis, inputs.n, sigma_w, mode="full"
    )
    restricted = tracking_error_bound(
        gap0_sq, adapt_cfg, analysis, inputs.n, sigma_w, mode="restricted"
    )
    corrected = tracking_error_bound(
        gap0_sq, adapt_cfg, analysis, inputs.n, sigma_w, mode="restricted",
        corrected_noise=True,
    )
    return BoundReport(
        inputs=inputs,
        energy_cap=energy,
        rate=rate,
        threshold=threshold,
        requirement_met=met,
        curvature_bound=curvature_bound,
        similarity=stats,
        offline=offline,
        stationary=analysis,
        adapt=adapt_cfg,
        gap0_sq=gap0_sq,
        tracking_literal=literal,
        tracking_restricted=restricted,
        grad_cap_corrected=corrected.grad_cap,
    )


def render_report(report: BoundReport) -> str:
    """Serialize a report to a flat ``name = value`` document.

    Field order is fixed; floats use ``repr`` so rereading a value
    round-trips exactly.
    """
    inp = report.inputs
    off = report.offline
    sta = report.stationary
    rows: list[tuple[str, object]] = [
        ("d", inp.d),
        ("l", inp.l),
        ("m_train", inp.m_train),
        ("k", inp.k),
        ("p", inp.p),
        ("delta", inp.delta),
        ("alpha", inp.alpha),
        ("sigma_a2", inp.sigma_a2),
        ("sigma_w2", inp.sigma_w2),
        ("n", inp.n),
        ("m", inp.m),
        ("b_norm", inp.b_norm),
        ("gamma_half_k_max", inp.gamma_half_k_max),
        ("gamma_half_k_min", inp.gamma_half_k_min),
        ("gamma_last_max", inp.gamma_last_max),
        ("gamma_last_trace", inp.gamma_last_trace),
        ("gamma_under_partial_sum", inp.gamma_under_partial_sum),
        ("covariate_energy_cap", report.energy_cap),
        ("small_ball_rate", report.rate),
        ("excitation_threshold", report.threshold),
        ("excitation_requirement_met", report.requirement_met),
        ("curvature_lower_bound", report.curvature_bound),
        ("eta", report.similarity.eta),
        ("v_phi", report.similarity.v_phi),
        ("d0", report.similarity.d0),
        ("second_moment_cap", off.second_moment_cap),
        ("fourth_moment_cap", off.fourth_moment_cap),
        ("mixed_moment_cap", off.mixed_moment_cap),
        ("fluctuation_const", off.fluctuation_const),
        ("grad_scale", off.grad_scale),
        ("dissimilarity_gain", off.dissimilarity_gain),
        ("quad_log_const", off.quad_log_const),
        ("noise_cap", off.noise_cap),
        ("noise_prefactor", off.noise_prefactor),
        ("test_energy_cap", off.test_energy_cap),
        ("cross_noise_cap", off.cross_noise_cap),
        ("similarity_term", off.similarity_term),
        ("spread_term", off.spread_term),
        ("curvature_used", off.curvature_used),
        ("gap_bound", off.gap_bound),
        ("rho", sta.rho),
        ("stationary_cov_trace", float(np.trace(sta.stationary_cov))),
        ("lift_min_eig_full", sta.min_eig_full),
        ("lift_min_eig_restricted", sta.min_eig_restricted),
        ("lift_degenerate", sta.lift_degenerate),
        ("mixing_const", sta.mixing_const),
        ("adapt_alpha", report.adapt.alpha),
        ("adapt_steps", report.adapt.steps),
        ("c_phi", report.adapt.c_phi),
        ("c_z", report.adapt.c_z),
        ("gap0_sq", report.gap0_sq),
        ("noise_mean", report.tracking_restricted.noise_mean),
        ("grad_cap", report.tracking_restricted.grad_cap),
        ("grad_cap_corrected", report.grad_cap_corrected),
        ("drift_cap", report.tracking_restricted.drift_cap),
        ("contraction_restricted", report.tracking_restricted.contraction),
        ("tracking_bound_restricted", report.tracking_restricted.value),
        ("contraction_literal", report.tracking_literal.contraction),
        ("tracking_bound_literal", report.tracking_literal.value),
    ]
    lines = []
    for name, value in rows:
        if isinstance(value, bool):
            text = "True" if value else "False"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"
