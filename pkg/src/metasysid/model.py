"""Episodic block model: tasks, trajectory simulation, Gramians.

A "task" is one linear system ``(A, B)``; a block is a length-``L``
trajectory generated by one task. The stacked parameter ``phi`` collects
``A`` and ``B`` so that ``x[t+1] = phi.T @ z[t] + w[t]`` with the covariate
``z[t] = [x[t]; u[t]]``.
"""

from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalError
from .linalg import spectral_radius

REJECTION_CAP = 10_000


# ---------------------------------------------------------------------------
# Randomness


def _stream_key(part) -> int:
    """Map a child-stream label to a 32-bit key (strings via CRC-32)."""
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & 0xFFFFFFFF
    value = int(part)
    if not 0 <= value < 2**32:
        raise ValueError(f"stream key {value} outside [0, 2^32)")
    return value


class RngStream:
    """Seeded random source with a documented child-stream derivation.

    A stream is identified by ``(seed, path)``. The underlying generator is
    PCG64 keyed by ``SeedSequence(entropy=seed, spawn_key=path)``, so any
    stream is reproducible from the master seed and its label path alone,
    independent of draw order elsewhere. String labels are hashed to 32-bit
    keys with CRC-32; integer labels are used directly.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        seed = int(seed)
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.path))
        )

    def child(self, *parts) -> "RngStream":
        """Derive an independent stream labeled by ``parts``."""
        return RngStream(self.seed, self.path + tuple(_stream_key(p) for p in parts))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream(seed={self.seed}, path={self.path})"


# ---------------------------------------------------------------------------
# Tasks


@dataclass(frozen=True)
class SystemParams:
    """One block's model: state matrix ``a`` (n x n) and input matrix ``b`` (n x m)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"a must be square, got shape {a.shape}")
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ValueError(f"b must have {a.shape[0]} rows, got shape {b.shape}")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("system matrices must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def phi(self) -> np.ndarray:
        """Stacked parameter, shape ``(n+m, n)``, with ``phi.T == [A B]``."""
        return np.vstack((self.a.T, self.b.T))

    @classmethod
    def from_phi(cls, phi) -> "SystemParams":
        phi = np.asarray(phi, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[0] < phi.shape[1]:
            raise ValueError(f"phi must be (n+m) x n with n+m >= n, got {phi.shape}")
        n = phi.shape[1]
        return cls(a=phi[:n].T, b=phi[n:].T)


def scalar_params(a: float, b: float) -> SystemParams:
    """Convenience constructor for the n = m = 1 case."""
    return SystemParams(a=np.array([[float(a)]]), b=np.array([[float(b)]]))


@dataclass(frozen=True)
class NoiseConfig:
    """Input and disturbance variances: ``u ~ N(0, sigma_a2 I)``, ``w ~ N(0, sigma_w2 I)``."""

    sigma_a2: float
    sigma_w2: float

    def __post_init__(self):
        if self.sigma_a2 < 0 or self.sigma_w2 < 0:
            raise ValueError("variances must be non-negative")


def _validated_params(params) -> tuple[SystemParams, ...]:
    items = tuple(params)
    if not items:
        raise ValueError("task list must be non-empty")
    n, m = items[0].n, items[0].m
    for p in items[1:]:
        if (p.n, p.m) != (n, m):
            raise ValueError("all tasks in a list must share dimensions")
    return items


@dataclass(frozen=True)
class IIDUniformSampler:
    """Tasks with entries of ``A`` and ``B`` i.i.d. uniform on ``[lo, hi]``.

    ``reject_unstable=None`` resolves automatically: no rejection for
    ``n == 1``, rejection (resample until ``rho(A) < 1``) for ``n >= 2``.
    """

    n: int
    m: int
    lo: float
    hi: float
    reject_unstable: bool | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ValueError(f"need n >= 1 and m >= 0, got n={self.n}, m={self.m}")
        if not self.lo <= self.hi:
            raise ValueError(f"need lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def rejects(self) -> bool:
        if self.reject_unstable is None:
            return self.n >= 2
        return self.reject_unstable

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n, self.m)


@dataclass(frozen=True)
class FixedListSampler:
    """A finite task list; asking past the end is an error."""

    params: tuple[SystemParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", _validated_params(self.params))

    @property
    def dims(self) -> tuple[int, int]:
        return (self.params[0].n, self.params[0].m)


@dataclass(frozen=True)
class HarmonicSwitchSampler:
    """Deterministic cycle through a task list (index modulo list length)."""

    params: tuple[SystemParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", _validated_params(self.params))

    @property
    def dims(self) -> tuple[int, int]:
        return (self.params[0].n, self.params[0].m)


TaskSampler = IIDUniformSampler | FixedListSampler | HarmonicSwitchSampler


def sample_task(sampler: TaskSampler, index: int, rng: RngStream | None = None) -> SystemParams:
    """Draw the task for block ``index``.

    For the uniform sampler each attempt draws the entries of ``A`` then
    ``B``; with rejection active, draws repeat until ``rho(A) < 1``, capped
    at ``REJECTION_CAP`` attempts.
    """
    if index < 0:
        raise ValueError(f"block index must be >= 0, got {index}")
    if isinstance(sampler, HarmonicSwitchSampler):
        return sampler.params[index % len(sampler.params)]
    if isinstance(sampler, FixedListSampler):
        if index >= len(sampler.params):
            raise ValueError(
                f"fixed task list exhausted: index {index} with {len(sampler.params)} tasks"
            )
        return sampler.params[index]
    if rng is None:
        raise ValueError("the uniform sampler needs an RngStream")
    gen = rng.generator
    for _ in range(REJECTION_CAP):
        a = gen.uniform(sampler.lo, sampler.hi, size=(sampler.n, sampler.n))
        b = gen.uniform(sampler.lo, sampler.hi, size=(sampler.n, sampler.m))
        if not sampler.rejects or spectral_radius(a) < 1.0:
            return SystemParams(a=a, b=b)
    raise NumericalError(
        f"task sampling failed: no stable draw in {REJECTION_CAP} attempts "
        f"from [{sampler.lo}, {sampler.hi}]^(n x n)"
    )


def task_sample(source, count: int, rng: RngStream | None = None) -> tuple[SystemParams, ...]:
    """Materialize a finite sample of tasks from a sampler or a param list.

    List-backed samplers (and plain sequences) return their full list;
    the uniform sampler draws ``count`` tasks from child streams of ``rng``.
    """
    if isinstance(source, IIDUniformSampler):
        if rng is None:
            raise ValueError("sampling tasks from a distribution needs an RngStream")
        if count < 1:
            raise ValueError(f"need count >= 1, got {count}")
        return tuple(sample_task(source, i, rng.child("task-sample", i)) for i in range(count))
    if isinstance(source, (FixedListSampler, HarmonicSwitchSampler)):
        return source.params
    return _validated_params(source)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class BlockTrajectory:
    """One simulated block.

    ``states`` holds ``x_0 .. x_L`` (shape ``(L+1, n)``), ``inputs`` and
    ``noises`` hold ``u_0 .. u_{L-1}`` and ``w_0 .. w_{L-1}``. ``train_len``
    is the number of leading transitions reserved for adaptation; the
    ``*_tr`` / ``*_te`` views expose the resulting column splits with
    covariates ``z_t = [x_t; u_t]``.
    """

    states: np.ndarray
    inputs: np.ndarray
    noises: np.ndarray
    train_len: int = 0

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        inputs = np.asarray(self.inputs, dtype=np.float64)
        noises = np.asarray(self.noises, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 2:
            raise ValueError(f"states must hold at least x_0 and x_1, got shape {states.shape}")
        length = states.shape[0] - 1
        if inputs.ndim != 2 or inputs.shape[0] != length:
            raise ValueError(f"inputs must have {length} rows, got shape {inputs.shape}")
        if noises.shape != states[:-1].shape:
            raise ValueError(f"noises must have shape {(length, states.shape[1])}")
        if not 0 <= self.train_len <= length:
            raise ValueError(f"train_len must lie in [0, {length}], got {self.train_len}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "noises", noises)

    @property
    def length(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def test_len(self) -> int:
        return self.length - self.train_len

    def covariates(self, start: int, stop: int) -> np.ndarray:
        """Columns ``z_t = [x_t; u_t]`` for ``t`` in ``[start, stop)``, shape ``(n+m, stop-start)``."""
        return np.vstack((self.states[start:stop].T, self.inputs[start:stop].T))

    @property
    def z_tr(self) -> np.ndarray:
        return self.covariates(0, self.train_len)

    @property
    def x_tr(self) -> np.ndarray:
        return self.states[1 : self.train_len + 1].T

    @property
    def w_tr(self) -> np.ndarray:
        return self.noises[: self.train_len].T

    @property
    def z_te(self) -> np.ndarray:
        return self.covariates(self.train_len, self.length)

    @property
    def x_te(self) -> np.ndarray:
        return self.states[self.train_len + 1 :].T

    @property
    def w_te(self) -> np.ndarray:
        return self.noises[self.train_len :].T

    def with_train_len(self, train_len: int) -> "BlockTrajectory":
        return dataclasses.replace(self, train_len=train_len)


def _batch(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr[None, ...], dtype=np.float64)


def replay_block(
    params: SystemParams, inputs, noises, x0=None, train_len: int = 0
) -> BlockTrajectory:
    """Run the state recursion for given inputs and disturbances."""
    inputs = np.asarray(inputs, dtype=np.float64)
    noises = np.asarray(noises, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.m:
        raise ValueError(f"inputs must be (L, {params.m}), got {inputs.shape}")
    if noises.shape != (inputs.shape[0], params.n):
        raise ValueError(f"noises must be (L, {params.n}), got {noises.shape}")
    if x0 is None:
        x0 = np.zeros(params.n)
    x0 = np.asarray(x0, dtype=np.float64).reshape(params.n)
    states = kernels.simulate_blocks(
        _batch(params.a), _batch(params.b), _batch(inputs), _batch(noises), _batch(x0)
    )
    return BlockTrajectory(states=states[0], inputs=inputs, noises=noises, train_len=train_len)


def simulate_block(
    params: SystemParams,
    length: int,
    noise: NoiseConfig,
    rng: RngStream,
    x0=None,
    train_len: int = 0,
) -> BlockTrajectory:
    """Simulate one open-loop block with Gaussian inputs and disturbances.

    Inputs for all steps are drawn before disturbances, so the draw layout
    is reproducible from the stream alone.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    gen = rng.generator
    inputs = math.sqrt(noise.sigma_a2) * gen.standard_normal((length, params.m))
    noises = math.sqrt(noise.sigma_w2) * gen.standard_normal((length, params.n))
    return replay_block(params, inputs, noises, x0=x0, train_len=train_len)


def simulate_closed_loop(
    params: SystemParams,
    gain,
    length: int,
    sigma_w2: float,
    rng: RngStream,
    x0=None,
    train_len: int = 0,
) -> BlockTrajectory:
    """Simulate one block under state feedback ``u_t = K x_t``.

    There is no reset built in: thread the final state of one call as the
    ``x0`` of the next to continue a trajectory across blocks.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    gain = np.asarray(gain, dtype=np.float64)
    if gain.shape != (params.m, params.n):
        raise ValueError(f"gain must be ({params.m}, {params.n}), got {gain.shape}")
    if sigma_w2 < 0:
        raise ValueError("sigma_w2 must be non-negative")
    if x0 is None:
        x0 = np.zeros(params.n)
    x0 = np.asarray(x0, dtype=np.float64).reshape(params.n)
    noises = math.sqrt(sigma_w2) * rng.generator.standard_normal((length, params.n))
    states, inputs = kernels.closed_loop_blocks(
        _batch(params.a),
        _batch(params.b),
        np.ascontiguousarray(gain),
        _batch(noises),
        _batch(x0),
    )
    return BlockTrajectory(states=states[0], inputs=inputs[0], noises=noises, train_len=train_len)


# ---------------------------------------------------------------------------
# Gramians and covariate second moments


def gramians(params: SystemParams, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Finite-horizon Gramians ``(G_t, F_t)``.

    ``G_t = sum_{i<t} A^i B B^T (A^i)^T`` and ``F_t = sum_{i<t} A^i (A^i)^T``.
    """
    if t < 1:
        raise ValueError(f"horizon must be >= 1, got {t}")
    n = params.n
    g = np.zeros((n, n))
    f = np.zeros((n, n))
    power = np.eye(n)
    for _ in range(t):
        pb = power @ params.b
        g += pb @ pb.T
        f += power @ power.T
        power = params.a @ power
    return g, f


def _gamma_unchecked(params: SystemParams, t: int, noise: NoiseConfig) -> np.ndarray:
    n, m = params.n, params.m
    out = np.zeros((n + m, n + m))
    if t >= 1:
        g, f = gramians(params, t)
        out[:n, :n] = noise.sigma_a2 * g + noise.sigma_w2 * f
    out[n:, n:] = noise.sigma_a2 * np.eye(m)
    return out


def gamma(params: SystemParams, t: int, noise: NoiseConfig) -> np.ndarray:
    """Covariate second moment ``diag(sigma_a2 G_t + sigma_w2 F_t, sigma_a2 I_m)``."""
    if t < 1:
        raise ValueError(f"horizon must be >= 1, got {t}")
    return _gamma_unchecked(params, t, noise)


@dataclass(frozen=True)
class GammaEnvelopes:
    """Sample-based eigenvalue envelopes of the covariate second moment.

    ``lam_max`` / ``lam_min`` are the extreme eigenvalues over the task
    sample, with the achieving tasks attached; ``trace_max`` is the largest
    trace. These approximate the set-wide envelopes from below/above only
    as well as the sample covers the task set.
    """

    t: int
    lam_max: float
    lam_min: float
    trace_max: float
    argmax: SystemParams
    argmin: SystemParams


def gamma_envelopes(
    source, t: int, noise: NoiseConfig, count: int = 1000, rng: RngStream | None = None
) -> GammaEnvelopes:
    """Eigenvalue envelopes of the covariate moment over a task sample.

    ``source`` may be a sampler or an explicit sequence of tasks. Horizon
    ``t = 0`` is allowed and gives the pre-excitation moment with a zero
    state block.
    """
    if t < 0:
        raise ValueError(f"horizon must be >= 0, got {t}")
    tasks = task_sample(source, count, rng)
    lam_max = -np.inf
    lam_min = np.inf
    trace_max = -np.inf
    argmax = argmin = tasks[0]
    for task in tasks:
        eigs = np.linalg.eigvalsh(_gamma_unchecked(task, t, noise))
        if eigs[-1] > lam_max:
            lam_max, argmax = float(eigs[-1]), task
        if eigs[0] < lam_min:
            lam_min, argmin = float(eigs[0]), task
        trace_max = max(trace_max, float(eigs.sum()))
    return GammaEnvelopes(
        t=t, lam_max=lam_max, lam_min=lam_min, trace_max=trace_max, argmax=argmax, argmin=argmin
    )
