import numpy as np
import pytest

from metasysid.errors import NumericalError
from metasysid.model import (
    BlockTrajectory,
    FixedListSampler,
    GammaEnvelopes,
    HarmonicSwitchSampler,
    IIDUniformSampler,
    NoiseConfig,
    RngStream,
    SystemParams,
    gamma,
    gamma_envelopes,
    gramians,
    replay_block,
    sample_task,
    scalar_params,
    simulate_block,
    simulate_closed_loop,
    task_sample,
)


# -- seeded stream tree -----------------------------------------------------


class TestRngStream:
    def test_same_path_same_draws(self):
        a = RngStream(42).child("offline", 3).generator.standard_normal(8)
        b = RngStream(42).child("offline", 3).generator.standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_children_are_decorrelated(self):
        root = RngStream(0)
        a = root.child("x").generator.standard_normal(4)
        b = root.child("y").generator.standard_normal(4)
        assert not np.array_equal(a, b)

    def test_child_order_matters(self):
        a = RngStream(1).child("a", 0).generator.standard_normal(2)
        b = RngStream(1).child(0, "a").generator.standard_normal(2)
        assert not np.array_equal(a, b)

    def test_nested_children_equal_flat_path(self):
        a = RngStream(7).child("u").child(5).generator.standard_normal(3)
        b = RngStream(7).child("u", 5).generator.standard_normal(3)
        np.testing.assert_array_equal(a, b)

    def test_string_and_int_labels_coexist(self):
        root = RngStream(3)
        assert root.child("rep", 1).path != root.child("rep", 2).path


# -- parameters and samplers --------------------------------------------------


def test_system_params_phi_layout():
    par = SystemParams(a=np.array([[0.5, 0.1], [0.0, 0.3]]),
                       b=np.array([[1.0], [2.0]]))
    # phi is (n + m) x n with phi^T = [A B]
    assert par.phi.shape == (3, 2)
    np.testing.assert_array_equal(par.phi.T[:, :2], par.a)
    np.testing.assert_array_equal(par.phi.T[:, 2:], par.b)
    back = SystemParams.from_phi(par.phi)
    np.testing.assert_array_equal(back.a, par.a)
    np.testing.assert_array_equal(back.b, par.b)


def test_system_params_validates_shapes():
    with pytest.raises(ValueError):
        SystemParams(a=np.zeros((2, 3)), b=np.zeros((2, 1)))
    with pytest.raises(ValueError):
        SystemParams(a=np.zeros((2, 2)), b=np.zeros((3, 1)))


def test_autonomous_system_allowed():
    par = SystemParams(a=np.array([[0.5]]), b=np.zeros((1, 0)))
    assert par.m == 0
    assert par.phi.shape == (1, 1)


def test_scalar_params():
    par = scalar_params(0.5, 0.7)
    assert (par.n, par.m) == (1, 1)
    assert par.a[0, 0] == 0.5 and par.b[0, 0] == 0.7


def test_noise_config_rejects_negative():
    with pytest.raises(ValueError):
        NoiseConfig(sigma_a2=-0.1, sigma_w2=0.0)


def test_uniform_sampler_respects_bounds():
    sampler = IIDUniformSampler(n=2, m=1, lo=0.1, hi=0.2, reject_unstable=False)
    par = sample_task(sampler, 0, RngStream(5).child("t"))
    assert np.all(par.a >= 0.1) and np.all(par.a <= 0.2)
    assert np.all(par.b >= 0.1) and np.all(par.b <= 0.2)


def test_uniform_sampler_auto_rejection():
    assert not IIDUniformSampler(n=1, m=1, lo=0.5, hi=1.0).rejects
    assert IIDUniformSampler(n=3, m=1, lo=-0.5, hi=0.5).rejects
    sampler = IIDUniformSampler(n=3, m=1, lo=-0.5, hi=0.5)
    for i in range(10):
        par = sample_task(sampler, i, RngStream(9).child("s", i))
        assert np.max(np.abs(np.linalg.eigvals(par.a))) < 1.0


def test_uniform_sampler_rejection_can_exhaust():
    # every draw from [2, 3] is unstable, so rejection must give up
    sampler = IIDUniformSampler(n=2, m=1, lo=2.0, hi=3.0, reject_unstable=True)
    with pytest.raises(NumericalError, match="no stable draw"):
        sample_task(sampler, 0, RngStream(0).child("bad"))


def test_fixed_list_sampler_exhausts():
    sampler = FixedListSampler(params=(scalar_params(0.5, 0.7),))
    assert sample_task(sampler, 0).a[0, 0] == 0.5
    with pytest.raises(ValueError, match="exhausted"):
        sample_task(sampler, 1)


def test_harmonic_sampler_cycles():
    sampler = HarmonicSwitchSampler(
        params=(scalar_params(0.5, 0.7), scalar_params(0.8, 0.8))
    )
    assert sample_task(sampler, 0).a[0, 0] == 0.5
    assert sample_task(sampler, 1).a[0, 0] == 0.8
    assert sample_task(sampler, 2).a[0, 0] == 0.5
    assert sample_task(sampler, 17).a[0, 0] == 0.8


def test_task_sample_materializes():
    fixed = FixedListSampler(params=(scalar_params(0.5, 0.7), scalar_params(0.8, 0.8)))
    assert len(task_sample(fixed, 99)) == 2  # count ignored for list samplers
    uniform = IIDUniformSampler(n=1, m=1, lo=0.5, hi=1.0)
    tasks = task_sample(uniform, 5, RngStream(2))
    assert len(tasks) == 5
    again = task_sample(uniform, 5, RngStream(2))
    for t1, t2 in zip(tasks, again):
        np.testing.assert_array_equal(t1.a, t2.a)
    # a shorter draw from the same stream is a prefix of the longer one
    head = task_sample(uniform, 3, RngStream(2))
    for t1, t2 in zip(head, tasks):
        np.testing.assert_array_equal(t1.a, t2.a)


# -- trajectories -----------------------------------------------------------


def manual_replay(par, inputs, noises, x0=None):
    n = par.n
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    states = [x]
    for t in range(inputs.shape[0]):
        x = par.a @ x + par.b @ inputs[t] + noises[t]
        states.append(x)
    return np.stack(states)


def test_replay_block_matches_manual_recursion():
    rng = np.random.default_rng(20)
    par = SystemParams(a=rng.uniform(-0.4, 0.4, (3, 3)), b=rng.standard_normal((3, 2)))
    inputs = rng.standard_normal((9, 2))
    noises = rng.standard_normal((9, 3))
    block = replay_block(par, inputs, noises, train_len=4)
    np.testing.assert_allclose(block.states, manual_replay(par, inputs, noises),
                               rtol=1e-12, atol=1e-14)
    assert block.length == 9
    assert block.n == 3 and block.m == 2


def test_trajectory_splits_partition_the_block():
    rng = np.random.default_rng(21)
    par = scalar_params(0.6, 1.0)
    inputs = rng.standard_normal((8, 1))
    noises = rng.standard_normal((8, 1))
    block = replay_block(par, inputs, noises, train_len=3)

    # covariates stack state over input at matching times
    z = block.covariates(0, 8)
    np.testing.assert_array_equal(z[0], block.states[:8, 0])
    np.testing.assert_array_equal(z[1], inputs[:, 0])

    # training split: transitions 0..M-1; test split: M..L-1
    np.testing.assert_array_equal(block.z_tr, z[:, :3])
    np.testing.assert_array_equal(block.x_tr, block.states[1:4].T)
    np.testing.assert_array_equal(block.w_tr, noises[:3].T)
    np.testing.assert_array_equal(block.z_te, z[:, 3:])
    np.testing.assert_array_equal(block.x_te, block.states[4:].T)
    np.testing.assert_array_equal(block.w_te, noises[3:].T)
    assert block.test_len == 5

    # every transition satisfies the model equation
    phi = par.phi
    np.testing.assert_allclose(block.x_te, phi.T @ block.z_te + block.w_te,
                               rtol=1e-12, atol=1e-14)


def test_with_train_len_revises_split_only():
    rng = np.random.default_rng(22)
    par = scalar_params(0.5, 0.7)
    block = simulate_block(par, 6, NoiseConfig(0.1, 0.01), RngStream(1).child("b"),
                           train_len=2)
    wider = block.with_train_len(4)
    np.testing.assert_array_equal(wider.states, block.states)
    assert wider.z_tr.shape[1] == 4
    assert wider.test_len == 2


def test_trajectory_validates_lengths():
    with pytest.raises(ValueError):
        BlockTrajectory(states=np.zeros((3, 1)), inputs=np.zeros((4, 1)),
                        noises=np.zeros((4, 1)), train_len=1)


def test_simulate_block_starts_at_zero_by_default():
    block = simulate_block(scalar_params(0.9, 1.0), 5, NoiseConfig(1.0, 1.0),
                           RngStream(0).child("z"))
    assert block.states[0, 0] == 0.0


def test_simulate_block_deterministic_per_stream():
    par = scalar_params(0.5, 0.7)
    noise = NoiseConfig(0.1, 0.01)
    b1 = simulate_block(par, 7, noise, RngStream(11).child("blk", 2))
    b2 = simulate_block(par, 7, noise, RngStream(11).child("blk", 2))
    np.testing.assert_array_equal(b1.states, b2.states)
    b3 = simulate_block(par, 7, noise, RngStream(11).child("blk", 3))
    assert not np.array_equal(b1.states, b3.states)


def test_simulate_closed_loop_applies_gain():
    par = scalar_params(0.9, 1.0)
    gain = np.array([[-0.5]])
    block = simulate_closed_loop(par, gain, 10, 0.01, RngStream(4).child("cl"))
    np.testing.assert_allclose(block.inputs, block.states[:-1] @ gain.T, atol=1e-14)
    # closed-loop transition: x+ = (a + b k) x + w
    np.testing.assert_allclose(
        block.states[1:, 0],
        0.4 * block.states[:-1, 0] + block.noises[:, 0],
        atol=1e-14,
    )


def test_simulate_closed_loop_threads_initial_state():
    par = scalar_params(0.5, 1.0)
    first = simulate_closed_loop(par, np.array([[0.0]]), 4, 0.01,
                                 RngStream(5).child("a"))
    second = simulate_closed_loop(par, np.array([[0.0]]), 4, 0.01,
                                  RngStream(5).child("b"), x0=first.states[-1])
    np.testing.assert_array_equal(second.states[0], first.states[-1])


# -- covariate second moments -------------------------------------------------


def test_gramians_base_case_and_recursion():
    rng = np.random.default_rng(23)
    par = SystemParams(a=rng.uniform(-0.4, 0.4, (2, 2)), b=rng.standard_normal((2, 2)))
    g1, f1 = gramians(par, 1)
    np.testing.assert_allclose(g1, par.b @ par.b.T, atol=1e-14)
    np.testing.assert_array_equal(f1, np.eye(2))
    # G_{t+1} = A G_t A^T + B B^T (and F likewise with Q = I)
    for t in (1, 2, 5):
        g_next, f_next = gramians(par, t + 1)
        g_t, f_t = gramians(par, t)
        np.testing.assert_allclose(g_next, par.a @ g_t @ par.a.T + par.b @ par.b.T,
                                   rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(f_next, par.a @ f_t @ par.a.T + np.eye(2),
                                   rtol=1e-12, atol=1e-14)


def test_gamma_block_structure():
    par = scalar_params(0.5, 0.7)
    noise = NoiseConfig(0.1, 0.01)
    got = gamma(par, 1, noise)
    # state block sigma_a2 b^2 + sigma_w2, input block sigma_a2, no cross term
    expect = np.diag([0.1 * 0.49 + 0.01, 0.1])
    np.testing.assert_allclose(got, expect, atol=1e-15)
    with pytest.raises(ValueError):
        gamma(par, 0, noise)


def test_gamma_matches_simulated_covariance():
    # Monte-Carlo covariance of z_t for a scalar block
    par = scalar_params(0.5, 0.7)
    noise = NoiseConfig(0.1, 0.01)
    t = 3
    trials = 200_000
    rng = np.random.default_rng(24)
    u = np.sqrt(0.1) * rng.standard_normal((trials, t + 1))
    w = np.sqrt(0.01) * rng.standard_normal((trials, t))
    x = np.zeros(trials)
    for i in range(t):
        x = 0.5 * x + 0.7 * u[:, i] + w[:, i]
    z = np.stack([x, u[:, t]])
    emp = z @ z.T / trials
    np.testing.assert_allclose(emp, gamma(par, t, noise), rtol=0.02, atol=1e-3)


def test_gamma_envelopes_over_fixed_list():
    par_lo = scalar_params(0.5, 0.7)
    par_hi = scalar_params(0.8, 0.8)
    noise = NoiseConfig(0.1, 0.01)
    env = gamma_envelopes([par_lo, par_hi], 4, noise)
    assert isinstance(env, GammaEnvelopes)
    eigs = [np.linalg.eigvalsh(gamma(p, 4, noise)) for p in (par_lo, par_hi)]
    assert env.lam_max == pytest.approx(max(e[-1] for e in eigs), abs=1e-15)
    assert env.lam_min == pytest.approx(min(e[0] for e in eigs), abs=1e-15)
    assert env.trace_max == pytest.approx(
        max(np.trace(gamma(p, 4, noise)) for p in (par_lo, par_hi)), abs=1e-15
    )
    assert env.lam_max >= env.lam_min
    assert env.t == 4


def test_gamma_envelopes_horizon_zero():
    env = gamma_envelopes([scalar_params(0.5, 0.7)], 0, NoiseConfig(0.1, 0.01))
    # at horizon zero the state block is empty of excitation
    assert env.lam_min == 0.0
    assert env.lam_max == pytest.approx(0.1, abs=1e-15)
