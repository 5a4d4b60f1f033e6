import math

import numpy as np
import pytest

from metasysid.control import LqrWeights, cec_gain, is_stabilizing, lqr_cost_empirical
from metasysid.errors import InstabilityError
from metasysid.linalg import spectral_radius
from metasysid.model import RngStream, SystemParams, scalar_params


def test_weights_require_positive_definite():
    with pytest.raises(ValueError):
        LqrWeights(s=np.zeros((2, 2)), r=np.eye(1))
    with pytest.raises(ValueError):
        LqrWeights(s=np.eye(2), r=-np.eye(1))
    w = LqrWeights.identity(2, 1)
    np.testing.assert_array_equal(w.s, np.eye(2))
    np.testing.assert_array_equal(w.r, np.eye(1))


def test_cec_gain_scalar_golden_ratio():
    # a = b = s = r = 1: the Riccati fixed point is the golden ratio and
    # the gain is k = -p/(1+p) = -(sqrt(5)-1)/2
    k = cec_gain(np.eye(1), np.eye(1), LqrWeights.identity(1, 1))
    assert k.shape == (1, 1)
    assert k[0, 0] == pytest.approx(-(math.sqrt(5.0) - 1.0) / 2.0, abs=1e-12)


def test_cec_gain_zero_dynamics_needs_no_control():
    k = cec_gain(np.zeros((2, 2)), np.eye(2), LqrWeights.identity(2, 2))
    np.testing.assert_allclose(k, np.zeros((2, 2)), atol=1e-12)


def test_cec_gain_stabilizes_random_batch():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n)) + np.eye(n)  # full actuation
        k = cec_gain(a, b, LqrWeights.identity(n, n))
        ok, radius = is_stabilizing(a, b, k)
        assert ok
        assert radius < 1.0


def test_is_stabilizing_reports_radius():
    ok, radius = is_stabilizing(np.array([[0.9]]), np.array([[1.0]]),
                                np.array([[-0.4]]))
    assert ok and radius == pytest.approx(0.5)
    ok, radius = is_stabilizing(np.array([[1.5]]), np.array([[1.0]]),
                                np.array([[0.0]]))
    assert not ok and radius == pytest.approx(1.5)


def test_empirical_cost_matches_stationary_closed_form():
    # closed loop a + b k = 0.5: stationary state variance sigma_w2/(1-0.25),
    # per-stage cost (s + r k^2) Var(x)
    par = scalar_params(0.7, 1.0)
    gain = np.array([[-0.2]])
    sigma_w2 = 0.04
    cost = lqr_cost_empirical(par, gain, LqrWeights.identity(1, 1),
                              horizon=10_000, sigma_w2=sigma_w2, trials=200,
                              rng=RngStream(0).child("cost"))
    expect = (1.0 + 0.04) * sigma_w2 / (1.0 - 0.25)
    assert cost == pytest.approx(expect, rel=0.03)


def test_empirical_cost_deterministic_per_stream():
    par = scalar_params(0.7, 1.0)
    gain = np.array([[-0.2]])
    kwargs = dict(horizon=50, sigma_w2=0.01, trials=8)
    a = lqr_cost_empirical(par, gain, LqrWeights.identity(1, 1),
                           rng=RngStream(1).child("c"), **kwargs)
    b = lqr_cost_empirical(par, gain, LqrWeights.identity(1, 1),
                           rng=RngStream(1).child("c"), **kwargs)
    assert a == b


def test_empirical_cost_rejects_unstable_loop():
    par = scalar_params(1.2, 1.0)
    with pytest.raises(InstabilityError):
        lqr_cost_empirical(par, np.zeros((1, 1)), LqrWeights.identity(1, 1),
                           horizon=10, sigma_w2=0.01, trials=2,
                           rng=RngStream(2).child("d"))


def test_empirical_cost_zero_noise_is_free_from_rest():
    par = scalar_params(0.7, 1.0)
    cost = lqr_cost_empirical(par, np.array([[-0.2]]), LqrWeights.identity(1, 1),
                              horizon=100, sigma_w2=0.0, trials=3,
                              rng=RngStream(3).child("e"))
    assert cost == 0.0


def test_cec_cost_beats_open_loop_on_marginal_system():
    # for a = 0.95 leaving the loop open is stable but expensive; the LQR
    # gain should cut the long-run cost
    par = scalar_params(0.95, 1.0)
    weights = LqrWeights.identity(1, 1)
    k = cec_gain(par.a, par.b, weights)
    tuned = lqr_cost_empirical(par, k, weights, horizon=2_000, sigma_w2=0.01,
                               trials=50, rng=RngStream(4).child("f"))
    lazy = lqr_cost_empirical(par, np.zeros((1, 1)), weights, horizon=2_000,
                              sigma_w2=0.01, trials=50,
                              rng=RngStream(4).child("f"))
    assert tuned < lazy


def test_gain_synthesised_from_estimate_tracks_estimate_error():
    # certainty equivalence: the gain computed from a slightly wrong model
    # still stabilizes the true system
    par = SystemParams(a=np.array([[0.9, 0.2], [0.0, 0.8]]),
                       b=np.array([[1.0], [0.5]]))
    rng = np.random.default_rng(5)
    for _ in range(20):
        a_hat = par.a + 0.05 * rng.standard_normal((2, 2))
        b_hat = par.b + 0.05 * rng.standard_normal((2, 1))
        k = cec_gain(a_hat, b_hat, LqrWeights.identity(2, 1))
        assert spectral_radius(par.a + par.b @ k) < 1.0
