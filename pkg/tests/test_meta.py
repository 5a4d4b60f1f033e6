import numpy as np
import pytest

from metasysid.errors import NumericalError
from metasysid.meta import test_segment as holdout_segment
from metasysid.meta import (
    MetaDataset,
    assemble_design,
    generate_offline_dataset,
    inner_adapt,
    loss,
    meta_gradient,
    meta_objective,
    meta_solve_closed_form,
    meta_solve_gd,
    train_segment,
)
from metasysid.model import (
    FixedListSampler,
    IIDUniformSampler,
    NoiseConfig,
    RngStream,
    scalar_params,
)


def small_dataset(seed=0, d=5, length=8, train_len=3, sigma_w2=0.01):
    sampler = IIDUniformSampler(n=1, m=1, lo=0.5, hi=1.0)
    return generate_offline_dataset(
        d, length, train_len, sampler, NoiseConfig(0.1, sigma_w2), RngStream(seed)
    )


# -- dataset construction ----------------------------------------------------


def test_generate_offline_dataset_shapes():
    ds = small_dataset()
    assert ds.d_blocks == 5
    assert ds.length == 8 and ds.train_len == 3
    assert ds.n == 1 and ds.m == 1
    assert len(ds.params) == 5
    for block in ds.blocks:
        assert block.states.shape == (9, 1)
        assert block.states[0, 0] == 0.0  # offline blocks start at rest


def test_generate_offline_dataset_deterministic_and_prefix_stable():
    a = small_dataset(seed=3)
    b = small_dataset(seed=3)
    for x, y in zip(a.blocks, b.blocks):
        np.testing.assert_array_equal(x.states, y.states)
    # adding blocks must not disturb the ones already drawn
    longer = generate_offline_dataset(
        8, 8, 3,
        IIDUniformSampler(n=1, m=1, lo=0.5, hi=1.0),
        NoiseConfig(0.1, 0.01),
        RngStream(3),
    )
    for x, y in zip(a.blocks, longer.blocks):
        np.testing.assert_array_equal(x.states, y.states)


def test_dataset_validates_uniform_geometry():
    ds = small_dataset()
    with pytest.raises(ValueError):
        MetaDataset(blocks=(), params=())
    short = ds.blocks[0].with_train_len(2)
    with pytest.raises(ValueError):
        MetaDataset(blocks=(ds.blocks[0], short), params=ds.params[:2])


def test_stacked_collects_block_attribute():
    ds = small_dataset()
    stacked = ds.stacked("z_tr")
    assert stacked.shape == (5, 2, 3)
    np.testing.assert_array_equal(stacked[2], ds.blocks[2].z_tr)


# -- loss / inner step --------------------------------------------------------


def test_loss_hand_value():
    z = np.array([[1.0, 0.0], [0.0, 2.0]])
    x = np.array([[1.0, 1.0]])
    phi = np.zeros((2, 1))
    # residuals are exactly x, so the loss is 0.5 * (1 + 1)
    assert loss((z, x), phi) == pytest.approx(1.0)
    phi_exact = np.array([[1.0], [0.5]])
    assert loss((z, x), phi_exact) == pytest.approx(0.0, abs=1e-15)


def test_inner_adapt_is_one_gradient_step():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((3, 4))
    x = rng.standard_normal((2, 4))
    phi = rng.standard_normal((3, 2))
    alpha = 0.05
    got = inner_adapt(phi, (z, x), alpha)
    expect = phi - alpha * (z @ (z.T @ phi) - z @ x.T)
    np.testing.assert_allclose(got, expect, atol=1e-15)


def test_segments_match_trajectory_splits():
    ds = small_dataset()
    block = ds.blocks[0]
    z, x = train_segment(block)
    np.testing.assert_array_equal(z, block.z_tr)
    np.testing.assert_array_equal(x, block.x_tr)
    z, x = holdout_segment(block)
    np.testing.assert_array_equal(z, block.z_te)
    np.testing.assert_array_equal(x, block.x_te)


# -- design assembly ----------------------------------------------------------


def manual_design(ds, alpha):
    """Per-block reimplementation of the stacked design pieces."""
    p = ds.n + ds.m
    z_cols, pi_rows, w_rows = [], [], []
    for block, par in zip(ds.blocks, ds.params):
        shrink = np.eye(p) - alpha * block.z_tr @ block.z_tr.T
        z_d = shrink @ block.z_te
        z_cols.append(z_d)
        pi_rows.append(z_d.T @ par.phi)
        w_rows.append(block.w_te.T - alpha * block.z_te.T @ block.z_tr @ block.w_tr.T)
    return np.hstack(z_cols), np.vstack(pi_rows), np.vstack(w_rows)


def test_assemble_design_matches_manual_blocks():
    ds = small_dataset(d=4)
    alpha = 0.02
    design = assemble_design(ds, alpha)
    z_ref, pi_ref, w_ref = manual_design(ds, alpha)
    np.testing.assert_allclose(design.z, z_ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(design.pi, pi_ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(design.w, w_ref, rtol=1e-12, atol=1e-14)
    # the shifted-noise identity ties the three pieces together
    np.testing.assert_allclose(design.w_tilde, design.pi + design.w,
                               rtol=1e-10, atol=1e-12)


def test_assemble_design_block_major_layout():
    ds = small_dataset(d=3)
    design = assemble_design(ds, 0.01)
    t = ds.length - ds.train_len
    assert design.z.shape == (2, 3 * t)
    z_ref, _, _ = manual_design(ds, 0.01)
    np.testing.assert_allclose(design.z[:, :t], z_ref[:, :t], atol=1e-14)


def test_assemble_design_uses_dataset_alpha_default():
    sampler = FixedListSampler(params=(scalar_params(0.5, 0.7),))
    ds = generate_offline_dataset(1, 6, 2, sampler, NoiseConfig(0.1, 0.01),
                                  RngStream(0), )
    d2 = MetaDataset(blocks=ds.blocks, params=ds.params, alpha=0.03)
    got = assemble_design(d2, d2.alpha)
    ref = assemble_design(ds, 0.03)
    np.testing.assert_array_equal(got.z, ref.z)


# -- closed-form solution ------------------------------------------------------


def test_noiseless_meta_solution_recovers_truth():
    par = scalar_params(0.7, 1.0)
    sampler = FixedListSampler(params=(par, par))
    ds = generate_offline_dataset(2, 8, 3, sampler, NoiseConfig(0.1, 0.0),
                                  RngStream(4))
    phi_star = meta_solve_closed_form(ds, alpha=0.01)
    np.testing.assert_allclose(phi_star, par.phi, atol=1e-10)


def test_meta_solution_is_weighted_task_average_without_noise():
    # with w = 0 the closed form reduces to a matrix-weighted average of the
    # block parameters, weights Z_d Z_d^T
    tasks = (scalar_params(0.5, 0.7), scalar_params(0.8, 0.8),
             scalar_params(0.6, 1.0))
    ds = generate_offline_dataset(3, 8, 3, FixedListSampler(params=tasks),
                                  NoiseConfig(0.1, 0.0), RngStream(5))
    alpha = 0.02
    phi_star = meta_solve_closed_form(ds, alpha)

    design = assemble_design(ds, alpha)
    t = ds.length - ds.train_len
    total = np.zeros((2, 2))
    mix = np.zeros((2, 1))
    for d, par in enumerate(ds.params):
        z_d = design.z[:, d * t:(d + 1) * t]
        omega = z_d @ z_d.T
        total += omega
        mix += omega @ par.phi
    np.testing.assert_allclose(phi_star, np.linalg.solve(total, mix),
                               rtol=1e-9, atol=1e-11)


def test_closed_form_minimizes_objective():
    ds = small_dataset(seed=6)
    alpha = 0.01
    phi_star = meta_solve_closed_form(ds, alpha)
    base = meta_objective(ds, alpha, phi_star)
    rng = np.random.default_rng(0)
    for _ in range(5):
        bump = 1e-3 * rng.standard_normal(phi_star.shape)
        assert meta_objective(ds, alpha, phi_star + bump) > base


# -- objective and gradient ----------------------------------------------------


def test_meta_objective_composes_inner_step_and_loss():
    ds = small_dataset(seed=7)
    alpha = 0.03
    rng = np.random.default_rng(2)
    phi = rng.standard_normal((2, 1))
    direct = meta_objective(ds, alpha, phi)
    composed = sum(
        loss(holdout_segment(b), inner_adapt(phi, train_segment(b), alpha))
        for b in ds.blocks
    )
    assert direct == pytest.approx(composed, rel=1e-12)


def test_meta_gradient_matches_finite_differences():
    ds = small_dataset(seed=8, d=4)
    alpha = 0.02
    rng = np.random.default_rng(3)
    phi = rng.standard_normal((2, 1))
    grad = meta_gradient(ds, alpha, phi)
    h = 1e-6
    for i in range(2):
        for j in range(1):
            e = np.zeros_like(phi)
            e[i, j] = h
            fd = (meta_objective(ds, alpha, phi + e)
                  - meta_objective(ds, alpha, phi - e)) / (2 * h)
            assert grad[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_meta_gradient_equals_design_normal_equations():
    ds = small_dataset(seed=9)
    alpha = 0.01
    rng = np.random.default_rng(4)
    phi = rng.standard_normal((2, 1))
    design = assemble_design(ds, alpha)
    expect = design.z @ (design.z.T @ phi) - design.z @ design.w_tilde
    np.testing.assert_allclose(meta_gradient(ds, alpha, phi), expect,
                               rtol=1e-10, atol=1e-12)


def test_gradient_vanishes_at_closed_form_solution():
    ds = small_dataset(seed=10)
    phi_star = meta_solve_closed_form(ds, 0.01)
    grad = meta_gradient(ds, 0.01, phi_star)
    assert np.linalg.norm(grad) < 1e-10


# -- gradient descent solver ----------------------------------------------------


def test_gd_agrees_with_closed_form():
    ds = small_dataset(seed=11)
    phi_cf = meta_solve_closed_form(ds, 0.01)
    result = meta_solve_gd(ds, 0.01, steps=10_000)
    assert np.linalg.norm(result.phi - phi_cf) < 1e-8
    assert result.steps_run <= 10_000
    assert result.grad_norm < 1e-10
    assert result.objective == pytest.approx(meta_objective(ds, 0.01, result.phi),
                                             rel=1e-12)


def test_gd_diverges_with_oversized_rate():
    ds = small_dataset(seed=12)
    with pytest.raises(NumericalError, match="diverg"):
        meta_solve_gd(ds, 0.01, steps=500, lr=10.0)


def test_gd_early_stops_on_flat_gradient():
    par = scalar_params(0.7, 1.0)
    ds = generate_offline_dataset(2, 8, 3, FixedListSampler(params=(par, par)),
                                  NoiseConfig(0.1, 0.0), RngStream(13))
    result = meta_solve_gd(ds, 0.01, steps=100_000)
    assert result.steps_run < 100_000
