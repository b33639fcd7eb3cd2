import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nettopo.dynamics import NoiseConfig, simulate_linear
from nettopo.errors import InvalidArgumentError, UpdateDegenerateError
from nettopo.estimators import (_householder_basis, causality_estimate, ols_estimate, recursive_init,
                                recursive_run, recursive_step)
from nettopo.topology import random_digraph, scale_to_asymptotic, weights_laplacian


def _setup(n=6, seed=0, s_up=1.0, horizon=400):
    w = scale_to_asymptotic(weights_laplacian(random_digraph(n, 0.4, seed)), 0.9)
    x0 = np.random.default_rng(seed).uniform(-10, 10, n)
    return w, simulate_linear(w, x0, horizon, NoiseConfig(1.0, s_up), seed)


def _batch_with_prior(traj, t, sigma, k0):
    zm, zp = traj.y[:, :t], traj.y[:, 1 : t + 1]
    a = zm @ zm.T - t * np.diag(np.broadcast_to(sigma, traj.n)) + np.eye(traj.n) / k0
    return np.linalg.solve(a.T, (zp @ zm.T).T).T


def test_init_values():
    state = recursive_init(3, 0.1, 100.0)
    np.testing.assert_array_equal(state.p_mat, 100.0 * np.eye(3))
    np.testing.assert_array_equal(state.w_hat_rows, np.zeros((3, 3)))
    assert state.t == 0 and len(state.p_mats) == 3
    for bad in (0.0, -1.0):
        with pytest.raises(InvalidArgumentError):
            recursive_init(3, 0.1, bad)
    with pytest.raises(InvalidArgumentError):
        recursive_init(3, [0.1, 0.2], 1.0)


@pytest.mark.parametrize("sigma", [0.0, 0.5, 1.0])
def test_recursion_equals_regularised_batch_exactly(sigma):
    _, traj = _setup(s_up=sigma)
    state = recursive_init(traj.n, sigma, 10.0)
    for t, state in enumerate(recursive_run(state, traj, stop=200), start=1):
        if t % 20 == 0:
            np.testing.assert_allclose(state.w_hat_rows, _batch_with_prior(traj, t, sigma, 10.0),
                                       rtol=1e-8, atol=1e-8)


def test_ols_branch_tracks_batch_ols():
    _, traj = _setup(s_up=0.0)
    state = recursive_init(traj.n, 0.0, 1e6)
    for t, state in enumerate(recursive_run(state, traj), start=1):
        if t >= 5 * traj.n:
            np.testing.assert_allclose(state.w_hat_rows, ols_estimate(traj.truncate(t)).w_hat, atol=1e-6)


def test_causality_branch_matches_batch_after_500_steps():
    _, traj = _setup(s_up=1.0, horizon=500)
    state = recursive_init(traj.n, 1.0, 1e6)
    for state in recursive_run(state, traj):
        pass
    batch = causality_estimate(traj, 1.0).w_hat
    rel = np.linalg.norm(state.w_hat_rows - batch, axis=1) / np.linalg.norm(batch, axis=1)
    assert np.max(rel) < 1e-4


def test_per_node_noise_matches_batch():
    sig = np.array([0.2, 0.4, 0.6, 0.8, 1.0, 0.3])
    _, traj = _setup(s_up=sig)
    state = recursive_init(traj.n, sig, 10.0)
    for state in recursive_run(state, traj, stop=150):
        pass
    np.testing.assert_allclose(state.w_hat_rows, _batch_with_prior(traj, 150, sig, 10.0), rtol=1e-8, atol=1e-8)


def test_zero_regressor_shrinks_p_deterministically():
    state = recursive_init(3, 0.5, 1.0)
    new = recursive_step(state, np.zeros(3), np.ones(3))
    np.testing.assert_allclose(new.p_mat, np.linalg.inv(np.eye(3) - 0.5 * np.eye(3)))
    # zero regressor: only the de-regularisation acts on a zero estimate
    np.testing.assert_array_equal(new.w_hat_rows, 0.0)


def test_degenerate_update_raises():
    state = recursive_init(2, 1.0, 1.0)
    with pytest.raises(UpdateDegenerateError):
        recursive_step(state, np.array([1.0, 0.0]), np.ones(2))


def test_step_validates_inputs_and_keeps_state():
    state = recursive_init(3, 0.5, 5.0)
    with pytest.raises(InvalidArgumentError):
        recursive_step(state, np.ones(2), np.ones(3))
    with pytest.raises(InvalidArgumentError):
        recursive_step(state, np.array([1.0, np.nan, 0.0]), np.ones(3))
    before = state.copy()
    after = recursive_step(state, np.array([1.0, 2.0, 3.0]), np.ones(3))
    np.testing.assert_array_equal(state.p_mat, before.p_mat)
    assert after.t == 1 and state.t == 0
    np.testing.assert_allclose(after.p_mat, after.p_mat.T, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(z=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_householder_basis_is_orthogonal_with_z_first(z):
    z = np.array(z)
    u = _householder_basis(z, np.linalg.norm(z))
    np.testing.assert_allclose(u.T @ u, np.eye(len(z)), atol=1e-12)
    np.testing.assert_allclose(u[:, 0], z / np.linalg.norm(z), atol=1e-12)
