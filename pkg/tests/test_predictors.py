import numpy as np
import pytest

from ndeepc.errors import RankDeficiencyError
from ndeepc.hankel import TrajectoryData, build_hankel, build_online_regressor
from ndeepc.linalg import pseudo_inverse
from ndeepc.mlp import (forward, forward_columns, identity_network, make_network,
                        neural_data_matrix, refit_output_layer)
from ndeepc.predictors import (DeepcContext, equivalence_certificate, g_nls,
                               nls_predict, prepare_context, residual_matrix)


def pendulum_like_context(seed=0, samples=60, t_ini=2, horizon=3, width=6,
                          refit=True):
    """Small context over random smooth data with a random tanh net."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, samples)
    y = np.cumsum(u) * 0.1 + 0.05 * rng.standard_normal(samples)
    hankel = build_hankel(TrajectoryData(u=u, y=y), t_ini, horizon)
    net = make_network(hankel.regressor_dim, (width,), horizon, seed=seed)
    if refit:
        _, features = forward_columns(net, hankel.regressor)
        net, _, _ = refit_output_layer(net, features, hankel.y_future)
    return prepare_context(net, hankel), hankel


def synthetic_context(seed=0, feature_dim=4, columns=20, outputs=3):
    """Context built directly from a synthetic feature matrix so the future
    outputs can be constructed as an exact affine image of it."""
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((feature_dim, columns))
    aug = np.vstack([phi, np.ones((1, columns))])
    wb = rng.standard_normal((outputs, feature_dim + 1))
    yf = wb @ aug
    net = make_network(6, (feature_dim,), outputs, seed=seed)
    from ndeepc.linalg import nullspace_basis, singular_values
    ctx = DeepcContext(
        net=net, phi_data=phi, y_future=yf,
        pinv_augmented=pseudo_inverse(aug),
        null_basis=nullspace_basis(aug),
        min_singular_value=float(singular_values(aug)[-1]),
        m=1, p=1, t_ini=2, horizon=outputs,
    )
    return ctx, wb


def test_g_nls_square_invertible():
    rng = np.random.default_rng(1)
    phi = rng.standard_normal((3, 4))
    aug = np.vstack([phi, np.ones((1, 4))])
    assert abs(np.linalg.det(aug)) > 1e-6
    ctx, _ = synthetic_context(seed=1, feature_dim=3, columns=4)
    target = rng.standard_normal(3)
    g = g_nls(ctx, target)
    assert np.max(np.abs(ctx.augmented @ g - np.concatenate([target, [1.0]]))) < 1e-8


def test_g_nls_zero_feature_vector():
    ctx, _ = synthetic_context(seed=2)
    g = g_nls(ctx, np.zeros(ctx.feature_dim))
    assert np.allclose(g, ctx.pinv_augmented[:, -1])


def test_g_nls_reproduces_data_column_prediction():
    ctx, hankel = pendulum_like_context(seed=3)
    j = 5
    phi_j = ctx.phi_data[:, j]
    g = g_nls(ctx, phi_j)
    pred = ctx.y_future @ g
    net_pred = nls_predict(ctx.net, hankel.regressor[:, j])
    assert np.max(np.abs(pred - net_pred)) < 1e-8


def test_nls_predict_is_affine_readout():
    ctx, hankel = pendulum_like_context(seed=4)
    u_nn = hankel.regressor[:, 7] * 1.1
    y = nls_predict(ctx.net, u_nn)
    _, z = forward(ctx.net, u_nn)
    assert np.allclose(y, ctx.net.output.weight @ z + ctx.net.output.bias)


def test_nls_predict_equals_data_route_under_full_row_rank():
    # pseudo-inverse identity: the refit readout equals Y_f pinv([phi;1])
    ctx, hankel = pendulum_like_context(seed=5)
    ctx.require_full_row_rank()
    rng = np.random.default_rng(5)
    for _ in range(5):
        u_nn = rng.uniform(-1, 1, hankel.regressor_dim)
        _, z = forward(ctx.net, u_nn)
        data_route = ctx.y_future @ g_nls(ctx, z)
        assert np.max(np.abs(data_route - nls_predict(ctx.net, u_nn))) < 1e-8


def test_nls_predict_matches_subspace_predictor_on_lti():
    # identity feature map + refit = subspace least-squares predictor;
    # on noise-free LTI data both equal the true system response
    rng = np.random.default_rng(6)
    a = np.array([[0.8, 0.2], [-0.1, 0.85]])
    b = np.array([[0.5], [0.1]])
    c = np.array([[1.0, 0.3]])
    samples, t_ini, horizon = 80, 2, 3
    u = rng.uniform(-1, 1, samples)
    x = np.zeros(2)
    y = np.empty(samples)
    for k in range(samples):
        y[k] = (c @ x)[0]
        x = a @ x + b[:, 0] * u[k]
    hankel = build_hankel(TrajectoryData(u=u, y=y), t_ini, horizon)
    net = identity_network(hankel.regressor_dim, horizon)
    _, feats = forward_columns(net, hankel.regressor)
    net, _, _ = refit_output_layer(net, feats, hankel.y_future)

    # independent oracle: normal-equations subspace predictor
    aug = np.vstack([hankel.regressor, np.ones((1, hankel.columns))])
    theta = np.linalg.lstsq(aug.T, hankel.y_future.T, rcond=None)[0].T

    j = 11
    u_nn = hankel.regressor[:, j]
    pred = nls_predict(net, u_nn)
    oracle = theta @ np.concatenate([u_nn, [1.0]])
    truth = hankel.y_future[:, j]
    assert np.max(np.abs(pred - oracle)) < 1e-6
    assert np.max(np.abs(pred - truth)) < 1e-6


def test_residual_matrix_exact_affine_image():
    ctx, wb = synthetic_context(seed=7)
    resid = residual_matrix(ctx, wb[:, :-1], wb[:, -1])
    assert resid.values.shape == ctx.y_future.shape
    assert resid.frobenius < 1e-8


def test_residual_rows_orthogonal_to_data_rows():
    # least-squares orthogonality: residual times pinv of the fitted matrix
    ctx, hankel = pendulum_like_context(seed=8)
    resid = residual_matrix(ctx, ctx.net.output.weight, ctx.net.output.bias)
    projection = resid.values @ ctx.pinv_augmented
    assert np.max(np.abs(projection)) < 1e-8


def test_certificate_zero_residual_equivalent():
    ctx, wb = synthetic_context(seed=9)
    resid = residual_matrix(ctx, wb[:, :-1], wb[:, -1])
    report = equivalence_certificate(ctx, resid, tolerance=1e-8)
    assert report.certificate < 1e-8
    assert report.equivalent


def test_certificate_empty_null_space():
    # square invertible one-padded matrix: vacuously equivalent
    ctx, wb = synthetic_context(seed=10, feature_dim=3, columns=4)
    assert ctx.null_basis.shape[1] == 0
    resid = residual_matrix(ctx, wb[:, :-1] + 0.5, wb[:, -1])
    report = equivalence_certificate(ctx, resid)
    assert report.certificate == 0.0
    assert report.equivalent


def test_certificate_violating_direction_exhibited():
    ctx, wb = synthetic_context(seed=11)
    v = ctx.null_basis[:, 0]
    bump = np.array([0.5, -0.2, 0.1])
    ctx.y_future = ctx.y_future + np.outer(bump, v)
    # refit on the perturbed outputs: the perturbation lives in the null
    # space, so the readout is unchanged and the residual picks it all up
    wb_new = ctx.y_future @ ctx.pinv_augmented
    resid = residual_matrix(ctx, wb_new[:, :-1], wb_new[:, -1])
    report = equivalence_certificate(ctx, resid, tolerance=1e-6)
    assert not report.equivalent
    assert report.certificate > 1e-2
    ghat = report.worst_direction
    base = ctx.y_future @ g_nls(ctx, np.zeros(ctx.feature_dim))
    moved = ctx.y_future @ (g_nls(ctx, np.zeros(ctx.feature_dim)) + ghat)
    assert np.max(np.abs(moved - base)) > 1e-6


def test_certificate_rank_deficient_raises():
    ctx, wb = synthetic_context(seed=12)
    ctx.phi_data = np.vstack([ctx.phi_data, ctx.phi_data[-1]])  # duplicate row
    ctx.min_singular_value = 0.0
    resid = residual_matrix(ctx, np.hstack([wb[:, :-1], wb[:, :1] * 0]), wb[:, -1])
    with pytest.raises(RankDeficiencyError):
        equivalence_certificate(ctx, resid)


@pytest.mark.parametrize("seed", range(3))
def test_set_membership_property(seed):
    # any null-space shift still satisfies the interpolation constraints
    ctx, hankel = pendulum_like_context(seed=seed)
    rng = np.random.default_rng(seed + 100)
    u_nn = rng.uniform(-1, 1, hankel.regressor_dim)
    _, z = forward(ctx.net, u_nn)
    rhs = np.concatenate([z, [1.0]])
    g0 = g_nls(ctx, z)
    for _ in range(10):
        coeff = rng.standard_normal(ctx.null_basis.shape[1])
        g = g0 + ctx.null_basis @ coeff
        assert np.max(np.abs(ctx.augmented @ g - rhs)) < 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_output_shift_equals_residual_action(seed):
    # Y_f ghat == E ghat on the null space (key identity of the proof)
    ctx, _ = pendulum_like_context(seed=seed + 20)
    resid = residual_matrix(ctx, ctx.net.output.weight, ctx.net.output.bias)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        ghat = ctx.null_basis @ rng.standard_normal(ctx.null_basis.shape[1])
        lhs = ctx.y_future @ ghat
        rhs = resid.values @ ghat
        assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_certificate_report_roundtrip(tmp_path):
    ctx, wb = synthetic_context(seed=13)
    resid = residual_matrix(ctx, wb[:, :-1], wb[:, -1])
    report = equivalence_certificate(ctx, resid)
    path = tmp_path / "certificate.json"
    report.to_json(path)
    import json
    doc = json.loads(path.read_text())
    assert doc["equivalent"] is True
    assert doc["null_dimension"] == ctx.null_basis.shape[1]
