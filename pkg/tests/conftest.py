import numpy as np
import pytest

from ndeepc.controllers import make_linear_mode
from ndeepc.hankel import TrajectoryData, build_hankel
from ndeepc.mlp import TrainConfig, forward_columns, make_network, refit_output_layer, train_nls
from ndeepc.plant import PendulumParams, open_loop_rollout
from ndeepc.predictors import prepare_context
from ndeepc.signals import MultisineSpec, multisine


def make_pendulum_data(samples=70, seed=0, amplitude=2.0):
    spec = MultisineSpec(amplitude_range=(-amplitude, amplitude), period=samples,
                         num_sines=8, freq_trials=10, seed=seed)
    u = multisine(spec)
    params = PendulumParams()
    responses = open_loop_rollout(params, (0.0, 0.0), u)
    y = np.concatenate([[0.0], responses[:-1]])
    return TrajectoryData(u=u, y=y)


def make_trained_context(samples=70, t_ini=2, horizon=3, width=8, seed=0,
                         epochs=300):
    """Small pendulum context with a briefly trained tanh net + refit."""
    data = make_pendulum_data(samples=samples, seed=seed)
    hankel = build_hankel(data, t_ini, horizon)
    net = make_network(hankel.regressor_dim, (width,), hankel.p * horizon, seed=seed)
    net, _ = train_nls(net, hankel.regressor, hankel.y_future,
                       TrainConfig(epochs=epochs, report_every=max(1, epochs // 3),
                                   seed=seed))
    _, feats = forward_columns(net, hankel.regressor)
    net, _, _ = refit_output_layer(net, feats, hankel.y_future)
    return prepare_context(net, hankel), hankel


def simulate_lti(a, b, c, u, x0=None):
    x = np.zeros(a.shape[0]) if x0 is None else np.asarray(x0, dtype=float)
    y = np.empty(len(u))
    for k in range(len(u)):
        y[k] = float(c @ x)
        x = a @ x + b * u[k]
    return y, x


LTI_A = np.array([[0.85, 0.25], [-0.12, 0.9]])
LTI_B = np.array([0.4, 0.08])
LTI_C = np.array([1.0, 0.4])


def make_lti_context(samples=90, t_ini=2, horizon=4, seed=0):
    """Noise-free LTI data in identity-feature (linear) mode: exact predictor."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, samples)
    y, _ = simulate_lti(LTI_A, LTI_B, LTI_C, u)
    hankel = build_hankel(TrajectoryData(u=u, y=y), t_ini, horizon)
    return make_linear_mode(hankel), hankel


@pytest.fixture(scope="session")
def small_context():
    return make_trained_context()


@pytest.fixture(scope="session")
def lti_context():
    return make_lti_context()
