"""Scikit-learn estimator facade over the MLP trajectory-basis model.

``NeuralBasisRegressor`` follows the fit/predict/transform contract:
``fit(X, y)`` trains the network on row-major samples, ``transform`` returns
the learned hidden-layer features (the neural basis), and ``predict``
returns full network outputs. The wrapped column-major network is exposed
as ``network_`` for the predictive-control pipeline.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import mlp


class NeuralBasisRegressor(TransformerMixin, RegressorMixin, BaseEstimator):
    """MLP regressor whose last hidden layer doubles as a feature transform.

    Parameters mirror the training configuration; ``refit_output`` applies
    the closed-form least-squares refit of the output layer on the frozen
    hidden features after gradient training, which never increases the
    training fit cost.
    """

    def __init__(self, hidden_layer_sizes=(30,), activation="tanh",
                 learning_rate=1e-3, epochs=5000, batch_size=0,
                 normalize=True, refit_output=True, random_state=0,
                 report_every=100):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.normalize = normalize
        self.refit_output = refit_output
        self.random_state = random_state
        self.report_every = report_every

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = check_array(y, dtype=float, ensure_2d=False)
        if y.ndim == 1:
            y = y[:, None]
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} samples but y has {y.shape[0]}")
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = y.shape[1]

        cfg = mlp.TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
            report_every=self.report_every,
            normalize=self.normalize,
        )
        net = mlp.make_network(
            self.n_features_in_, tuple(self.hidden_layer_sizes), self.n_outputs_,
            activation=self.activation, seed=self.random_state,
        )
        net, history = mlp.train_nls(net, X.T, y.T, cfg)
        self.loss_history_ = history
        self.fit_cost_after_training_ = mlp.fit_cost(net, X.T, y.T)
        if self.refit_output:
            _, features = mlp.forward_columns(net, X.T)
            net, _, _ = mlp.refit_output_layer(net, features, y.T)
        self.network_ = net
        self.fit_cost_ = mlp.fit_cost(net, X.T, y.T)
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=float)
        out, _ = mlp.forward_columns(self.network_, X.T)
        pred = out.T
        return pred[:, 0] if self.n_outputs_ == 1 else pred

    def transform(self, X):
        """Hidden-layer features, one row per sample."""
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=float)
        _, features = mlp.forward_columns(self.network_, X.T)
        return features.T
