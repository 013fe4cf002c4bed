"""Multilayer perceptron with an exposed last-hidden-layer feature map.

The network is the pair (hidden composition, affine output layer): the
hidden composition maps a stacked past/future regressor into the feature
space whose dimension is the last hidden width, and the full network output
is always ``W_o @ features + b_o`` exactly. Training minimizes the squared
Frobenius fit of the columnwise network outputs against a target matrix
(gradient descent with Adam); a subsequent least-squares refit of the output
layer against the frozen hidden features can only improve that fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, TrainingError
from .linalg import DEFAULT_SV_CUTOFF, pseudo_inverse, singular_values

ACTIVATIONS = ("tanh", "linear")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise DimensionError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError("layer weight/bias shapes inconsistent")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise DimensionError("layer parameters must be finite")


@dataclass(frozen=True)
class MlpNetwork:
    hidden: tuple[Layer, ...]
    output: Layer

    def __post_init__(self):
        if not self.hidden:
            raise DimensionError("at least one hidden layer is required")
        dims = [l.weight.shape for l in self.hidden] + [self.output.weight.shape]
        for (rows, _), (_, cols_next) in zip(dims[:-1], dims[1:]):
            if rows != cols_next:
                raise DimensionError(f"chained layer dimensions mismatch: {dims}")
        if self.output.activation != "linear":
            raise DimensionError("output layer must be linear")

    @property
    def input_dim(self) -> int:
        return self.hidden[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.output.weight.shape[0]

    @property
    def feature_dim(self) -> int:
        """Width of the last hidden layer."""
        return self.hidden[-1].weight.shape[0]


def _act(name: str, x: np.ndarray) -> np.ndarray:
    return np.tanh(x) if name == "tanh" else x


def make_network(input_dim: int, hidden_sizes, output_dim: int,
                 activation: str = "tanh", seed: int = 0) -> MlpNetwork:
    """Glorot-uniform initialized network with zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden_sizes]
    hidden = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        hidden.append(Layer(
            weight=rng.uniform(-limit, limit, (fan_out, fan_in)),
            bias=np.zeros(fan_out),
            activation=activation,
        ))
    limit = np.sqrt(6.0 / (sizes[-1] + output_dim))
    output = Layer(
        weight=rng.uniform(-limit, limit, (output_dim, sizes[-1])),
        bias=np.zeros(output_dim),
        activation="linear",
    )
    return MlpNetwork(hidden=tuple(hidden), output=output)


def identity_network(input_dim: int, output_dim: int) -> MlpNetwork:
    """Linear-activation wiring with identity hidden map (features == input).

    The output layer starts at zero; it is meant to be refit against data,
    after which the network is an affine map of the raw regressor.
    """
    hidden = (Layer(weight=np.eye(input_dim), bias=np.zeros(input_dim), activation="linear"),)
    output = Layer(weight=np.zeros((output_dim, input_dim)), bias=np.zeros(output_dim),
                   activation="linear")
    return MlpNetwork(hidden=hidden, output=output)


def forward_columns(net: MlpNetwork, x: np.ndarray):
    """Columnwise forward pass: returns (outputs, features) for (q, T) input."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != net.input_dim:
        raise DimensionError(f"input has {x.shape[0]} rows, network expects {net.input_dim}")
    a = x
    for layer in net.hidden:
        a = _act(layer.activation, layer.weight @ a + layer.bias[:, None])
    y = net.output.weight @ a + net.output.bias[:, None]
    return y, a


def forward(net: MlpNetwork, u_nn) -> tuple[np.ndarray, np.ndarray]:
    """Single-vector forward pass: (network output, hidden features)."""
    u_nn = np.asarray(u_nn, dtype=float).reshape(-1)
    y, z = forward_columns(net, u_nn[:, None])
    return y[:, 0], z[:, 0]


def hidden_features_and_jacobian(net: MlpNetwork, u_nn):
    """Hidden features and their Jacobian at ``u_nn``: ((L,), (L, q))."""
    u_nn = np.asarray(u_nn, dtype=float).reshape(-1)
    a = u_nn
    jac = None
    for layer in net.hidden:
        pre = layer.weight @ a + layer.bias
        jac = layer.weight if jac is None else layer.weight @ jac
        if layer.activation == "tanh":
            a = np.tanh(pre)
            jac = (1.0 - a**2)[:, None] * jac
        else:
            a = pre
    return a, jac


def hidden_jacobian(net: MlpNetwork, u_nn) -> np.ndarray:
    """Jacobian of the hidden feature map at ``u_nn``, shape (L, q)."""
    return hidden_features_and_jacobian(net, u_nn)[1]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 0           # 0 = full batch
    epochs: int = 5000
    seed: int = 0
    init: str = "glorot"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    report_every: int = 100
    normalize: bool = True
    tol: float = 1e-20            # stop early once the loss falls below this

    def validate(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.report_every < 1:
            raise DimensionError("training rates and counts must be positive")
        if self.batch_size < 0 or self.tol < 0:
            raise DimensionError("batch_size and tol must be >= 0")


def _params(net: MlpNetwork):
    layers = [*net.hidden, net.output]
    return [(l.weight.copy(), l.bias.copy(), l.activation) for l in layers]


def _to_net(params) -> MlpNetwork:
    layers = [Layer(weight=w, bias=b, activation=act) for w, b, act in params]
    return MlpNetwork(hidden=tuple(layers[:-1]), output=layers[-1])


def _standardize_stats(mat: np.ndarray):
    mean = mat.mean(axis=1)
    std = mat.std(axis=1)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _unfold_normalization(params, in_mean, in_std, out_mean, out_std):
    """Rewrite raw-space parameters for standardized inputs/targets."""
    w1, b1, act1 = params[0]
    params[0] = (w1 * in_std[None, :], b1 + w1 @ in_mean, act1)
    wo, bo, acto = params[-1]
    params[-1] = (wo / out_std[:, None], (bo - out_mean) / out_std, acto)
    return params


def _fold_normalization(params, in_mean, in_std, out_mean, out_std):
    """Inverse of :func:`_unfold_normalization` (exact)."""
    w1, b1, act1 = params[0]
    params[0] = (w1 / in_std[None, :], b1 - (w1 / in_std[None, :]) @ in_mean, act1)
    wo, bo, acto = params[-1]
    params[-1] = (wo * out_std[:, None], bo * out_std + out_mean, acto)
    return params


def training_loss(params, x: np.ndarray, y: np.ndarray) -> float:
    """Mean-squared fit cost of the columnwise network outputs."""
    out = x
    for w, b, act in params[:-1]:
        out = _act(act, w @ out + b[:, None])
    w, b, _ = params[-1]
    out = w @ out + b[:, None]
    return float(np.mean((out - y) ** 2))


def loss_and_gradients(params, x: np.ndarray, y: np.ndarray):
    """Backpropagation through the columnwise mean-squared fit cost."""
    acts = [x]
    a = x
    for w, b, act in params[:-1]:
        a = _act(act, w @ a + b[:, None])
        acts.append(a)
    wo, bo, _ = params[-1]
    out = wo @ a + bo[:, None]
    resid = out - y
    loss = float(np.mean(resid**2))

    scale = 2.0 / resid.size
    grads = [None] * len(params)
    delta = scale * resid
    grads[-1] = (delta @ acts[-1].T, delta.sum(axis=1))
    delta = wo.T @ delta
    for i in range(len(params) - 2, -1, -1):
        w, _, act = params[i]
        if act == "tanh":
            delta = delta * (1.0 - acts[i + 1] ** 2)
        grads[i] = (delta @ acts[i].T, delta.sum(axis=1))
        if i > 0:
            delta = w.T @ delta
    return loss, grads


def fit_cost(net: MlpNetwork, x: np.ndarray, y: np.ndarray) -> float:
    """Squared Frobenius norm of the columnwise fit residual."""
    out, _ = forward_columns(net, x)
    return float(np.sum((out - np.asarray(y, dtype=float)) ** 2))


def train_nls(net: MlpNetwork, x: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """Train all weights and biases on the columnwise fit of ``y`` against ``x``.

    Returns ``(trained network, history)`` where history is a list of
    ``(epoch, training mse)`` pairs recorded every ``report_every`` epochs
    (epoch 0 and the final epoch always included). Deterministic per seed.
    Raises :class:`TrainingError` when the loss turns non-finite.
    """
    cfg.validate()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"{x.shape[1]} regressor columns vs {y.shape[1]} target columns")
    if x.shape[0] != net.input_dim or y.shape[0] != net.output_dim:
        raise DimensionError("network dimensions do not match the data matrices")

    params = _params(net)
    if cfg.normalize:
        in_mean, in_std = _standardize_stats(x)
        out_mean, out_std = _standardize_stats(y)
        params = _unfold_normalization(params, in_mean, in_std, out_mean, out_std)
        x = (x - in_mean[:, None]) / in_std[:, None]
        y = (y - out_mean[:, None]) / out_std[:, None]

    rng = np.random.default_rng(cfg.seed)
    adam_m = [(np.zeros_like(w), np.zeros_like(b)) for w, b, _ in params]
    adam_v = [(np.zeros_like(w), np.zeros_like(b)) for w, b, _ in params]
    t_cols = x.shape[1]
    batch = cfg.batch_size if 0 < cfg.batch_size < t_cols else 0
    history = [(0, training_loss(params, x, y))]
    step = 0

    if history[0][1] <= cfg.tol:
        if cfg.normalize:
            params = _fold_normalization(params, in_mean, in_std, out_mean, out_std)
        return _to_net(params), history

    for epoch in range(1, cfg.epochs + 1):
        if batch:
            order = rng.permutation(t_cols)
            slices = [order[i:i + batch] for i in range(0, t_cols, batch)]
        else:
            slices = [slice(None)]
        loss = np.nan
        for sel in slices:
            loss, grads = loss_and_gradients(params, x[:, sel], y[:, sel])
            if not np.isfinite(loss):
                raise TrainingError(f"training loss diverged at epoch {epoch}", epoch=epoch)
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for i, (gw, gb) in enumerate(grads):
                w, b, act = params[i]
                mw, mb = adam_m[i]
                vw, vb = adam_v[i]
                mw = cfg.beta1 * mw + (1 - cfg.beta1) * gw
                mb = cfg.beta1 * mb + (1 - cfg.beta1) * gb
                vw = cfg.beta2 * vw + (1 - cfg.beta2) * gw**2
                vb = cfg.beta2 * vb + (1 - cfg.beta2) * gb**2
                adam_m[i] = (mw, mb)
                adam_v[i] = (vw, vb)
                w = w - cfg.learning_rate * (mw / c1) / (np.sqrt(vw / c2) + cfg.eps)
                b = b - cfg.learning_rate * (mb / c1) / (np.sqrt(vb / c2) + cfg.eps)
                params[i] = (w, b, act)
        current = training_loss(params, x, y) if batch else loss
        if epoch % cfg.report_every == 0 or epoch == cfg.epochs:
            history.append((epoch, current))
        if current <= cfg.tol:
            if history[-1][0] != epoch:
                history.append((epoch, current))
            break

    if cfg.normalize:
        params = _fold_normalization(params, in_mean, in_std, out_mean, out_std)
    return _to_net(params), history


def refit_output_layer(net: MlpNetwork, features: np.ndarray, y: np.ndarray,
                       sv_cutoff: float = DEFAULT_SV_CUTOFF):
    """Least-squares refit of the output layer on frozen hidden features.

    ``features`` is the (L, T) matrix of hidden features per data column.
    Returns ``(refit network, W_o, b_o)`` with
    ``[W_o b_o] = y @ pinv([features; 1])``.
    """
    phi = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if phi.shape[0] != net.feature_dim:
        raise DimensionError(f"feature matrix has {phi.shape[0]} rows, expected {net.feature_dim}")
    if phi.shape[1] != y.shape[1]:
        raise DimensionError("feature and target column counts differ")
    aug = np.vstack([phi, np.ones((1, phi.shape[1]))])
    wb = y @ pseudo_inverse(aug, sv_cutoff)
    w_o, b_o = wb[:, :-1], wb[:, -1]
    refit = MlpNetwork(hidden=net.hidden, output=Layer(weight=w_o, bias=b_o, activation="linear"))
    return refit, w_o, b_o


@dataclass
class NeuralDataMatrix:
    """Hidden features of every data column plus rank diagnostics.

    ``phi`` has one column per regressor column; the diagnostics refer to
    the one-padded matrix ``[phi; 1]`` used by the interpolation algebra.
    """

    phi: np.ndarray
    min_singular_value: float
    full_row_rank: bool
    sv_cutoff: float = DEFAULT_SV_CUTOFF

    @property
    def augmented(self) -> np.ndarray:
        return np.vstack([self.phi, np.ones((1, self.phi.shape[1]))])

    @property
    def columns(self) -> int:
        return self.phi.shape[1]


def neural_data_matrix(net: MlpNetwork, regressors: np.ndarray,
                       sv_cutoff: float = DEFAULT_SV_CUTOFF) -> NeuralDataMatrix:
    """Apply the hidden feature map columnwise and report rank diagnostics."""
    _, phi = forward_columns(net, regressors)
    aug = np.vstack([phi, np.ones((1, phi.shape[1]))])
    svals = singular_values(aug)
    min_sv = float(svals[-1]) if svals.size else 0.0
    full = bool(svals.size and min_sv > sv_cutoff * float(svals[0]))
    return NeuralDataMatrix(phi=phi, min_singular_value=min_sv, full_row_rank=full,
                            sv_cutoff=sv_cutoff)


def save_network(net: MlpNetwork, path, meta: dict | None = None):
    """Structured text (JSON) weight file: dims, activations, row-major arrays."""
    def layer_dict(layer: Layer):
        return {
            "activation": layer.activation,
            "rows": layer.weight.shape[0],
            "cols": layer.weight.shape[1],
            "weight": [float(v) for v in layer.weight.reshape(-1)],
            "bias": [float(v) for v in layer.bias],
        }

    doc = {
        "format": "ndeepc-weights",
        "version": 1,
        "hidden": [layer_dict(l) for l in net.hidden],
        "output": layer_dict(net.output),
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_network(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "ndeepc-weights":
        raise DimensionError(f"{path} is not a ndeepc weight file")

    def to_layer(d):
        w = np.asarray(d["weight"], dtype=float).reshape(d["rows"], d["cols"])
        return Layer(weight=w, bias=np.asarray(d["bias"], dtype=float),
                     activation=d["activation"])

    net = MlpNetwork(
        hidden=tuple(to_layer(d) for d in doc["hidden"]),
        output=to_layer(doc["output"]),
    )
    return net, doc.get("meta", {})
