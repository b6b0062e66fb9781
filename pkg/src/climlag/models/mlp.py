"""Feed-forward tanh network regressor trained full-batch with Adam.

Inputs and target are standardized with training statistics inside the
network; :func:`forward` and :func:`predict` return values on the original
target scale. The training loss is mean squared error on the standardized
target plus ``l2 * sum(W**2)`` over weight matrices (biases excluded).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import AllRunsFailed, DimensionMismatch, NonFiniteLoss

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: tuple[int, ...] = (16,)
    learning_rate: float = 1e-2
    l2_penalty: float = 0.0
    max_iterations: int = 20000
    seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError("hidden layer widths must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.learning_rate > 0 or self.l2_penalty < 0:
            raise ValueError("learning_rate must be > 0 and l2_penalty >= 0")


DEFAULT_GRID = tuple(
    MlpConfig(h, lr, l2)
    for h, lr, l2 in itertools.product(((16,), (32, 16)), (1e-2, 1e-3), (0.0, 1e-4, 1e-3))
)


class MlpNetwork:
    """Layer weights stored as views into one flat parameter vector."""

    def __init__(self, sizes, theta=None, x_mean=None, x_scale=None, y_mean=0.0, y_scale=1.0):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        n_params = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        self.theta = np.zeros(n_params) if theta is None else np.array(theta, dtype=float)
        if self.theta.shape != (n_params,):
            raise DimensionMismatch(f"expected {n_params} parameters, got {self.theta.shape}")
        self.weights, self.biases = self._views(self.theta)
        d = self.sizes[0]
        self.x_mean = np.zeros(d) if x_mean is None else np.asarray(x_mean, dtype=float)
        self.x_scale = np.ones(d) if x_scale is None else np.asarray(x_scale, dtype=float)
        self.y_mean = float(y_mean)
        self.y_scale = float(y_scale)
        self.loss_history: list[float] = []

    def _views(self, flat):
        weights, biases = [], []
        i = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            weights.append(flat[i:i + a * b].reshape(a, b))
            i += a * b
            biases.append(flat[i:i + b])
            i += b
        return weights, biases

    @property
    def input_width(self) -> int:
        return self.sizes[0]

    @property
    def n_params(self) -> int:
        return self.theta.size

    def weight_mask(self) -> np.ndarray:
        mask = np.zeros_like(self.theta)
        for w in self._views(mask)[0]:
            w[...] = 1.0
        return mask

    def copy(self) -> "MlpNetwork":
        net = MlpNetwork(self.sizes, self.theta, self.x_mean, self.x_scale, self.y_mean, self.y_scale)
        net.loss_history = list(self.loss_history)
        return net

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpNetwork":
        net = cls(doc["sizes"], x_mean=doc["x_mean"], x_scale=doc["x_scale"],
                  y_mean=doc["y_mean"], y_scale=doc["y_scale"])
        for w, src in zip(net.weights, doc["weights"]):
            w[...] = np.asarray(src, dtype=float)
        for b, src in zip(net.biases, doc["biases"]):
            b[...] = np.asarray(src, dtype=float)
        return net

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MlpNetwork":
        return cls.from_dict(json.loads(text))


def _check_width(net: MlpNetwork, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != net.input_width:
        raise DimensionMismatch(f"network takes {net.input_width} inputs, got {X.shape[1]}")
    return X


def _forward_scaled(net: MlpNetwork, Xs):
    acts = [Xs]
    h = Xs
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return acts


def predict(net: MlpNetwork, X) -> np.ndarray:
    X = _check_width(net, X)
    out = _forward_scaled(net, (X - net.x_mean) / net.x_scale)[-1][:, 0]
    return out * net.y_scale + net.y_mean


def forward(net: MlpNetwork, x) -> float:
    """Prediction for one input vector, on the original target scale."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(predict(net, x[None, :])[0])


def loss(net: MlpNetwork, X, y, l2: float = 0.0) -> float:
    X = _check_width(net, X)
    ys = (np.asarray(y, dtype=float) - net.y_mean) / net.y_scale
    out = _forward_scaled(net, (X - net.x_mean) / net.x_scale)[-1][:, 0]
    penalty = sum(float(np.sum(W * W)) for W in net.weights)
    return float(np.mean((out - ys) ** 2) + l2 * penalty)


def _gradient_flat(net: MlpNetwork, Xs, ys, l2, grad):
    acts = _forward_scaled(net, Xs)
    n = len(ys)
    resid = acts[-1][:, 0] - ys
    gW, gb = net._views(grad)
    delta = (2.0 / n) * resid[:, None]
    for i in range(len(net.weights) - 1, -1, -1):
        gW[i][...] = acts[i].T @ delta + 2.0 * l2 * net.weights[i]
        gb[i][...] = delta.sum(axis=0)
        if i:
            delta = (delta @ net.weights[i].T) * (1.0 - acts[i] ** 2)
    penalty = sum(float(np.sum(W * W)) for W in net.weights)
    return float(np.mean(resid**2) + l2 * penalty)


def gradients(net: MlpNetwork, X, y, l2: float = 0.0):
    """Backpropagated gradient of :func:`loss`.

    Returns ``(weight_grads, bias_grads)`` shaped like the network's layers.
    """
    X = _check_width(net, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) != len(X):
        raise DimensionMismatch("X and y row counts differ")
    grad = np.zeros_like(net.theta)
    _gradient_flat(net, (X - net.x_mean) / net.x_scale, (y - net.y_mean) / net.y_scale, l2, grad)
    gW, gb = net._views(grad)
    return [g.copy() for g in gW], [g.copy() for g in gb]


def init_network(sizes, seed: int) -> MlpNetwork:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    net = MlpNetwork(sizes)
    for W in net.weights:
        fan_in, fan_out = W.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return net


def _scaler(a):
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


def train(config: MlpConfig, X_train, y_train) -> MlpNetwork:
    X = np.asarray(X_train, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y_train, dtype=float).reshape(-1)
    if len(X) < 2 or len(X) != len(y):
        raise DimensionMismatch("need at least 2 rows and matching X/y")
    x_mean, x_scale = _scaler(X)
    y_mean, y_scale = _scaler(y[:, None])
    net = init_network((X.shape[1],) + config.hidden_layers + (1,), config.seed)
    net.x_mean, net.x_scale = x_mean, x_scale
    net.y_mean, net.y_scale = float(y_mean[0]), float(y_scale[0])
    Xs = (X - x_mean) / x_scale
    ys = (y - net.y_mean) / net.y_scale

    theta = net.theta
    grad = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lr, l2 = config.learning_rate, config.l2_penalty
    history = []
    prev = np.inf
    b1t = b2t = 1.0
    for _ in range(config.max_iterations):
        current = _gradient_flat(net, Xs, ys, l2, grad)
        if not math.isfinite(current):
            raise NonFiniteLoss("training loss became non-finite")
        history.append(current)
        if abs(prev - current) < config.tol:
            break
        prev = current
        b1t *= ADAM_BETA1
        b2t *= ADAM_BETA2
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * grad * grad
        theta -= lr * (m / (1 - b1t)) / (np.sqrt(v / (1 - b2t)) + ADAM_EPS)
    history.append(_gradient_flat(net, Xs, ys, l2, grad))
    net.loss_history = history
    return net


@dataclass
class TuneResult:
    config: MlpConfig
    network: MlpNetwork
    table: list = field(default_factory=list)  # (config, validation RMSE or None, error)


def tune(grid, X_train, y_train, X_val, y_val) -> TuneResult:
    """Pick the config with the lowest validation RMSE.

    Ties go to fewer parameters, then to the lower learning rate.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty MLP grid")
    y_val = np.asarray(y_val, dtype=float)
    table, best, best_key = [], None, None
    for cfg in grid:
        try:
            net = train(cfg, X_train, y_train)
            pred = predict(net, X_val)
            rmse = float(np.sqrt(np.mean((pred - y_val) ** 2)))
            if not math.isfinite(rmse):
                raise NonFiniteLoss("non-finite validation error")
        except (NonFiniteLoss, DimensionMismatch, FloatingPointError) as exc:
            table.append((cfg, None, str(exc)))
            continue
        table.append((cfg, rmse, None))
        key = (rmse, net.n_params, cfg.learning_rate)
        if best_key is None or key < best_key:
            best, best_key = (cfg, net), key
    if best is None:
        raise AllRunsFailed("every MLP configuration failed")
    return TuneResult(best[0], best[1], table)


def config_to_dict(cfg: MlpConfig) -> dict:
    d = asdict(cfg)
    d["hidden_layers"] = list(cfg.hidden_layers)
    return d
