"""ReLU multilayer perceptron with activation recording and MAP training.

Parameters are flattened layer by layer as ``[W_0.ravel(), b_0, W_1.ravel(), b_1, ...]``
with each weight matrix in row-major order. The ``last_layer`` subset is the final
``[W.ravel(), b]`` block.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss

SUBSETS = ("last_layer", "all")
NET_FORMAT = "relugp.net"
NET_VERSION = 1


@dataclass
class ReluNet:
    """Feed-forward net: ReLU on every hidden layer, affine output."""

    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("need matching, non-empty weight and bias lists")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"layer {l}: weight {w.shape}, bias {b.shape}")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise DimensionMismatch(f"layer {l} input width does not chain")

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_representations(self) -> int:
        """Number of spaces the RGPR kernel sees: the input plus every hidden layer."""
        return len(self.weights)

    def n_params(self, subset: str = "all") -> int:
        layers = self._subset_layers(subset)
        return sum(self.weights[l].size + self.biases[l].size for l in layers)

    def _subset_layers(self, subset):
        if subset == "all":
            return range(len(self.weights))
        if subset == "last_layer":
            return range(len(self.weights) - 1, len(self.weights))
        raise ValueError(f"unknown parameter subset {subset!r}; use one of {SUBSETS}")

    def get_params(self, subset: str = "all") -> np.ndarray:
        layers = self._subset_layers(subset)
        return np.concatenate(
            [np.concatenate([self.weights[l].ravel(), self.biases[l]]) for l in layers]
        )

    def with_params(self, theta, subset: str = "all") -> "ReluNet":
        """Copy of the net with the selected parameters replaced by ``theta``."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params(subset),):
            raise DimensionMismatch(
                f"expected {self.n_params(subset)} parameters, got {theta.shape}"
            )
        weights = [w.copy() for w in self.weights]
        biases = [b.copy() for b in self.biases]
        pos = 0
        for l in self._subset_layers(subset):
            nw, nb = weights[l].size, biases[l].size
            weights[l] = theta[pos:pos + nw].reshape(weights[l].shape).copy()
            biases[l] = theta[pos + nw:pos + nw + nb].copy()
            pos += nw + nb
        return ReluNet(weights, biases)

    def copy(self) -> "ReluNet":
        return ReluNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_dict(self) -> dict:
        return {
            "format": NET_FORMAT,
            "version": NET_VERSION,
            "layer_dims": self.layer_dims,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReluNet":
        if d.get("format") != NET_FORMAT or d.get("version") != NET_VERSION:
            raise ValueError(f"not a {NET_FORMAT} v{NET_VERSION} record")
        dims = d["layer_dims"]
        weights = [
            np.asarray(w, dtype=np.float64).reshape(dims[l + 1], dims[l])
            for l, w in enumerate(d["weights"])
        ]
        return cls(weights, d["biases"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ReluNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ForwardTrace:
    """Post-ReLU representations ``h0 .. h_{L-1}`` (``h0`` is the input) and logits.

    Arrays keep whatever leading batch shape the input had.
    """

    activations: list
    logits: np.ndarray


@dataclass
class TrainConfig:
    prior_precision: float = 1e-2
    learning_rate: float = 1e-2
    epochs: int = 200
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.prior_precision <= 0 or self.learning_rate <= 0:
            raise ValueError("prior_precision and learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def init_net(layer_dims, rng: np.random.Generator) -> ReluNet:
    """He-uniform weights scaled by fan-in, zero biases."""
    weights, biases = [], []
    for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / n_in)
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return ReluNet(weights, biases)


def forward(net: ReluNet, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (net.n_inputs,):
        raise DimensionMismatch(f"expected {net.n_inputs} input dims, got {x.shape}")
    acts = [x]
    h = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
        acts.append(h)
    logits = h @ net.weights[-1].T + net.biases[-1]
    return ForwardTrace(acts, logits)


def jacobian(net: ReluNet, x, subset: str = "last_layer") -> np.ndarray:
    """Jacobian of the logits w.r.t. the selected parameters.

    For ``x`` of shape (M, N) returns (M, C, P); for a single vector, (C, P).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    layers = list(net._subset_layers(subset))
    acts = forward(net, X).activations
    M, C = X.shape[0], net.n_outputs

    delta = np.broadcast_to(np.eye(C), (M, C, C))
    blocks = []
    for l in range(len(net.weights) - 1, layers[0] - 1, -1):
        h = acts[l]
        dw = delta[:, :, :, None] * h[:, None, None, :]
        blocks.append(np.concatenate([dw.reshape(M, C, -1), delta], axis=2))
        if l > layers[0]:
            delta = (delta @ net.weights[l]) * (h > 0)[:, None, :]
    J = np.concatenate(blocks[::-1], axis=2)
    return J[0] if single else J


def grad_logit(net: ReluNet, x, class_index: int, subset: str = "last_layer") -> np.ndarray:
    if not 0 <= class_index < net.n_outputs:
        raise DimensionMismatch(f"class {class_index} outside 0..{net.n_outputs - 1}")
    return jacobian(net, np.asarray(x, dtype=np.float64), subset)[class_index]


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def data_loss(logits, targets, task: str):
    """Summed negative log-likelihood and its gradient w.r.t. the logits."""
    if task == "classification":
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        idx = np.arange(len(targets))
        loss = -logp[idx, targets].sum()
        grad = np.exp(logp)
        grad[idx, targets] -= 1.0
        return loss, grad
    resid = logits - np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    return 0.5 * np.sum(resid**2), resid


def loss_and_grad(net: ReluNet, X, targets, task: str):
    """Data loss summed over the rows of ``X`` and its gradient as a flat vector."""
    trace = forward(net, X)
    loss, delta = data_loss(trace.logits, targets, task)
    per_layer = [None] * len(net.weights)
    for l in range(len(net.weights) - 1, -1, -1):
        h = trace.activations[l]
        per_layer[l] = np.concatenate([(delta.T @ h).ravel(), delta.sum(axis=0)])
        if l:
            delta = (delta @ net.weights[l]) * (h > 0)
    return loss, np.concatenate(per_layer)


def map_objective(net: ReluNet, X, targets, task: str, prior_precision: float) -> float:
    """Negative log posterior up to a constant: summed data loss + lambda/2 |theta|^2."""
    loss, _ = loss_and_grad(net, X, targets, task)
    theta = net.get_params()
    return loss + 0.5 * prior_precision * float(theta @ theta)


def train_map(data, cfg: TrainConfig, layer_dims, rng: np.random.Generator,
              history: list | None = None) -> ReluNet:
    """MAP estimate by minibatch Adam on data loss plus the Gaussian prior term.

    The objective is divided by the dataset size so the learning rate is scale
    free; the minimizer is unchanged. If ``history`` is a list, the full-data MAP
    objective is appended after every epoch.
    """
    X, y = data.inputs, data.targets
    if layer_dims[0] != X.shape[1]:
        raise DimensionMismatch(f"net expects {layer_dims[0]} inputs, data has {X.shape[1]}")
    net = init_net(layer_dims, rng)
    if cfg.epochs == 0:
        return net
    M = X.shape[0]
    theta = net.get_params()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(M)
        for start in range(0, M, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, g = loss_and_grad(net, X[idx], y[idx], data.task)
            g = g / len(idx) + cfg.prior_precision / M * theta
            if not (np.isfinite(loss) and np.all(np.isfinite(g))):
                raise NonFiniteLoss("training loss or gradient is not finite")
            step += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**step)
            vhat = v / (1 - b2**step)
            theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
            net = net.with_params(theta)
        if history is not None:
            obj = map_objective(net, X, y, data.task, cfg.prior_precision)
            if not np.isfinite(obj):
                raise NonFiniteLoss("training objective is not finite")
            history.append(obj)
    return net


def accuracy(net: ReluNet, X, labels) -> float:
    return float(np.mean(np.argmax(forward(net, X).logits, axis=1) == labels))


def activation_pattern(net: ReluNet, x) -> np.ndarray:
    """Boolean on/off state of every hidden unit at ``x`` (concatenated)."""
    acts = forward(net, x).activations[1:]
    if not acts:
        return np.zeros(0, dtype=bool)
    return np.concatenate([h > 0 for h in acts], axis=-1)


def find_linear_region_scale(net: ReluNet, x, beta0: float = 1.0, max_doublings: int = 60) -> float:
    """Smallest doubling ``beta`` such that ``alpha * x`` keeps one activation
    pattern for alpha in {beta, 2 beta, 10 beta, 100 beta}."""
    beta = beta0
    for _ in range(max_doublings):
        pats = [activation_pattern(net, a * np.asarray(x)) for a in (beta, 2 * beta, 10 * beta, 100 * beta)]
        if all(np.array_equal(pats[0], p) for p in pats[1:]):
            return beta
        beta *= 2.0
    raise RuntimeError("no stable activation pattern found along the ray")


__all__ = [
    "ReluNet", "ForwardTrace", "TrainConfig", "init_net", "forward", "jacobian",
    "grad_logit", "softmax", "loss_and_grad", "map_objective", "train_map",
    "accuracy", "activation_pattern", "find_linear_region_scale", "SUBSETS",
]
