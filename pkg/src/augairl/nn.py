"""Dense networks with hand-written reverse and forward mode derivatives.

Parameters of an :class:`MlpNet` live in one contiguous float64 vector.  The
per-layer weight matrices and bias vectors are views into it, so the flat
vector *is* the network state.  Ordering is layer-major; inside a layer the
weight matrix of shape ``(fan_in, fan_out)`` comes first (row-major), then the
bias of length ``fan_out``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: Tuple[int, ...]
    output_dim: int
    hidden_activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if len(self.hidden_dims) < 1:
            raise ValueError("hidden_dims must contain at least one layer")
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {ACTIVATIONS}")

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(name, z, a):
    # derivative of the activation expressed with both pre- and post-activation
    if name == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(z.dtype)


class MlpNet:
    """Fully connected network ``input -> hidden... -> linear output``."""

    def __init__(self, spec: MlpSpec, params: Optional[np.ndarray] = None):
        self.spec = spec
        self.params = np.zeros(spec.n_params, dtype=np.float64)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        offset = 0
        for fan_in, fan_out in spec.layer_dims:
            w = self.params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.params[offset:offset + fan_out]
            offset += fan_out
            self.weights.append(w)
            self.biases.append(b)
        if params is not None:
            self.set_flat_params(params)

    @classmethod
    def initialize(cls, spec: MlpSpec, rng: np.random.Generator, last_layer_scale: float = 1.0):
        """Glorot-uniform weights, zero biases."""
        net = cls(spec)
        n_layers = len(net.weights)
        for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            if k == n_layers - 1:
                w *= last_layer_scale
            net.weights[k][...] = w
        return net

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "MlpNet":
        return MlpNet(self.spec, self.params.copy())

    def get_flat_params(self) -> np.ndarray:
        return self.params.copy()

    def set_flat_params(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_params,):
            raise ValueError(
                f"parameter vector has shape {values.shape}, expected ({self.n_params},)")
        self.params[...] = values

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"input has shape {x.shape}, expected (n, {self.spec.input_dim})")
        return x

    def forward(self, x, return_cache: bool = False):
        """Evaluate the network on a batch (or a single row).

        Returns an ``(n, output_dim)`` array; with ``return_cache`` also the
        list of ``(input, pre_activation, activation)`` per hidden layer needed
        by :meth:`backward`.
        """
        x = self._check_input(x)
        act = self.spec.hidden_activation
        cache = []
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k == last:
                out = z
            else:
                a = _act(act, z)
                cache.append((h, z, a))
                h = a
        if return_cache:
            cache.append((h, None, None))
            return out, cache
        return out

    def backward(self, cache, output_grad) -> Tuple[np.ndarray, np.ndarray]:
        """Gradient of ``sum(output * output_grad)`` w.r.t. parameters and input."""
        g = np.asarray(output_grad, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        act = self.spec.hidden_activation
        grad = np.zeros(self.n_params)
        views_w, views_b = _views(self.spec, grad)
        n_layers = len(self.weights)
        for k in range(n_layers - 1, -1, -1):
            h_in = cache[k][0] if k < n_layers - 1 else cache[-1][0]
            views_w[k][...] = h_in.T @ g
            views_b[k][...] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                _, z, a = cache[k - 1]
                g = g * _act_grad(act, z, a)
        return grad, g

    def jvp(self, x, direction) -> Tuple[np.ndarray, np.ndarray]:
        """Forward-mode product: output and its directional derivative along ``direction``."""
        x = self._check_input(x)
        direction = np.asarray(direction, dtype=np.float64)
        if direction.shape != (self.n_params,):
            raise ValueError("direction must match the parameter count")
        dws, dbs = _views(self.spec, direction)
        act = self.spec.hidden_activation
        h = x
        dh = np.zeros_like(x)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            dz = dh @ w + h @ dws[k] + dbs[k]
            if k == last:
                return z, dz
            a = _act(act, z)
            dh = dz * _act_grad(act, z, a)
            h = a
        raise AssertionError("unreachable")


def _views(spec: MlpSpec, flat: np.ndarray):
    ws, bs = [], []
    offset = 0
    for fan_in, fan_out in spec.layer_dims:
        ws.append(flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        bs.append(flat[offset:offset + fan_out])
        offset += fan_out
    return ws, bs


def forward(net: MlpNet, x) -> np.ndarray:
    out = net.forward(x)
    return out[0] if np.ndim(x) == 1 else out


def backward(net: MlpNet, x, output_grad) -> Tuple[np.ndarray, np.ndarray]:
    _, cache = net.forward(x, return_cache=True)
    param_grad, input_grad = net.backward(cache, output_grad)
    return param_grad, (input_grad[0] if np.ndim(x) == 1 else input_grad)


def get_flat_params(net: MlpNet) -> np.ndarray:
    return net.get_flat_params()


def set_flat_params(net: MlpNet, values) -> None:
    net.set_flat_params(values)


# --- categorical distribution helpers -------------------------------------

def log_softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_logprob(logits, action):
    """``log softmax(logits)[action]``; broadcasts over a leading batch axis."""
    logp = log_softmax(logits)
    action = np.asarray(action)
    if logp.ndim == 1:
        return float(logp[int(action)])
    return np.take_along_axis(logp, action.astype(np.int64)[:, None], axis=1)[:, 0]


def categorical_kl(logits_p, logits_q):
    """KL(p || q) between categoricals given by logits."""
    logp = log_softmax(logits_p)
    logq = log_softmax(logits_q)
    kl = (np.exp(logp) * (logp - logq)).sum(axis=-1)
    kl = np.maximum(kl, 0.0)
    return float(kl) if np.ndim(kl) == 0 else kl


def categorical_entropy(logits):
    logp = log_softmax(logits)
    ent = -(np.exp(logp) * logp).sum(axis=-1)
    ent = np.maximum(ent, 0.0)
    return float(ent) if np.ndim(ent) == 0 else ent


@dataclass
class CategoricalPolicyOutput:
    logits: np.ndarray
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.probs = softmax(self.logits)


class Adam:
    """Adam on a flat parameter vector (updated in place)."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> np.ndarray:
        return np.concatenate([[float(self.t)], self.m, self.v])

    def load_state(self, flat: Sequence[float]) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        n = self.m.size
        if flat.size != 2 * n + 1:
            raise ValueError("optimizer state has the wrong length")
        self.t = int(flat[0])
        self.m[...] = flat[1:n + 1]
        self.v[...] = flat[n + 1:]
