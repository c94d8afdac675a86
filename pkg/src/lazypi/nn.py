"""Multilayer perceptron substrate: architectures, flat parameter vectors,
deterministic forward evaluation, and per-example parameter Jacobians.

All networks map R^p -> R (scalar regression output, linear output layer).
Parameters live in a single flat float64 vector so that downstream linear
algebra (clipping, noise addition, Gram solves) never has to know the layer
structure. The flattening order is [W1, b1, W2, b2, ..., W_out, b_out] with
each weight matrix stored row-major, W_l of shape (fan_out, fan_in).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import special


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_prime(z):
    # Subgradient at 0 fixed to 0 so Jacobians are deterministic.
    return (z > 0.0).astype(np.float64)


def _tanh_prime(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _sigmoid_prime(z):
    s = special.expit(z)
    return s * (1.0 - s)


ACTIVATIONS = {
    "relu": (_relu, _relu_prime),
    "tanh": (np.tanh, _tanh_prime),
    "sigmoid": (special.expit, _sigmoid_prime),
}

_ACTIVATIONS_INPLACE = {
    "relu": lambda z: np.maximum(z, 0.0, out=z),
    "tanh": lambda z: np.tanh(z, out=z),
    "sigmoid": lambda z: special.expit(z, out=z),
}


@dataclass(frozen=True)
class MlpArchitecture:
    """Shape of a scalar-output MLP.

    Parameters
    ----------
    input_dim : int
        Feature dimension p, must be >= 1.
    hidden_layers : tuple of int
        Widths of the hidden layers, e.g. (64, 64). May be empty, in which
        case the network is an affine map x -> w @ x + b.
    activation : str
        One of "relu", "tanh", "sigmoid"; applied after every hidden layer.
        The output layer is always linear.
    output_dim : int
        Fixed at 1 (scalar regression).
    """

    input_dim: int
    hidden_layers: tuple = ()
    activation: str = "relu"
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError(f"hidden layer widths must be >= 1, got {self.hidden_layers}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")
        if self.output_dim != 1:
            raise ValueError("output_dim is fixed at 1")

    @property
    def layer_dims(self):
        """Successive layer widths, input first: (p, h1, ..., hk, 1)."""
        return (self.input_dim, *self.hidden_layers, self.output_dim)

    @property
    def param_count(self):
        """Total number of weights plus biases, M."""
        dims = self.layer_dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))

    def fingerprint(self):
        """Stable hash of the architecture fields, used to pair parameter
        vectors with the architecture they were created for."""
        key = f"{self.input_dim}|{self.hidden_layers}|{self.activation}|{self.output_dim}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 parameter vector plus the fingerprint of its architecture."""

    values: np.ndarray
    arch_fingerprint: str

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"parameter vector must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector contains non-finite entries")
        if values.flags.writeable:
            # Freeze a private copy; never flip the caller's array read-only.
            values = values.copy()
            values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def size(self):
        return self.values.size


@dataclass(frozen=True)
class RegressionDataset:
    """Immutable (features, responses) pair with matching row counts."""

    features: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.responses, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1:
            raise ValueError(f"responses must be 1-D, got shape {y.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"row mismatch: {X.shape[0]} feature rows vs {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        if X.flags.writeable:
            X = X.copy()
            X.setflags(write=False)
        if y.flags.writeable:
            y = y.copy()
            y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def drop_row(self, j):
        """Dataset with row j removed (leave-one-out view)."""
        keep = np.arange(self.n) != j
        return RegressionDataset(self.features[keep], self.responses[keep])

    def subset(self, idx):
        return RegressionDataset(self.features[idx], self.responses[idx])


def _check_match(params: ParamVector, arch: MlpArchitecture):
    if params.size != arch.param_count:
        raise ValueError(
            f"parameter vector of length {params.size} does not match "
            f"architecture with M={arch.param_count}"
        )
    if params.arch_fingerprint != arch.fingerprint():
        raise ValueError("parameter vector was created for a different architecture")


def _unflatten(values: np.ndarray, arch: MlpArchitecture):
    """Split a flat vector into per-layer (W, b) views."""
    dims = arch.layer_dims
    layers = []
    pos = 0
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        W = values[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in)
        pos += fan_in * fan_out
        b = values[pos:pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


def _init_from_rng(arch: MlpArchitecture, rng: np.random.Generator) -> ParamVector:
    dims = arch.layer_dims
    chunks = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        W = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
        chunks.append(W.ravel())
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks), arch.fingerprint())


def init_params(arch: MlpArchitecture, seed: int) -> ParamVector:
    """Draw initial parameters: weights N(0, 1/fan_in), biases zero.

    Deterministic given (arch, seed); two calls with equal arguments return
    bit-identical vectors.
    """
    return _init_from_rng(arch, np.random.default_rng(seed))


def _forward_cached(layers, activation, X):
    """Forward pass keeping pre-activations and activations for backprop.

    Returns (predictions (n,), pre_activations per hidden layer, inputs per layer).
    """
    act, _ = ACTIVATIONS[activation]
    inputs = [X]
    pre_acts = []
    a = X
    for (W, b) in layers[:-1]:
        z = a @ W.T + b
        pre_acts.append(z)
        a = act(z)
        inputs.append(a)
    W_out, b_out = layers[-1]
    preds = a @ W_out.T + b_out
    return preds[:, 0], pre_acts, inputs


def batch_forward(params: ParamVector, arch: MlpArchitecture, X) -> np.ndarray:
    """Predictions for every row of X, shape (n,)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} features, got {X.shape[1]}")
    _check_match(params, arch)
    layers = _unflatten(params.values, arch)
    preds, _, _ = _forward_cached(layers, arch.activation, X)
    return preds


def forward(params: ParamVector, arch: MlpArchitecture, x) -> float:
    """Scalar prediction f(x; theta) for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single feature vector, got shape {x.shape}")
    return float(batch_forward(params, arch, x[None, :])[0])


def param_jacobian(params: ParamVector, arch: MlpArchitecture, X) -> np.ndarray:
    """Per-example gradients of the network output, shape (n, M).

    Row i is d f(X_i; theta) / d theta evaluated at ``params``, computed by
    reverse-mode backpropagation with one delta per example. Rows follow the
    same flattening order as ParamVector.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} features, got {X.shape[1]}")
    _check_match(params, arch)
    layers = _unflatten(params.values, arch)
    _, act_prime = ACTIVATIONS[arch.activation]
    _, pre_acts, inputs = _forward_cached(layers, arch.activation, X)

    n = X.shape[0]
    # Walk backwards accumulating per-layer gradient blocks, then assemble
    # them in forward order.
    blocks = [None] * len(layers)
    delta = np.ones((n, 1))  # d f / d (output pre-activation)
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        a_in = inputs[li]
        dW = np.einsum("no,ni->noi", delta, a_in)
        blocks[li] = (dW.reshape(n, -1), delta)
        if li > 0:
            delta = (delta @ W) * act_prime(pre_acts[li - 1])
    return np.concatenate([part for dW, db in blocks for part in (dW, db)], axis=1)


def loss_gradient(params: ParamVector, arch: MlpArchitecture, example) -> np.ndarray:
    """Gradient of the squared-error loss 0.5*(y - f(x; theta))^2 in theta.

    Equals (f(x; theta) - y) times the parameter Jacobian row at x.
    """
    x, y = example
    x = np.asarray(x, dtype=np.float64)
    row = param_jacobian(params, arch, x[None, :])[0]
    residual = forward(params, arch, x) - float(y)
    return residual * row


def batch_loss_gradients(params: ParamVector, arch: MlpArchitecture, X, y) -> np.ndarray:
    """Per-example squared-error loss gradients, shape (n, M).

    Shares one cached forward pass between the predictions and the backprop
    sweep, so each example costs a single forward plus a single backward.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} features, got {X.shape[1]}")
    _check_match(params, arch)
    layers = _unflatten(params.values, arch)
    _, act_prime = ACTIVATIONS[arch.activation]
    preds, pre_acts, inputs = _forward_cached(layers, arch.activation, X)

    n = X.shape[0]
    blocks = [None] * len(layers)
    delta = (preds - y)[:, None]
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        dW = np.einsum("no,ni->noi", delta, inputs[li])
        blocks[li] = (dW.reshape(n, -1), delta)
        if li > 0:
            delta = (delta @ W) * act_prime(pre_acts[li - 1])
    return np.concatenate([part for dW, db in blocks for part in (dW, db)], axis=1)


def batch_forward_many(params_list, arch: MlpArchitecture, X) -> np.ndarray:
    """Evaluate many same-architecture parameter vectors on one input matrix.

    Returns a (n_models, n_rows) matrix of predictions. The first layers of
    a chunk of models are fused into a single matrix product; deeper layers
    run one BLAS call per model into reused scratch buffers, so repeated
    large allocations never dominate the evaluation sweep.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} features, got {X.shape[1]}")
    for p in params_list:
        _check_match(p, arch)
    act_inplace = _ACTIVATIONS_INPLACE[arch.activation]
    dims = arch.layer_dims
    n_models, n_rows = len(params_list), X.shape[0]
    layered = [_unflatten(p.values, arch) for p in params_list]
    out = np.empty((n_models, n_rows))

    if len(dims) == 2:
        for j, layers in enumerate(layered):
            W, b = layers[0]
            out[j] = X @ W[0] + b[0]
        return out

    h1 = dims[1]
    chunk = max(1, min(n_models, int(64e6 / (8 * n_rows * h1)) or 1))
    fused = np.empty((n_rows, chunk * h1))
    scratch = {w: (np.empty((n_rows, w)), np.empty((n_rows, w))) for w in set(dims[1:-1])}
    for start in range(0, n_models, chunk):
        block = layered[start:start + chunk]
        W1_cat = np.concatenate([layers[0][0] for layers in block], axis=0)
        if W1_cat.shape[0] == fused.shape[1]:
            Z1 = fused
            np.dot(X, W1_cat.T, out=Z1)
        else:  # smaller final chunk
            Z1 = X @ W1_cat.T
        for k, layers in enumerate(block):
            a, flip = scratch[h1][0], 1
            np.add(Z1[:, k * h1:(k + 1) * h1], layers[0][1], out=a)
            act_inplace(a)
            for (W, b) in layers[1:-1]:
                nxt = scratch[W.shape[0]][flip]
                np.dot(a, W.T, out=nxt)
                np.add(nxt, b, out=nxt)
                act_inplace(nxt)
                a, flip = nxt, 1 - flip
            W_out, b_out = layers[-1]
            row = out[start + k]
            np.dot(a, W_out[0], out=row)
            row += b_out[0]
    return out
