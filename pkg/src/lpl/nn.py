"""Dense MLPs with hand-written backprop, RMSProp, and seeded sampling.

Conventions: batches are rows, a layer computes ``act(x @ W + b)`` with ``W``
of shape ``(in_dim, out_dim)``, and everything is float64. Network parameters
are stored read-only; optimizers return new arrays instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError

ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "sigmoid")
RECTIFIERS = ("relu", "leaky_relu")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "identity"
    leak: float = 0.2

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.leak < 1.0:
            raise ConfigError(f"leak must lie in (0, 1), got {self.leak}")

    def to_dict(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim,
                "activation": self.activation, "leak": self.leak}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["in_dim"]), int(d["out_dim"]), d["activation"], float(d["leak"]))


def mlp_specs(dims, hidden="relu", output="identity", leak=0.2):
    """Layer specs for a chain ``dims[0] -> ... -> dims[-1]``."""
    if len(dims) < 2:
        raise ConfigError("need at least an input and an output dimension")
    n = len(dims) - 1
    return [
        LayerSpec(dims[i], dims[i + 1], output if i == n - 1 else hidden, leak)
        for i in range(n)
    ]


def _check_chain(specs):
    if not specs:
        raise ConfigError("network needs at least one layer")
    for k in range(len(specs) - 1):
        if specs[k].out_dim != specs[k + 1].in_dim:
            raise ConfigError(
                f"layer {k} out_dim={specs[k].out_dim} does not match "
                f"layer {k + 1} in_dim={specs[k + 1].in_dim}"
            )


def _frozen(a, shape=None):
    a = np.array(a, dtype=np.float64)
    if shape is not None and a.shape != shape:
        raise ShapeError(f"expected shape {shape}, got {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MlpNetwork:
    layers: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        _check_chain(layers)
        if len(self.weights) != len(layers) or len(self.biases) != len(layers):
            raise ShapeError("one weight matrix and one bias vector per layer")
        ws = tuple(_frozen(w, (s.in_dim, s.out_dim)) for s, w in zip(layers, self.weights))
        bs = tuple(_frozen(b, (s.out_dim,)) for s, b in zip(layers, self.biases))
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def params(self):
        """Flat parameter list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params):
        if len(params) != 2 * len(self.layers):
            raise ShapeError(f"expected {2 * len(self.layers)} parameter arrays, got {len(params)}")
        return MlpNetwork(self.layers, params[0::2], params[1::2])

    def equal(self, other):
        """Bitwise parameter and architecture equality."""
        return (
            self.layers == other.layers
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )

    def __call__(self, batch):
        return network_forward(self, batch)[0]


def compose(*nets):
    """The network computing ``nets[-1](...(nets[0](x)))`` as one MLP."""
    layers, weights, biases = [], [], []
    for net in nets:
        layers += net.layers
        weights += net.weights
        biases += net.biases
    return MlpNetwork(tuple(layers), tuple(weights), tuple(biases))


def init_network(specs, seed):
    """He-scaled Gaussian weights for rectifier layers, Xavier-scaled otherwise; zero biases."""
    specs = tuple(specs)
    _check_chain(specs)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for s in specs:
        gain = 2.0 if s.activation in RECTIFIERS else 1.0
        weights.append(rng.normal(0.0, np.sqrt(gain / s.in_dim), size=(s.in_dim, s.out_dim)))
        biases.append(np.zeros(s.out_dim))
    return MlpNetwork(specs, tuple(weights), tuple(biases))


# -- activations --------------------------------------------------------------


def _kind(kind):
    if isinstance(kind, LayerSpec):
        return kind.activation, kind.leak
    return kind, None


def activate(kind, pre, leak=0.2):
    kind, spec_leak = _kind(kind)
    leak = spec_leak if spec_leak is not None else leak
    if kind == "identity":
        return pre.copy()
    if kind == "relu":
        return np.maximum(pre, 0.0)
    if kind == "leaky_relu":
        return np.where(pre > 0.0, pre, leak * pre)
    if kind == "tanh":
        return np.tanh(pre)
    if kind == "sigmoid":
        # split form avoids overflow in exp for large |pre|
        e = np.exp(-np.abs(pre))
        return np.where(pre >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    raise ConfigError(f"unknown activation {kind!r}")


def apply_activation_grad(kind, pre_activation, leak=0.2):
    """Elementwise derivative of the activation at ``pre_activation``."""
    kind, spec_leak = _kind(kind)
    leak = spec_leak if spec_leak is not None else leak
    pre = np.asarray(pre_activation, dtype=np.float64)
    if kind == "identity":
        return np.ones_like(pre)
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(pre > 0.0, 1.0, leak)
    if kind == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = activate("sigmoid", pre)
        return s * (1.0 - s)
    raise ConfigError(f"unknown activation {kind!r}")


# -- forward / backward -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trace:
    net: MlpNetwork
    inputs: tuple
    pre: tuple
    post: tuple = field(repr=False)


def as_matrix(batch, cols=None):
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got ndim={a.ndim}")
    if cols is not None and a.shape[1] != cols:
        raise ShapeError(f"batch has {a.shape[1]} columns, expected {cols}")
    return a


def network_forward(net, batch):
    x = as_matrix(batch, net.in_dim)
    inputs, pres, posts = [], [], []
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        inputs.append(x)
        a = x @ w + b
        x = activate(spec, a)
        pres.append(a)
        posts.append(x)
    return x, Trace(net, tuple(inputs), tuple(pres), tuple(posts))


def network_backward(net, trace, output_grad, param_grads=True):
    """Backpropagate ``output_grad`` (dLoss/dOutput).

    Returns ``(grads, input_grad)`` where ``grads`` follows ``net.params``
    ordering, or is None when ``param_grads`` is False.
    """
    if trace.net is not net:
        raise ContractError("trace was produced by a different network; rerun forward")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != trace.post[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {trace.post[-1].shape}")
    grads = [None] * (2 * len(net.layers)) if param_grads else None
    for k in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[k]
        if spec.activation != "identity":
            g = g * apply_activation_grad(spec, trace.pre[k])
        if param_grads:
            grads[2 * k] = trace.inputs[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
        g = g @ net.weights[k].T
    return grads, g


# -- optimizer ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RmsPropState:
    accumulators: tuple
    decay: float = 0.9
    epsilon: float = 1e-8
    step_size: float = 3e-4

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ConfigError(f"decay must lie in (0, 1), got {self.decay}")
        if self.epsilon <= 0.0 or self.step_size <= 0.0:
            raise ConfigError("epsilon and step_size must be positive")

    @classmethod
    def zeros_like(cls, params, **kw):
        return cls(tuple(np.zeros_like(p, dtype=np.float64) for p in params), **kw)

    def replace(self, **kw):
        d = dict(accumulators=self.accumulators, decay=self.decay,
                 epsilon=self.epsilon, step_size=self.step_size)
        d.update(kw)
        return RmsPropState(**d)


def rmsprop_step(params, grads, state):
    """One RMSProp update. Returns ``(new_params, new_state)``.

    Non-finite gradients raise NumericError naming the layer, assuming the
    ``[W0, b0, W1, b1, ...]`` layout.
    """
    if len(params) != len(grads) or len(params) != len(state.accumulators):
        raise ShapeError("params, grads and accumulators must align")
    rho, eps, eta = state.decay, state.epsilon, state.step_size
    new_params, new_acc = [], []
    for i, (p, g, r) in enumerate(zip(params, grads, state.accumulators)):
        if p.shape != g.shape or p.shape != r.shape:
            raise ShapeError(f"parameter {i}: shapes {p.shape}, {g.shape}, {r.shape} differ")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in layer {i // 2}", layer=i // 2)
        r = rho * r + (1.0 - rho) * g * g
        new_acc.append(r)
        new_params.append(p - eta * g / (np.sqrt(r) + eps))
    return new_params, state.replace(accumulators=tuple(new_acc))


# -- sampling -----------------------------------------------------------------


def rng_for(*keys):
    """Generator keyed by a tuple of non-negative ints."""
    return np.random.default_rng([int(k) for k in keys])


def derive_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0] >> 1)


def gaussian_sample(rows, cols, mean=0.0, stddev=1.0, seed=0):
    if stddev < 0:
        raise ConfigError(f"stddev must be >= 0, got {stddev}")
    if stddev == 0:
        return np.full((rows, cols), float(mean))
    return np.random.default_rng(seed).normal(mean, stddev, size=(rows, cols))
