"""A minimal dense network with hand-written backprop, Adam, and a gradient checker.

Just enough machinery to train small heads on top of frozen embeddings.
Everything runs in float64.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight {self.weight.shape}"
            )


@dataclass
class DenseNet:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].weight.shape[1] != self.layers[k - 1].weight.shape[0]:
                raise ShapeError(f"layer {k} input width does not chain")
        for p in self.params():
            if not np.all(np.isfinite(p)):
                raise NumericError("non-finite network parameter")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def params(self) -> list:
        """Parameter arrays in layer order ``[W1, b1, W2, b2, ...]`` (live views)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    @classmethod
    def init(cls, sizes, activations, rng) -> "DenseNet":
        """Uniform(-1, 1)/sqrt(fan_in) weights, zero biases.

        ``sizes`` lists widths from input to output, ``activations`` has one
        entry per layer.
        """
        if len(activations) != len(sizes) - 1:
            raise ShapeError("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            w = rng.uniform(-1.0, 1.0, size=(fan_out, fan_in)) / np.sqrt(fan_in)
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)


@dataclass
class ForwardCache:
    net_id: int
    shapes: tuple
    inputs: list  # input to each layer
    preacts: list  # affine output of each layer


def _check_batch(net, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ShapeError(
            f"batch shape {batch.shape} incompatible with input_dim {net.input_dim}"
        )
    if not np.all(np.isfinite(batch)):
        raise NumericError("non-finite network input")
    return batch


def net_forward(net: DenseNet, batch):
    """Run the network on ``batch`` [n, input_dim]; returns ``(outputs, cache)``."""
    h = _check_batch(net, batch)
    inputs, preacts = [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        preacts.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    cache = ForwardCache(
        id(net), tuple(p.shape for p in net.params()), inputs, preacts
    )
    return h, cache


def net_backward(net: DenseNet, cache: ForwardCache, output_grad):
    """Backpropagate ``output_grad``; returns ``(param_grads, input_grad)``.

    ``param_grads`` follows the order of ``net.params()``.
    """
    if cache.net_id != id(net) or cache.shapes != tuple(p.shape for p in net.params()):
        raise ShapeError("cache was produced by a different network")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache.preacts[-1].shape:
        raise ShapeError(
            f"output_grad shape {g.shape} != output shape {cache.preacts[-1].shape}"
        )
    grads = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == "relu":
            g = g * (cache.preacts[k] > 0.0)
        grads[2 * k] = g.T @ cache.inputs[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return grads, g


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params, **hyper) -> "OptimizerState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        if state.lr <= 0:
            raise ShapeError("learning rate must be positive")
        return state


def adam_step(params, grads, state: OptimizerState):
    """One Adam update, in place on ``params`` and ``state``.

    Entries whose gradient is exactly zero keep their value (their moments
    still decay), so a zero gradient never moves a parameter.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} vs {np.shape(g)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= np.where(g != 0.0, update, 0.0)
    return params, state


@dataclass
class GradCheckReport:
    max_rel_errors: list
    passed: bool
    step: float
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_errors, default=0.0)


def relative_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def finite_diff_check(loss_evaluator, params, tolerance=1e-4, step=1e-4, floor=1e-6):
    """Compare analytic gradients against central differences, entry by entry.

    ``loss_evaluator(params)`` must return ``(loss, grads)`` with ``grads``
    aligned to ``params``. Parameters are perturbed in place and restored.
    """
    if step <= 0:
        raise ShapeError("finite-difference step must be positive")
    _, analytic = loss_evaluator(params)
    errors = []
    for p, a in zip(params, analytic):
        if not p.flags.c_contiguous:
            raise ShapeError("parameters must be C-contiguous to be perturbed in place")
        numeric = np.empty_like(p)
        flat = p.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_evaluator(params)[0]
            flat[i] = orig - step
            down = loss_evaluator(params)[0]
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss at perturbed entry {i}")
            nflat[i] = (up - down) / (2.0 * step)
        err = relative_error(a, numeric, floor)
        errors.append(float(err.max()) if err.size else 0.0)
    worst = max(errors, default=0.0)
    return GradCheckReport(errors, worst <= tolerance, step, tolerance)
