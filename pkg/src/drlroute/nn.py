"""Dense networks in numpy: forward/backward, Adam, soft target updates, gradient checks.

Inputs are row-major batches, shape (batch, features); a 1-D vector is treated as
a batch of one. A layer computes ``act(x @ W.T + b)`` with ``W`` of shape (out, in).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity")


def _sigmoid(z):
    # split by sign to stay finite for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(kind, z, a, upstream):
    if kind == "relu":
        return upstream * (z > 0)
    if kind == "sigmoid":
        return upstream * a * (1.0 - a)
    return upstream


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent layer shapes W{self.W.shape} b{self.b.shape}")


@dataclass
class Mlp:
    layers: list[DenseLayer]

    def __post_init__(self):
        for i, (lo, hi) in enumerate(zip(self.layers, self.layers[1:])):
            if lo.W.shape[0] != hi.W.shape[1]:
                raise ValueError(f"layer {i} outputs {lo.W.shape[0]} but layer {i + 1} expects {hi.W.shape[1]}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].W.shape[1]] + [layer.W.shape[0] for layer in self.layers]

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Cache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)
    squeeze: bool = False


def forward(m: Mlp, x):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != m.layers[0].W.shape[1]:
        raise ValueError(f"input has {h.shape[1]} features, network expects {m.layers[0].W.shape[1]}")
    cache = Cache(squeeze=squeeze)
    for layer in m.layers:
        cache.inputs.append(h)
        z = h @ layer.W.T + layer.b
        h = _activate(layer.activation, z)
        cache.pre.append(z)
        cache.post.append(h)
    return (h[0] if squeeze else h), cache


def backward(m: Mlp, cache: Cache, output_gradient):
    """Gradients of a scalar given its gradient w.r.t. the network output.

    Returns ([dW0, db0, dW1, db1, ...], dx) with dx shaped like the forward input.
    """
    g = np.asarray(output_gradient, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.post[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} != output shape {cache.post[-1].shape}")
    grads: list[np.ndarray] = []
    for i in range(len(m.layers) - 1, -1, -1):
        layer = m.layers[i]
        dz = _activation_grad(layer.activation, cache.pre[i], cache.post[i], g)
        grads.append(dz.sum(axis=0))
        grads.append(dz.T @ cache.inputs[i])
        g = dz @ layer.W
    grads.reverse()
    return grads, (g[0] if cache.squeeze else g)


def init_mlp(dims, activations, seed) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    if isinstance(activations, str):
        activations = [activations] * (len(dims) - 1)
    if len(activations) != len(dims) - 1:
        raise ValueError("one activation per layer")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(DenseLayer(rng.uniform(-s, s, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return Mlp(layers)


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Bias-corrected adaptive-moment update, applied to ``params`` in place."""
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": None if self.m is None else [a.ravel().tolist() for a in self.m],
            "v": None if self.v is None else [a.ravel().tolist() for a in self.v],
        }


def optimizer_step(state: Adam, params, grads):
    state.step(params, grads)
    return params


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """target <- tau * source + (1 - tau) * target, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.dims != source.dims or target.activations != source.activations:
        raise ValueError("architectures differ")
    for pt, ps in zip(target.params(), source.params()):
        pt *= 1.0 - tau
        pt += tau * ps
    return target


def _forward_from(layers, start: int, z, base=None):
    """Finish a forward pass given the pre-activations ``z`` of layer ``start``.

    With ``base`` (unperturbed pre-activations of every layer) also return, per
    row, whether any ReLU ended up on the other side of its kink.
    """
    crossed = np.zeros(len(z), dtype=bool)
    h = None
    for i in range(start, len(layers)):
        W, b, act = layers[i]
        if i > start:
            z = h @ W.T + b
        if base is not None and act == "relu":
            crossed |= np.any((z > 0) != (base[i] > 0), axis=1)
        h = _activate(act, z)
    return (h, crossed) if base is not None else h


@dataclass
class GradientReport:
    worst: float  # max relative error over the compared entries
    checked: int
    skipped: int  # perturbations that moved a ReLU across its kink


def _relative(an, numeric):
    return abs(an - numeric) / max(1e-8, abs(an) + abs(numeric))


def gradient_report(m: Mlp, x, loss, h: float = 1e-5, dtype=np.longdouble, chunk: int = 4096,
                    skip_kinks: bool = True) -> GradientReport:
    """Backprop against central differences for every parameter.

    ``loss(output) -> (value, d value / d output)`` for a single output vector; it
    must not round its value to float64 if extended precision is wanted.

    Nudging ``W[i, j]`` by ``e`` shifts only pre-activation ``i`` of that layer,
    by ``e * input[j]``, so every perturbed network is finished from the shifted
    pre-activations in one batch. The finite differences run in ``dtype``
    (80-bit where available) so rounding stays far below the ``h**2`` truncation term.
    A perturbation that flips any ReLU is not a valid difference quotient (the
    function has a kink inside the interval); with ``skip_kinks`` it is counted
    and left out instead of compared.
    """
    x = np.asarray(x, dtype=float)
    out, cache = forward(m, x)
    _, g_out = loss(out)
    analytic, _ = backward(m, cache, g_out)

    layers = [(l.W.astype(dtype), l.b.astype(dtype), l.activation) for l in m.layers]
    base, a = [], np.asarray(x, dtype=dtype)[None, :]
    for W, b, act in layers:
        base.append(a @ W.T + b)
        a = _activate(act, base[-1])

    a = np.asarray(x, dtype=dtype)
    worst, checked, skipped = 0.0, 0, 0
    for k, (W, b, act) in enumerate(layers):
        z = base[k][0]
        n_out, n_in = W.shape
        # (unit, shift) for every weight then every bias, each nudged by +h and -h
        units = np.concatenate([np.repeat(np.arange(n_out), n_in), np.arange(n_out)])
        shifts = np.concatenate([np.tile(a, n_out) * h, np.full(n_out, h, dtype=dtype)])
        exact = np.concatenate([analytic[2 * k].reshape(-1), analytic[2 * k + 1]])
        for lo in range(0, units.size, chunk):
            u, s = units[lo:lo + chunk], shifts[lo:lo + chunk]
            rows = np.arange(u.size)
            zp = np.tile(z, (u.size, 1))
            zm = zp.copy()
            zp[rows, u] += s
            zm[rows, u] -= s
            yp, cp = _forward_from(layers, k, zp, base)
            ym, cm = _forward_from(layers, k, zm, base)
            for r in rows:
                if skip_kinks and (cp[r] or cm[r]):
                    skipped += 1
                    continue
                numeric = float((loss(yp[r])[0] - loss(ym[r])[0]) / (2 * h))
                worst = max(worst, _relative(float(exact[lo + r]), numeric))
                checked += 1
        a = _activate(act, z)
    return GradientReport(worst, checked, skipped)


def gradient_check(m: Mlp, x, loss, h: float = 1e-5, dtype=np.longdouble, chunk: int = 4096) -> float:
    """Max relative error between backprop and central differences over every parameter."""
    return gradient_report(m, x, loss, h, dtype, chunk).worst


def input_gradient_check(m: Mlp, x, loss, h: float = 1e-5, dtype=np.longdouble) -> float:
    """Same relative-error measure for the gradient w.r.t. the input vector, kinks skipped."""
    x = np.asarray(x, dtype=float)
    out, cache = forward(m, x)
    _, g_out = loss(out)
    _, analytic = backward(m, cache, g_out)
    layers = [(l.W.astype(dtype), l.b.astype(dtype), l.activation) for l in m.layers]
    base, a = [], x.astype(dtype)[None, :]
    for W, b, act in layers:
        base.append(a @ W.T + b)
        a = _activate(act, base[-1])
    W0, b0, _ = layers[0]
    x0 = x.astype(dtype)
    eye = np.eye(x0.size, dtype=dtype) * dtype(h)
    yp, cp = _forward_from(layers, 0, (x0 + eye) @ W0.T + b0, base)
    ym, cm = _forward_from(layers, 0, (x0 - eye) @ W0.T + b0, base)
    worst = 0.0
    for i, an in enumerate(analytic.reshape(-1)):
        if cp[i] or cm[i]:
            continue
        numeric = float((loss(yp[i])[0] - loss(ym[i])[0]) / (2 * h))
        worst = max(worst, _relative(an, numeric))
    return worst


def squared_norm_loss(y):
    return 0.5 * np.sum(y * y), y


def mlp_to_dict(m: Mlp) -> dict:
    return {
        "dims": m.dims,
        "activations": m.activations,
        "params": [p.ravel().tolist() for p in m.params()],
    }


def mlp_from_dict(data: dict) -> Mlp:
    dims, acts, flat = data["dims"], data["activations"], data["params"]
    if len(flat) != 2 * (len(dims) - 1) or len(acts) != len(dims) - 1:
        raise ValueError("checkpoint does not match its dims")
    layers = []
    for i, act in enumerate(acts):
        W = np.array(flat[2 * i], dtype=float).reshape(dims[i + 1], dims[i])
        b = np.array(flat[2 * i + 1], dtype=float)
        layers.append(DenseLayer(W, b, act))
    return Mlp(layers)


def save_mlp(m: Mlp, path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(m)) + "\n")


def load_mlp(path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))
