"""From-scratch fully connected network: init, forward, backward, training.

Layer l computes z(l) = a(l-1) @ W(l).T + b(l) with a(0) = x and
a(l) = sigma(z(l)) for hidden layers; the output layer applies no activation.
Weights are drawn i.i.d. N(0, C_W / n_{l-1}) and biases N(0, C_b).  The loss
is mean squared error (1/2N) sum (f - y)^2 over a batch of N samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import Activation, parse_activation

__all__ = [
    "Architecture",
    "ForwardTrace",
    "NetworkParams",
    "TrainConfig",
    "TrainResult",
    "backward",
    "forward",
    "init_params",
    "load_params",
    "mse_loss",
    "save_params",
    "synth_dataset",
    "train",
]


@dataclass(frozen=True)
class Architecture:
    n_in: int
    n_out: int
    hidden: tuple[int, ...]
    activation: Activation

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.n_in < 1 or self.n_out < 1 or any(w < 1 for w in self.hidden):
            raise ValueError("all layer widths must be >= 1")

    @property
    def widths(self) -> tuple[int, ...]:
        """Widths of every layer including input and output."""
        return (self.n_in, *self.hidden, self.n_out)

    @property
    def depth(self) -> int:
        """Number of affine layers."""
        return len(self.hidden) + 1


@dataclass
class NetworkParams:
    """Per-layer weight matrices (n_l x n_{l-1}) and bias vectors (n_l)."""

    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        widths = self.arch.widths
        if len(self.weights) != self.arch.depth or len(self.biases) != self.arch.depth:
            raise ValueError("parameter count does not match architecture depth")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[l + 1], widths[l]) or b.shape != (widths[l + 1],):
                raise ValueError(f"layer {l + 1} parameter shape mismatch")

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardTrace:
    """Inputs plus per-layer preactivations for one batch."""

    inputs: np.ndarray
    layers: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.layers[-1]

    @property
    def finite(self) -> bool:
        return all(np.isfinite(z).all() for z in self.layers)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    batch: int | None = None  # None means full batch
    dataset_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0.0):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch size must be >= 1")
        if self.dataset_size < 1:
            raise ValueError("dataset_size must be >= 1")


@dataclass
class TrainResult:
    params: NetworkParams
    train_losses: np.ndarray  # length epochs + 1; entry e is the loss before epoch e
    test_losses: np.ndarray | None
    diverged: bool
    diverged_at: int | None


def init_params(arch: Architecture, c_b: float, c_w: float, seed: int, dtype=np.float64) -> NetworkParams:
    """Sample parameters from the initialization distribution.

    Per layer, weights are drawn first and then biases, so the stream of
    random draws (and hence the sampled network) is fully determined by the
    seed.
    """
    if not (np.isfinite(c_w) and c_w > 0.0):
        raise ValueError(f"C_W must be positive, got {c_w}")
    if not (np.isfinite(c_b) and c_b >= 0.0):
        raise ValueError(f"C_b must be >= 0, got {c_b}")
    rng = np.random.default_rng(seed)
    widths = arch.widths
    weights = []
    biases = []
    for l in range(arch.depth):
        scale = np.sqrt(c_w / widths[l])
        weights.append((rng.standard_normal((widths[l + 1], widths[l])) * scale).astype(dtype))
        if c_b > 0.0:
            biases.append((rng.standard_normal(widths[l + 1]) * np.sqrt(c_b)).astype(dtype))
        else:
            biases.append(np.zeros(widths[l + 1], dtype=dtype))
    return NetworkParams(arch, weights, biases)


def forward(params: NetworkParams, x: np.ndarray) -> ForwardTrace:
    """Forward pass capturing every preactivation; one row per sample.

    Non-finite values are recorded in the trace (see ForwardTrace.finite),
    not raised.
    """
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != params.arch.n_in:
        raise ValueError(f"input dimension {x.shape[1]} != architecture n_in {params.arch.n_in}")
    act = params.arch.activation
    layers = []
    a = x
    last = params.arch.depth - 1
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for l, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = a @ w.T + b
            layers.append(z)
            if l < last:
                a = act.value(z)
    return ForwardTrace(inputs=x, layers=layers)


def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    """(1 / 2N) sum of squared residuals over a batch of N samples."""
    outputs = np.atleast_2d(outputs)
    targets = _as_targets(targets, outputs.shape)
    return float(np.sum((outputs - targets) ** 2) / (2.0 * outputs.shape[0]))


def _as_targets(targets: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    t = np.asarray(targets)
    if t.ndim == 1:
        t = t[:, None]
    if t.shape != shape:
        raise ValueError(f"target shape {t.shape} does not match outputs {shape}")
    return t


def backward(params: NetworkParams, trace: ForwardTrace, targets: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact MSE-loss gradients for every weight matrix and bias vector."""
    act = params.arch.activation
    out = trace.output
    targets = _as_targets(targets, out.shape)
    n = out.shape[0]
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        delta = (out - targets) / n
        grads_w: list[np.ndarray] = [None] * params.arch.depth
        grads_b: list[np.ndarray] = [None] * params.arch.depth
        for l in range(params.arch.depth - 1, -1, -1):
            a_prev = trace.inputs if l == 0 else act.value(trace.layers[l - 1])
            grads_w[l] = delta.T @ a_prev
            grads_b[l] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ params.weights[l]) * act.deriv(trace.layers[l - 1])
    return grads_w, grads_b


def _sgd_step(params: NetworkParams, grads_w, grads_b, lr: float) -> None:
    for w, b, gw, gb in zip(params.weights, params.biases, grads_w, grads_b):
        w -= lr * gw
        b -= lr * gb


def train(
    params: NetworkParams,
    cfg: TrainConfig,
    x: np.ndarray,
    y: np.ndarray,
    x_test: np.ndarray | None = None,
    y_test: np.ndarray | None = None,
) -> TrainResult:
    """Gradient-descent training; full batch unless cfg.batch is set.

    Training aborts with a divergence flag as soon as the loss becomes
    non-finite; the offending epoch is recorded and parameters are left at
    their last finite state.
    """
    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    train_losses = []
    test_losses = [] if x_test is not None else None

    def record() -> bool:
        loss = mse_loss(forward(params, x).output, y)
        train_losses.append(loss)
        if test_losses is not None:
            test_losses.append(mse_loss(forward(params, x_test).output, y_test))
        return np.isfinite(loss)

    for epoch in range(cfg.epochs):
        if not record():
            return TrainResult(params, np.array(train_losses), _maybe(test_losses), True, epoch)
        if cfg.batch is None or cfg.batch >= n:
            trace = forward(params, x)
            gw, gb = backward(params, trace, y)
            _sgd_step(params, gw, gb, cfg.learning_rate)
        else:
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch):
                idx = perm[start : start + cfg.batch]
                trace = forward(params, x[idx])
                gw, gb = backward(params, trace, y[idx])
                _sgd_step(params, gw, gb, cfg.learning_rate)
    ok = record()
    return TrainResult(params, np.array(train_losses), _maybe(test_losses), not ok, cfg.epochs if not ok else None)


def _maybe(values):
    return np.array(values) if values is not None else None


def synth_dataset(n: int, seed: int, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Planar regression task: inputs are i.i.d. N(0, scale^2) pairs and the
    target is the squared radius x^2 + y^2 of each (scaled) input."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((n, 2))
    return x, (x**2).sum(axis=1)


# ---------------------------------------------------------------------------
# checkpoints


def save_params(params: NetworkParams, path: str | Path) -> None:
    """Write a JSON checkpoint (row-major float64 matrices + architecture)."""
    doc = {
        "format": "netcrit-checkpoint-v1",
        "architecture": {
            "n_in": params.arch.n_in,
            "n_out": params.arch.n_out,
            "hidden": list(params.arch.hidden),
            "activation": params.arch.activation.spec_string(),
        },
        "layers": [
            {"weight": np.asarray(w, dtype=np.float64).tolist(), "bias": np.asarray(b, dtype=np.float64).tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path: str | Path) -> NetworkParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "netcrit-checkpoint-v1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    a = doc["architecture"]
    arch = Architecture(
        n_in=int(a["n_in"]),
        n_out=int(a["n_out"]),
        hidden=tuple(a["hidden"]),
        activation=parse_activation(a["activation"]),
    )
    weights = [np.array(layer["weight"], dtype=np.float64) for layer in doc["layers"]]
    biases = [np.array(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
    return NetworkParams(arch, weights, biases)
