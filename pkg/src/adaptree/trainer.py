"""From-scratch fully connected ReLU networks trained with Adam on MSE.

The regression baseline: a plain multilayer perceptron fit to noisy samples
by full-batch gradient descent.  Everything is hand-rolled on numpy --
forward pass, backpropagation (ReLU subgradient 0 at the kink), and Adam
with bias correction -- so the gradient computation can be audited against
finite differences rather than trusted.

Parameters live in one flat float64 vector; the per-layer weight matrices
and bias vectors are reshaped views into it.  That makes the optimizer a
handful of whole-vector operations, snapshots a single ``copy()``, and
seeded runs reproducible bit for bit.

Trained networks export to the same container and JSON format the compiler
uses (:func:`to_relu_network`), so one evaluation and serialization path
serves both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from adaptree.relu_compiler import ReluNetwork, _net

__all__ = [
    "MlpArchitecture",
    "TrainConfig",
    "AdamState",
    "Mlp",
    "TrainingDivergedError",
    "init_mlp",
    "forward",
    "mse",
    "backprop",
    "adam_step",
    "train",
    "gradient_check",
    "to_relu_network",
]


class TrainingDivergedError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths of a fully connected ReLU network.

    ``widths[0]`` is the input dimension, ``widths[-1]`` the output
    dimension; everything between is a ReLU hidden layer (at least one).
    """

    widths: tuple[int, ...] = (1, 64, 128, 64, 1)

    def __post_init__(self) -> None:
        if len(self.widths) < 3:
            raise ValueError("architecture needs at least one hidden layer")
        if any(w <= 0 for w in self.widths):
            raise ValueError("layer widths must be positive")

    @property
    def n_params(self) -> int:
        return sum(
            fi * fo + fo for fi, fo in zip(self.widths[:-1], self.widths[1:])
        )


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    Defaults: Adam at learning rate 1e-3, 20 000 full-batch epochs,
    initialization uniform on +-1/sqrt(fan_in).  ``seed`` is recorded with
    run results; full-batch training itself draws no randomness.
    """

    learning_rate: float = 1e-3
    epochs: int = 20_000
    batch_mode: str = "full"
    seed: int = 0
    init_scale: str = "1/sqrt(fan_in)"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_mode != "full":
            raise ValueError("only full-batch training is implemented")


@dataclass
class AdamState:
    """First/second-moment accumulators and step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


class Mlp:
    """Fully connected ReLU network over one flat parameter vector.

    ``weights[l]`` (shape ``(fan_out, fan_in)``) and ``biases[l]`` are views
    into ``flat``, so updating the flat vector in place updates the layers.
    """

    def __init__(self, widths: Sequence[int], flat: np.ndarray):
        arch = MlpArchitecture(tuple(int(w) for w in widths))
        self.widths = arch.widths
        flat = np.ascontiguousarray(flat, dtype=float)
        if flat.shape != (arch.n_params,):
            raise ValueError(
                f"expected {arch.n_params} parameters for widths {self.widths}, "
                f"got {flat.shape}"
            )
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        off = 0
        for fi, fo in zip(self.widths[:-1], self.widths[1:]):
            self.weights.append(flat[off : off + fi * fo].reshape(fo, fi))
            off += fi * fo
            self.biases.append(flat[off : off + fo])
            off += fo

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def n_params(self) -> int:
        return self.flat.size

    def copy(self) -> "Mlp":
        return Mlp(self.widths, self.flat.copy())


def init_mlp(arch: MlpArchitecture, seed: int) -> Mlp:
    """Draw all parameters i.i.d. uniform on +-1/sqrt(fan_in), per layer."""
    rng = np.random.default_rng(seed)
    blocks = []
    for fi, fo in zip(arch.widths[:-1], arch.widths[1:]):
        bound = 1.0 / np.sqrt(fi)
        blocks.append(rng.uniform(-bound, bound, fi * fo))
        blocks.append(rng.uniform(-bound, bound, fo))
    return Mlp(arch.widths, np.concatenate(blocks))


def _as_batch(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    d = net.input_dim
    single = arr.ndim == 0 or (arr.ndim == 1 and arr.size == d and d > 1)
    if single:
        return arr.reshape(1, d), True
    if arr.ndim == 1:
        if d != 1:
            raise ValueError(f"expected points with {d} coordinates")
        return arr[:, None], False
    if arr.ndim == 2 and arr.shape[1] == d:
        return arr, False
    raise ValueError(f"cannot interpret input of shape {arr.shape} for d={d}")


def forward(net: Mlp, x: np.ndarray) -> np.ndarray | float:
    """Network output; scalar-output nets return a 1-d array (or float)."""
    a, single = _as_batch(net, x)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
    out = a @ net.weights[-1].T + net.biases[-1]
    if net.widths[-1] == 1:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


def mse(net: Mlp, x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared residual of the network against targets ``y``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("mse needs at least one sample")
    pred = forward(net, x)
    return float(np.mean((np.asarray(pred) - y) ** 2))


def backprop(net: Mlp, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Full-batch MSE loss and its gradient as one flat vector.

    ReLU backpropagates a subgradient of 0 at the kink (the active mask is
    ``z > 0``, strictly).  Raises :class:`TrainingDivergedError` on a
    non-finite loss, before any gradient work.
    """
    xb, _ = _as_batch(net, x)
    y = np.asarray(y, dtype=float).reshape(xb.shape[0], -1)
    acts = [xb]
    a = xb
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
        acts.append(a)
    pred = a @ net.weights[-1].T + net.biases[-1]
    resid = pred - y
    loss = float(np.mean(resid**2))
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite training loss: {loss}")

    n = xb.shape[0]
    grad = np.empty_like(net.flat)
    gw: list[np.ndarray] = []
    gb: list[np.ndarray] = []
    delta = 2.0 * resid / (n * y.shape[1])
    for layer in range(len(net.weights) - 1, -1, -1):
        gw.append(delta.T @ acts[layer])
        gb.append(delta.sum(axis=0))
        if layer > 0:
            # the stored activation equals ReLU(z), so z > 0 iff act > 0
            delta = (delta @ net.weights[layer]) * (acts[layer] > 0.0)
    off = 0
    for w_g, b_g in zip(reversed(gw), reversed(gb)):
        grad[off : off + w_g.size] = w_g.ravel()
        off += w_g.size
        grad[off : off + b_g.size] = b_g
        off += b_g.size
    return loss, grad


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; ``state`` and ``params`` in place."""
    if not np.all(np.isfinite(grads)):
        raise TrainingDivergedError(
            f"non-finite gradient at step {state.step + 1} "
            f"(max |param| = {np.abs(params).max():.3e})"
        )
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads**2
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, params


def train(
    net: Mlp, x: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> tuple[Mlp, np.ndarray]:
    """Full-batch Adam on the MSE loss; returns the best-loss snapshot.

    The input network is not modified.  The returned history has one entry
    per epoch (the loss *before* that epoch's update) plus a final entry for
    the post-training loss, so ``epochs=0`` gives a length-1 history and the
    returned network equals the input.  The snapshot is the parameter vector
    with the smallest recorded training loss.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("training needs at least one sample")
    work = net.copy()
    state = AdamState.zeros(work.n_params)
    history = np.empty(cfg.epochs + 1)
    best_loss = np.inf
    best_flat = work.flat.copy()
    for epoch in range(cfg.epochs):
        loss, grad = backprop(work, x, y)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}: {loss}")
        history[epoch] = loss
        if loss < best_loss:
            best_loss = loss
            best_flat = work.flat.copy()
        adam_step(state, work.flat, grad, cfg.learning_rate)
    final = mse(work, x, y)
    if not np.isfinite(final):
        raise TrainingDivergedError(f"non-finite loss after epoch {cfg.epochs}")
    history[cfg.epochs] = final
    if final < best_loss:
        best_flat = work.flat.copy()
    return Mlp(work.widths, best_flat), history


def gradient_check(
    net: Mlp,
    x: np.ndarray,
    y: np.ndarray,
    n_samples: int = 100,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Worst relative error of backprop against central finite differences.

    Samples ``n_samples`` parameter coordinates (with replacement) and
    compares the analytic gradient to ``(L(p+h) - L(p-h)) / 2h`` on the MSE
    loss.  The network is restored afterwards.
    """
    _, grad = backprop(net, x, y)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, net.n_params, size=n_samples)
    worst = 0.0
    for i in idx:
        orig = net.flat[i]
        net.flat[i] = orig + step
        up = mse(net, x, y)
        net.flat[i] = orig - step
        down = mse(net, x, y)
        net.flat[i] = orig
        fd = (up - down) / (2.0 * step)
        rel = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-12)
        worst = max(worst, rel)
    return worst


def to_relu_network(net: Mlp) -> ReluNetwork:
    """Repackage as the compiler's network container (same JSON format).

    The result has no output clamp.  Evaluation through
    :func:`adaptree.relu_compiler.relu_forward` matches :func:`forward`
    bitwise for wide layers (which share the matmul path); layers narrow
    enough for the order-stable sparse reduction may differ in the last ulp.
    """
    layers = [(w.copy(), b.copy()) for w, b in zip(net.weights, net.biases)]
    return _net(layers, clamp_m=None)
