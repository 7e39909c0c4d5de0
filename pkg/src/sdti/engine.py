"""Vectorized nested training of the combination bank.

One call to :func:`run_sdti_layer` performs S gradient steps over all N^2
single-neuron networks at once: batched forward pass, binary cross-entropy
cost, analytic gradients, and per-combination Adam updates with each
combination's own hyperparameters. The cost for a step is recorded from the
forward pass of the same iteration that updates the weights, so the final
row of the trace reflects parameters after S-1 updates.

Two interchangeable backends exist: a compiled fused kernel (built from
``_kernel.pyx`` at install time) and the pure-numpy loop below. The compiled
kernel is preferred when importable; set ``SDTI_BACKEND=numpy|compiled`` to
force one.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from .assembly import CombinationTensors

BCE_CLAMP = 1e-12
ADAM_EPSILON = 1e-8

try:
    from . import _kernel

    HAVE_COMPILED = True
except ImportError:
    _kernel = None
    HAVE_COMPILED = False


def available_backends() -> tuple[str, ...]:
    return ("compiled", "numpy") if HAVE_COMPILED else ("numpy",)


def default_backend() -> str:
    forced = os.environ.get("SDTI_BACKEND")
    if forced:
        if forced not in ("compiled", "numpy"):
            raise ValueError(f"SDTI_BACKEND must be 'compiled' or 'numpy', got {forced!r}")
        if forced == "compiled" and not HAVE_COMPILED:
            raise RuntimeError("SDTI_BACKEND=compiled but the compiled kernel is not installed")
        return forced
    return "compiled" if HAVE_COMPILED else "numpy"


class DivergenceError(RuntimeError):
    """A combination produced a non-finite cost during nested training."""

    def __init__(self, sdti_epoch: int, combination: int, costs: np.ndarray):
        super().__init__(
            f"non-finite cost at sdti_epoch {sdti_epoch}, combination {combination}"
        )
        self.sdti_epoch = sdti_epoch
        self.combination = combination
        self.costs = costs


@dataclass
class AdamState:
    """First/second moment estimates for the weight and bias tensors."""

    m1_w: np.ndarray
    m2_w: np.ndarray
    m1_b: np.ndarray
    m2_b: np.ndarray
    step: int = 0
    epsilon: float = ADAM_EPSILON

    @classmethod
    def zeros(cls, n_combinations: int, width: int, epsilon: float = ADAM_EPSILON) -> "AdamState":
        return cls(
            m1_w=np.zeros((n_combinations, width, 1)),
            m2_w=np.zeros((n_combinations, width, 1)),
            m1_b=np.zeros((n_combinations, 1, 1)),
            m2_b=np.zeros((n_combinations, 1, 1)),
            epsilon=epsilon,
        )


@dataclass
class TrainingTrace:
    """Per-step mean BCE cost for every combination, plus timing."""

    costs: np.ndarray  # (S, N^2)
    wall_time: float

    @property
    def final_costs(self) -> np.ndarray:
        return self.costs[-1]


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(data: np.ndarray, weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Batched single-neuron forward pass: sigmoid(data @ weights + bias) per slice."""
    if data.shape[0] != weights.shape[0] or data.shape[2] != weights.shape[1]:
        raise ValueError(
            f"shape mismatch: data {data.shape} vs weights {weights.shape}"
        )
    return sigmoid(data @ weights + biases)


def bce_cost(outputs: np.ndarray, noisy_labels: np.ndarray) -> np.ndarray:
    """Mean binary cross-entropy per combination, with probability clamping."""
    p = np.clip(outputs, BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = noisy_labels
    per_sample = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    return -per_sample.mean(axis=(1, 2))


def backward(
    data: np.ndarray, noisy_labels: np.ndarray, outputs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic sigmoid+BCE gradients w.r.t. weights and biases, per combination."""
    m = data.shape[1]
    diff = outputs - noisy_labels  # (Q, m, 1)
    grad_w = np.matmul(data.transpose(0, 2, 1), diff) / m
    grad_b = diff.mean(axis=1, keepdims=True)
    return grad_w, grad_b


def adam_step(
    params: tuple[np.ndarray, np.ndarray],
    grads: tuple[np.ndarray, np.ndarray],
    state: AdamState,
    learning_rates: np.ndarray,
    betas: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One Adam update per combination with its own lr/beta row. Mutates in place."""
    weights, biases = params
    grad_w, grad_b = grads
    t = state.step + 1
    lr = learning_rates.reshape(-1, 1, 1)
    b1 = betas[:, 0].reshape(-1, 1, 1)
    b2 = betas[:, 1].reshape(-1, 1, 1)

    state.m1_w = b1 * state.m1_w + (1.0 - b1) * grad_w
    state.m2_w = b2 * state.m2_w + (1.0 - b2) * grad_w**2
    state.m1_b = b1 * state.m1_b + (1.0 - b1) * grad_b
    state.m2_b = b2 * state.m2_b + (1.0 - b2) * grad_b**2

    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    weights -= lr * (state.m1_w / corr1) / (np.sqrt(state.m2_w / corr2) + state.epsilon)
    biases -= lr * (state.m1_b / corr1) / (np.sqrt(state.m2_b / corr2) + state.epsilon)
    state.step = t
    return weights, biases


def _run_numpy(bank: CombinationTensors, sdti_epochs: int) -> np.ndarray:
    data, labels = bank.data, bank.noisy_labels
    weights, biases = bank.weights, bank.biases
    state = AdamState.zeros(bank.n_combinations, bank.width)
    costs = np.empty((sdti_epochs, bank.n_combinations))
    for s in range(sdti_epochs):
        out = forward(data, weights, biases)
        costs[s] = bce_cost(out, labels)
        grads = backward(data, labels, out)
        adam_step((weights, biases), grads, state, bank.learning_rates, bank.betas)
    return costs


def _run_compiled(bank: CombinationTensors, sdti_epochs: int) -> np.ndarray:
    # the kernel mutates weights/biases through the memoryview, so those two
    # must already be C-contiguous (they are, as produced by init_weights)
    if not bank.weights.flags["C_CONTIGUOUS"]:
        bank.weights = np.ascontiguousarray(bank.weights)
    if not bank.biases.flags["C_CONTIGUOUS"]:
        bank.biases = np.ascontiguousarray(bank.biases)
    costs = np.empty((sdti_epochs, bank.n_combinations))
    _kernel.train_bank(
        np.ascontiguousarray(bank.data),
        np.ascontiguousarray(bank.noisy_labels),
        bank.weights,
        bank.biases,
        np.ascontiguousarray(bank.learning_rates[:, 0]),
        np.ascontiguousarray(bank.betas[:, 0]),
        np.ascontiguousarray(bank.betas[:, 1]),
        ADAM_EPSILON,
        BCE_CLAMP,
        costs,
    )
    return costs


def run_sdti_layer(
    bank: CombinationTensors, sdti_epochs: int, backend: str | None = None
) -> TrainingTrace:
    """Train every combination for the given number of nested epochs.

    Mutates the bank's weights and biases in place and returns the cost
    trajectory. Raises :class:`DivergenceError` on the first non-finite cost
    (scanning step-major, so both backends report the same location).
    """
    if sdti_epochs < 1:
        raise ValueError("sdti_epochs must be >= 1")
    backend = backend or default_backend()
    start = time.perf_counter()
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled backend requested but kernel not installed")
        costs = _run_compiled(bank, sdti_epochs)
    elif backend == "numpy":
        costs = _run_numpy(bank, sdti_epochs)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    wall = time.perf_counter() - start

    bad = np.argwhere(~np.isfinite(costs))
    if bad.size:
        s, q = bad[0]
        raise DivergenceError(int(s), int(q), costs)
    return TrainingTrace(costs=costs, wall_time=wall)
