"""Per-epoch predictions and vote aggregation over outer training epochs.

Each outer epoch retrains the whole bank from scratch (fresh hyperparameters
and weights), votes for the cheapest label per dataset, and the final
assignment is the per-dataset majority over all epochs.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    DEFAULT_ELEMENT_BUDGET,
    CombinationTensors,
    assemble_data_tensor,
    assemble_label_tensor,
    correct_pair_mask,
    reseed_bank,
    sample_hyperparameters,
    init_weights,
)
from .corpus import Corpus
from .engine import DivergenceError, TrainingTrace, run_sdti_layer


@dataclass
class VoteTally:
    """One-hot per-epoch predictions, stacked epoch-major."""

    tally: np.ndarray  # (E, N, N) int
    epochs_completed: int

    def vote_counts(self) -> np.ndarray:
        return self.tally[: self.epochs_completed].sum(axis=0)


@dataclass
class RunDiagnostics:
    """Cost statistics collected alongside a full run."""

    final_costs: np.ndarray  # (E, N^2) final-step cost per outer epoch
    cost_moments: dict  # per-step pooled moments, keys "correct"/"incorrect"
    backend: str
    traces: np.ndarray | None = None  # (E, S, N^2) when tracing is enabled


@dataclass
class AssignmentResult:
    """Final dataset -> label assignment with vote bookkeeping."""

    predicted: np.ndarray  # (N,) label index per dataset
    vote_counts: np.ndarray  # (N, N) int
    margins: np.ndarray  # (N,) top minus runner-up votes
    total_epochs: int
    inference_time: float
    diagnostics: RunDiagnostics | None = field(default=None, repr=False)

    def duplicate_claims(self) -> dict[int, list[int]]:
        """Labels claimed by more than one dataset (assignment is not forced 1:1)."""
        claims: dict[int, list[int]] = {}
        for i, j in enumerate(self.predicted):
            claims.setdefault(int(j), []).append(i)
        return {j: ds for j, ds in claims.items() if len(ds) > 1}

    def to_json(self, seed: int | None = None, config: dict | None = None) -> dict:
        doc = {
            "predicted": [int(v) for v in self.predicted],
            "vote_counts": [[int(v) for v in row] for row in self.vote_counts],
            "margins": [int(v) for v in self.margins],
            "total_epochs": int(self.total_epochs),
            "inference_time_seconds": float(self.inference_time),
        }
        if seed is not None:
            doc["seed"] = int(seed)
        if config is not None:
            doc["config"] = config
        return doc


def epoch_prediction(final_costs: np.ndarray, n_datasets: int) -> np.ndarray:
    """One-hot per-dataset choice of the cheapest label for one epoch.

    Costs reshape row-major to (dataset, label); the lowest cost in each row
    wins, lowest index on ties. Non-finite costs count as +inf (worst).
    """
    grid = np.asarray(final_costs, dtype=float).reshape(n_datasets, n_datasets)
    grid = np.where(np.isfinite(grid), grid, np.inf)
    winners = np.argmin(grid, axis=1)
    onehot = np.zeros((n_datasets, n_datasets), dtype=int)
    onehot[np.arange(n_datasets), winners] = 1
    return onehot


def aggregate_votes(tally: VoteTally) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Summed votes, per-dataset argmax (lowest index on ties), and margins."""
    counts = tally.vote_counts()
    predicted = np.argmax(counts, axis=1)
    n = counts.shape[0]
    margins = np.empty(n, dtype=int)
    for i in range(n):
        order = np.sort(counts[i])[::-1]
        margins[i] = order[0] - (order[1] if n > 1 else 0)
    return predicted, counts, margins


def _epoch_final_costs(
    data: np.ndarray,
    noisy_labels: np.ndarray,
    n_datasets: int,
    seed: int,
    epoch: int,
    sdti_epochs: int,
    backend: str | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Train one outer epoch; returns (final_costs, full cost trace)."""
    rng = np.random.default_rng([seed, epoch])
    learning_rates, betas = sample_hyperparameters(n_datasets, rng)
    weights, biases = init_weights(n_datasets, data.shape[2], rng)
    bank = CombinationTensors(
        data=data,
        noisy_labels=noisy_labels,
        weights=weights,
        biases=biases,
        learning_rates=learning_rates,
        betas=betas,
        n_datasets=n_datasets,
    )
    try:
        trace = run_sdti_layer(bank, sdti_epochs, backend=backend)
        costs = trace.costs
    except DivergenceError as exc:
        # a diverged combination counts as worst-case; keep the partial trace
        costs = exc.costs
    final = costs[-1]
    final = np.where(np.isfinite(final), final, np.inf)
    return final, costs


def _pooled_moments(traces: np.ndarray, n_datasets: int) -> dict:
    """Per-step (count, sum, sum of squares) pooled over epochs, split by pairing."""
    mask = correct_pair_mask(n_datasets)
    out = {}
    for name, group_mask in (("correct", mask), ("incorrect", ~mask)):
        vals = traces[:, :, group_mask]  # (E, S, |group|)
        finite = np.isfinite(vals)
        safe = np.where(finite, vals, 0.0)
        count = finite.sum(axis=(0, 2))
        total = safe.sum(axis=(0, 2))
        total_sq = (safe**2).sum(axis=(0, 2))
        out[name] = [
            [int(n), float(s1), float(s2)] for n, s1, s2 in zip(count, total, total_sq)
        ]
    return out


def run_full(
    corpus: Corpus,
    epochs: int,
    sdti_epochs: int,
    seed: int,
    *,
    backend: str | None = None,
    threads: int = 1,
    collect_trace: bool = False,
    element_budget: int = DEFAULT_ELEMENT_BUDGET,
) -> AssignmentResult:
    """Full training-and-voting workflow over E outer epochs.

    Epoch e draws its generator from (seed, e), so results are identical
    whether epochs run sequentially or on a thread pool.
    """
    if epochs < 1 or sdti_epochs < 1:
        raise ValueError("epochs and sdti_epochs must be >= 1")
    from .engine import default_backend

    backend = backend or default_backend()
    n = corpus.n_datasets
    data = assemble_data_tensor(corpus, element_budget)
    noisy_labels = assemble_label_tensor(corpus)

    tally = np.zeros((epochs, n, n), dtype=int)
    finals = np.empty((epochs, n * n))
    traces = np.empty((epochs, sdti_epochs, n * n))

    start = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(
                    _epoch_final_costs, data, noisy_labels, n, seed, e, sdti_epochs, backend
                ): e
                for e in range(epochs)
            }
            for fut, e in futures.items():
                final, trace = fut.result()
                finals[e] = final
                traces[e] = trace
                tally[e] = epoch_prediction(final, n)
    else:
        for e in range(epochs):
            final, trace = _epoch_final_costs(
                data, noisy_labels, n, seed, e, sdti_epochs, backend
            )
            finals[e] = final
            traces[e] = trace
            tally[e] = epoch_prediction(final, n)
    elapsed = time.perf_counter() - start

    vote_tally = VoteTally(tally=tally, epochs_completed=epochs)
    predicted, counts, margins = aggregate_votes(vote_tally)
    diagnostics = RunDiagnostics(
        final_costs=finals,
        cost_moments=_pooled_moments(traces, n),
        backend=backend,
        traces=traces if collect_trace else None,
    )
    return AssignmentResult(
        predicted=predicted,
        vote_counts=counts,
        margins=margins,
        total_epochs=epochs,
        inference_time=elapsed,
        diagnostics=diagnostics,
    )
