"""Combination-tensor assembly for the single-neuron network bank.

For N datasets the bank holds N^2 combinations, flattened as
``q = dataset_index * N + label_index``: the stacked data tensor repeats each
dataset N consecutive times while the candidate-label tensor cycles through
all label vectors, so every (dataset, label) pairing occurs exactly once and
correct pairings land on the diagonal of the N x N reshape.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import Corpus

DEFAULT_ELEMENT_BUDGET = 2_000_000_000

LR_LOG10_LOW, LR_LOG10_HIGH = -5.0, -1.0
BETA1_LOW, BETA1_HIGH = 0.85, 0.99
BETA2_LOW, BETA2_HIGH = 0.98, 0.9999


@dataclass
class CombinationTensors:
    """All tensors one training run needs, indexed by combination q.

    ``data`` and ``noisy_labels`` are immutable and shared across runs;
    ``weights`` and ``biases`` are owned by exactly one run at a time.
    """

    data: np.ndarray  # (N^2, m, c)
    noisy_labels: np.ndarray  # (N^2, m, 1)
    weights: np.ndarray  # (N^2, c, 1)
    biases: np.ndarray  # (N^2, 1, 1)
    learning_rates: np.ndarray  # (N^2, 1)
    betas: np.ndarray  # (N^2, 2)
    n_datasets: int

    @property
    def n_combinations(self) -> int:
        return self.n_datasets**2

    @property
    def n_records(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def combo_index(self, dataset_index: int, label_index: int) -> int:
        return dataset_index * self.n_datasets + label_index

    def dataset_of(self, q: int) -> int:
        return q // self.n_datasets

    def label_of(self, q: int) -> int:
        return q % self.n_datasets


def correct_pair_mask(n_datasets: int) -> np.ndarray:
    """Boolean mask over combinations q marking correct (diagonal) pairings."""
    q = np.arange(n_datasets**2)
    return q // n_datasets == q % n_datasets


def zero_pad(features: np.ndarray, width: int) -> np.ndarray:
    """Right-pad a feature matrix with zero columns up to the target width."""
    m, u = features.shape
    if u > width:
        raise ValueError(f"cannot pad {u} columns down to {width}")
    if u == width:
        return features.copy()
    padded = np.zeros((m, width))
    padded[:, :u] = features
    return padded


def assemble_data_tensor(corpus: Corpus, element_budget: int = DEFAULT_ELEMENT_BUDGET) -> np.ndarray:
    """Stack zero-padded datasets, each repeated N consecutive times."""
    n = corpus.n_datasets
    m, c = corpus.record_count, corpus.max_features
    elements = n * n * m * c
    if elements > element_budget:
        raise MemoryError(
            f"combination tensor needs {elements} elements "
            f"({n}^2 x {m} x {c}), over the budget of {element_budget}; "
            "reduce datasets or records, or raise the budget"
        )
    data = np.empty((n * n, m, c))
    for i, d in enumerate(corpus.datasets):
        data[i * n : (i + 1) * n] = zero_pad(d.features, c)
    return data


def assemble_label_tensor(corpus: Corpus) -> np.ndarray:
    """Stack candidate label vectors cyclically so slice q holds labels q mod N."""
    n = corpus.n_datasets
    m = corpus.record_count
    labels = np.empty((n * n, m, 1))
    for j, d in enumerate(corpus.datasets):
        labels[j::n] = d.labels[:, None]
    return labels


def sample_hyperparameters(
    n_datasets: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one (lr, beta1, beta2) triple per dataset and tile it over its block.

    Learning rates are log-uniform over [1e-5, 1e-1]; betas are uniform over
    [0.85, 0.99] and [0.98, 0.9999]. All N^2 rows of a dataset's block share
    that dataset's triple.
    """
    if n_datasets < 1:
        raise ValueError("n_datasets must be positive")
    lr = 10.0 ** rng.uniform(LR_LOG10_LOW, LR_LOG10_HIGH, n_datasets)
    beta1 = rng.uniform(BETA1_LOW, BETA1_HIGH, n_datasets)
    beta2 = rng.uniform(BETA2_LOW, BETA2_HIGH, n_datasets)
    learning_rates = np.repeat(lr, n_datasets)[:, None]
    betas = np.column_stack([np.repeat(beta1, n_datasets), np.repeat(beta2, n_datasets)])
    return learning_rates, betas


def init_weights(
    n_datasets: int, width: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Glorot-uniform weights (fan_in=width, fan_out=1) and zero biases per combination."""
    bound = np.sqrt(6.0 / (width + 1))
    q = n_datasets**2
    weights = rng.uniform(-bound, bound, (q, width, 1))
    biases = np.zeros((q, 1, 1))
    return weights, biases


def assemble_bank(
    corpus: Corpus,
    rng: np.random.Generator,
    element_budget: int = DEFAULT_ELEMENT_BUDGET,
) -> CombinationTensors:
    """Build the full combination bank with freshly drawn parameters."""
    data = assemble_data_tensor(corpus, element_budget)
    noisy_labels = assemble_label_tensor(corpus)
    learning_rates, betas = sample_hyperparameters(corpus.n_datasets, rng)
    weights, biases = init_weights(corpus.n_datasets, corpus.max_features, rng)
    return CombinationTensors(
        data=data,
        noisy_labels=noisy_labels,
        weights=weights,
        biases=biases,
        learning_rates=learning_rates,
        betas=betas,
        n_datasets=corpus.n_datasets,
    )


def reseed_bank(bank: CombinationTensors, rng: np.random.Generator) -> CombinationTensors:
    """Fresh hyperparameters and parameter init for a new outer epoch.

    The data and candidate-label tensors never change between epochs, so they
    are shared with the source bank.
    """
    learning_rates, betas = sample_hyperparameters(bank.n_datasets, rng)
    weights, biases = init_weights(bank.n_datasets, bank.width, rng)
    return replace(
        bank,
        weights=weights,
        biases=biases,
        learning_rates=learning_rates,
        betas=betas,
    )


def assembly_debug_info(bank: CombinationTensors) -> dict:
    """Index map and tensor shapes, for the CLI debug dump."""
    n = bank.n_datasets
    return {
        "n_datasets": n,
        "index_map": [
            {"dataset": i, "label": j, "q": bank.combo_index(i, j)}
            for i in range(n)
            for j in range(n)
        ],
        "shapes": {
            "data": list(bank.data.shape),
            "noisy_labels": list(bank.noisy_labels.shape),
            "weights": list(bank.weights.shape),
            "biases": list(bank.biases.shape),
            "learning_rates": list(bank.learning_rates.shape),
            "betas": list(bank.betas.shape),
        },
    }
