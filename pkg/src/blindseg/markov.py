"""
Lag-averaged pseudo-Markov predictor over categorical frame sequences.

Instead of a full order-K chain, one first-order transition table is fitted
per lag ``i = 1..K``; the predictive score for ``x_t`` is the sum of
``p(x_t | x_{t-i})`` over the lags. The prediction error is the negative
natural log of that sum. It is not divided by K, so it differs from the
log of the mean by the constant ``ln K``. Peak prominences are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantizer import CategoricalSequence
from .segmenter import ErrorSignal


@dataclass(frozen=True)
class MarkovModel:
    lag_tables: np.ndarray  # (K, n, n): [i-1, a, b] = p(x_t=b | x_{t-i}=a)
    counts: np.ndarray      # raw pair counts, same shape
    alpha: float = 1.0

    @property
    def order(self) -> int:
        return self.lag_tables.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.lag_tables.shape[1]


def lag_counts(symbols, order: int, n_symbols: int) -> np.ndarray:
    """Pair counts for lags 1..order within one sequence."""
    s = np.asarray(symbols, dtype=np.intp)
    counts = np.zeros((order, n_symbols, n_symbols))
    for i in range(1, order + 1):
        if len(s) > i:
            np.add.at(counts[i - 1], (s[:-i], s[i:]), 1)
    return counts


def tables_from_counts(counts: np.ndarray, alpha: float) -> np.ndarray:
    n = counts.shape[-1]
    return (counts + alpha) / (counts.sum(axis=2, keepdims=True) + alpha * n)


def fit_markov(sequences, order: int = 6, alpha: float = 1.0,
               n_symbols: int = 8) -> MarkovModel:
    """Accumulate lag-pair counts within each utterance and smooth them additively."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    counts = np.zeros((order, n_symbols, n_symbols))
    usable = 0
    for seq in sequences:
        symbols = seq.symbols if isinstance(seq, CategoricalSequence) else seq
        if len(symbols) > order:
            usable += 1
        counts += lag_counts(symbols, order, n_symbols)
    if usable == 0:
        raise ValueError(f"no usable sequences: need one longer than order {order}")
    return MarkovModel(lag_tables=tables_from_counts(counts, alpha), counts=counts, alpha=alpha)


def markov_error(model: MarkovModel, sequence) -> ErrorSignal:
    """``E(t) = -ln(sum_i p(x_t | x_{t-i}))`` for ``t >= K``; earlier positions are 0."""
    if isinstance(sequence, CategoricalSequence):
        s, uid, hop = np.asarray(sequence.symbols, dtype=np.intp), sequence.utterance_id, sequence.hop_ms
    else:
        s, uid, hop = np.asarray(sequence, dtype=np.intp), "", 10.0
    K = model.order
    values = np.zeros(len(s))
    if len(s) > K:
        t = np.arange(K, len(s))
        total = np.zeros(len(t))
        for i in range(1, K + 1):
            total += model.lag_tables[i - 1, s[t - i], s[t]]
        values[K:] = -np.log(total)
    return ErrorSignal(values=values, hop_ms=hop, utterance_id=uid)


def save_markov(path, model: MarkovModel) -> None:
    K, n = model.order, model.n_symbols
    with open(path, "w") as f:
        f.write(f"K {K}\nalpha {model.alpha!r}\nn_symbols {n}\n")
        for i in range(K):
            f.write(f"lag {i + 1}\n")
            for row in model.lag_tables[i]:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
            f.write(f"counts {i + 1}\n")
            for row in model.counts[i]:
                f.write(" ".join(str(int(v)) for v in row) + "\n")


def load_markov(path) -> MarkovModel:
    """Tables are rebuilt from the stored counts, so a reload is exact."""
    with open(path) as f:
        lines = [ln.split() for ln in f if ln.strip()]
    K, alpha, n = int(lines[0][1]), float(lines[1][1]), int(lines[2][1])
    counts = np.zeros((K, n, n))
    pos = 3
    for i in range(K):
        pos += n + 1  # skip the normalized table
        if lines[pos] != ["counts", str(i + 1)]:
            raise ValueError(f"{path}: malformed counts header {' '.join(lines[pos])!r}")
        counts[i] = np.array([[float(v) for v in ln] for ln in lines[pos + 1:pos + 1 + n]])
        pos += n + 1
    return MarkovModel(lag_tables=tables_from_counts(counts, alpha), counts=counts, alpha=alpha)
