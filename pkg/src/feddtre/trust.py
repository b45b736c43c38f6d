"""Trustworthiness scoring of (context, response) pairs.

The deterministic scorer is greedy-matching F1 over token embeddings: every
context token is matched to its most similar response token (recall) and vice
versa (precision).  Embeddings are fixed random unit vectors instead of
contextual encoder states, and pairwise similarities are clamped to [0, 1]
so the score can feed the sigmoid normalisation used for the blend weight.

A learnable scorer (logistic regression over a handful of pair features) is
trained with plain FedAvg to mirror the federated evaluator-training phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import InvalidInputError
from .model import TrainConfig
from .params import as_params
from .strategies import aggregate_mean

TokenSequence = Sequence[int]

N_FEATURES = 5


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=np.float64, copy=True)
        if vecs.ndim != 2 or vecs.shape[0] < 1 or vecs.shape[1] < 1:
            raise InvalidInputError("embedding table must be a non-empty (V, d) array")
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidInputError("embedding vectors must have unit norm")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def random(cls, vocab_size: int, dim: int, seed: int) -> "EmbeddingTable":
        rng = np.random.default_rng(seed)
        vecs = rng.standard_normal((vocab_size, dim))
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        # a zero draw has probability 0, but keep the table well defined anyway
        vecs = np.where(norms > 0, vecs / np.where(norms > 0, norms, 1.0), np.eye(1, dim))
        return cls(vecs)

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, seq: TokenSequence) -> np.ndarray:
        if len(seq) == 0:
            raise InvalidInputError("sequence is empty")
        ids = np.asarray(seq, dtype=np.intp)
        if ids.min() < 0 or ids.max() >= self.vocab_size:
            raise InvalidInputError(f"token id out of range for vocab {self.vocab_size}")
        return self.vectors[ids]


def bert_f1(table: EmbeddingTable, context: TokenSequence, response: TokenSequence) -> tuple[float, float, float]:
    """Greedy-matching (recall, precision, f1) between two token sequences."""
    sims = np.clip(table.lookup(context) @ table.lookup(response).T, 0.0, 1.0)
    recall = float(sims.max(axis=1).mean())
    precision = float(sims.max(axis=0).mean())
    denom = precision + recall
    f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
    return recall, precision, f1


def pair_features(table: EmbeddingTable, context: TokenSequence, response: TokenSequence) -> np.ndarray:
    recall, precision, f1 = bert_f1(table, context, response)
    return np.array([recall, precision, f1, len(response) / len(context), 1.0])


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class TrustEvaluator(Protocol):
    def score(self, context: TokenSequence, response: TokenSequence) -> float: ...


@dataclass(frozen=True)
class DeterministicF1:
    table: EmbeddingTable

    def score(self, context, response) -> float:
        return min(max(bert_f1(self.table, context, response)[2], 0.0), 1.0)


@dataclass(frozen=True)
class LearnedLinear:
    table: EmbeddingTable
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", as_params(self.weights, N_FEATURES))

    @classmethod
    def untrained(cls, table: EmbeddingTable) -> "LearnedLinear":
        return cls(table, np.zeros(N_FEATURES))

    def score(self, context, response) -> float:
        return float(_logistic(pair_features(self.table, context, response) @ self.weights))


@dataclass(frozen=True)
class ConstantScorer:
    """Scores every pair the same; makes the global/local gap identically zero."""

    value: float = 0.5

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise InvalidInputError("constant score must lie in [0, 1]")

    def score(self, context, response) -> float:
        if len(context) == 0 or len(response) == 0:
            raise InvalidInputError("sequence is empty")
        return self.value


def trust_score(ev: TrustEvaluator, context: TokenSequence, response: TokenSequence) -> float:
    return ev.score(context, response)


@dataclass(frozen=True)
class ScoredPair:
    context: tuple[int, ...]
    response: tuple[int, ...]
    label: float

    def __post_init__(self):
        object.__setattr__(self, "context", tuple(int(t) for t in self.context))
        object.__setattr__(self, "response", tuple(int(t) for t in self.response))
        if not self.context or not self.response:
            raise InvalidInputError("scored pair sequences must be non-empty")
        if not 0 <= self.label <= 1:
            raise InvalidInputError(f"label {self.label} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps({"context": list(self.context), "response": list(self.response), "label": self.label})

    @classmethod
    def from_json(cls, line: str) -> "ScoredPair":
        obj = json.loads(line)
        return cls(obj["context"], obj["response"], float(obj["label"]))


def write_pairs(path, pairs: Iterable[ScoredPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(pair.to_json() + "\n")


def read_pairs(path) -> list[ScoredPair]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ScoredPair.from_json(line) for line in lines if line.strip()]


def synth_trust_dataset(
    seed: int,
    n: int,
    table: EmbeddingTable,
    noise: float = 0.05,
    max_len: int = 8,
) -> list[ScoredPair]:
    """Random labelled pairs standing in for an annotated trust dataset.

    Each response copies context tokens with a per-pair probability, so the
    overlap (and hence the F1 label) spans the whole [0, 1] range.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if noise < 0:
        raise InvalidInputError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    scorer = DeterministicF1(table)
    v = table.vocab_size
    pairs = []
    for _ in range(n):
        context = rng.integers(0, v, size=int(rng.integers(1, max_len + 1))).tolist()
        copy_prob = rng.random()
        response = [
            int(context[rng.integers(len(context))]) if rng.random() < copy_prob else int(rng.integers(v))
            for _ in range(int(rng.integers(1, max_len + 1)))
        ]
        label = scorer.score(context, response)
        if noise > 0:
            label += noise * rng.standard_normal()
        pairs.append(ScoredPair(context, response, min(max(label, 0.0), 1.0)))
    return pairs


def _design(table: EmbeddingTable, pairs: Sequence[ScoredPair]) -> tuple[np.ndarray, np.ndarray]:
    feats = np.array([pair_features(table, p.context, p.response) for p in pairs])
    labels = np.array([p.label for p in pairs])
    return feats, labels


def mse(ev: LearnedLinear, pairs: Sequence[ScoredPair]) -> float:
    feats, labels = _design(ev.table, pairs)
    return float(np.mean((_logistic(feats @ ev.weights) - labels) ** 2))


def _local_fit(w: np.ndarray, feats: np.ndarray, labels: np.ndarray, cfg: TrainConfig, seed) -> np.ndarray:
    n = len(labels)
    order = np.random.default_rng(seed).permutation(n)
    cursor = 0
    for _ in range(cfg.local_steps):
        idx = order[(cursor + np.arange(cfg.batch_size)) % n]
        cursor = (cursor + cfg.batch_size) % n
        x, y = feats[idx], labels[idx]
        p = _logistic(x @ w)
        g = (2.0 * (p - y) * p * (1.0 - p)) @ x / len(idx)
        w = w - cfg.learning_rate * g
    return w


def train_trust_evaluator_federated(
    partitions: Sequence[Sequence[ScoredPair]],
    rounds: int,
    cfg: TrainConfig,
    table: EmbeddingTable,
    init: Optional[LearnedLinear] = None,
    client_seeds: Optional[Sequence[int]] = None,
) -> LearnedLinear:
    """FedAvg over client-held labelled pairs; every client takes part each round.

    Local objective is squared error between the squashed score and the
    label.  ``client_seeds`` fixes each client's minibatch order; by default
    they are spawned from ``cfg.seed``.
    """
    if not partitions:
        raise InvalidInputError("no client partitions given")
    if any(len(p) == 0 for p in partitions):
        raise InvalidInputError("every partition must be non-empty")
    if rounds < 1:
        raise InvalidInputError("rounds must be >= 1")
    if client_seeds is None:
        client_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(len(partitions))]
    if len(client_seeds) != len(partitions):
        raise InvalidInputError("need one seed per partition")

    designs = [_design(table, p) for p in partitions]
    w = np.array(init.weights if init is not None else np.zeros(N_FEATURES))
    for r in range(rounds):
        updates = {
            cid: _local_fit(w, feats, labels, cfg, [client_seeds[cid], r])
            for cid, (feats, labels) in enumerate(designs)
        }
        w = aggregate_mean(updates)
    return LearnedLinear(table, w)
