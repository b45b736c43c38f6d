"""Bigram next-token dialogue model.

The model is a ``V x V`` logit table: entry ``(a, b)`` is the logit of token
``b`` following token ``a``.  It is the smallest model that still has a real
loss surface, an exact gradient and a decoding rule, which is all the
aggregation protocol needs from it.  Token id 0 doubles as end-of-sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError
from .params import as_params
from .strategies import fedprox_penalty

EOS = 0

TokenSequence = Sequence[int]


@dataclass(frozen=True)
class ToyDialogueModel:
    vocab_size: int
    params: np.ndarray

    def __post_init__(self):
        if self.vocab_size < 1:
            raise InvalidInputError("vocab_size must be positive")
        object.__setattr__(self, "params", as_params(self.params, self.vocab_size**2))

    @classmethod
    def zeros(cls, vocab_size: int) -> "ToyDialogueModel":
        return cls(vocab_size, np.zeros(vocab_size * vocab_size))

    @classmethod
    def from_params(cls, params) -> "ToyDialogueModel":
        arr = np.asarray(params, dtype=np.float64).reshape(-1)
        v = math.isqrt(arr.size)
        if v * v != arr.size:
            raise ShapeError(f"dim {arr.size} is not a perfect square")
        return cls(v, arr)

    @property
    def table(self) -> np.ndarray:
        return self.params.reshape(self.vocab_size, self.vocab_size)

    def respond(self, context: TokenSequence, max_len: int) -> list[int]:
        return generate(self, context, max_len)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    local_steps: int = 5
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidInputError("learning_rate must be a positive finite number")
        if self.local_steps < 1:
            raise InvalidInputError("local_steps must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")


def _pairs(batch: Sequence[TokenSequence], vocab_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a batch into (current, next) token id arrays, validating as we go."""
    if len(batch) == 0:
        raise InvalidInputError("batch is empty")
    cur: list[int] = []
    nxt: list[int] = []
    for seq in batch:
        if len(seq) < 2:
            raise InvalidInputError("every training sequence needs at least 2 tokens")
        for tok in seq:
            if not 0 <= tok < vocab_size:
                raise InvalidInputError(f"token id {tok} out of range for vocab {vocab_size}")
        cur.extend(seq[:-1])
        nxt.extend(seq[1:])
    return np.asarray(cur, dtype=np.intp), np.asarray(nxt, dtype=np.intp)


def _counts(cur: np.ndarray, nxt: np.ndarray, vocab_size: int) -> np.ndarray:
    counts = np.zeros((vocab_size, vocab_size))
    np.add.at(counts, (cur, nxt), 1.0)
    return counts


def _log_softmax_rows(rows: np.ndarray) -> np.ndarray:
    shifted = rows - rows.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _table_loss(table: np.ndarray, counts: np.ndarray) -> float:
    seen = counts > 0
    loss = -float((counts[seen] * _log_softmax_rows(table)[seen]).sum() / counts.sum())
    # rounding can leave -0.0 or -1e-17 on a saturated table
    return max(loss, 0.0)


def _table_grad(table: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # every pair with context a shares softmax(row a), so the gradient row is
    # n_a * softmax(row a) - counts[a]
    probs = np.exp(_log_softmax_rows(table))
    g = counts.sum(axis=1, keepdims=True) * probs - counts
    return (g / counts.sum()).reshape(-1)


def forward_loss(model: ToyDialogueModel, batch: Sequence[TokenSequence]) -> float:
    """Mean next-token cross-entropy over every adjacent pair in ``batch``."""
    cur, nxt = _pairs(batch, model.vocab_size)
    return _table_loss(model.table, _counts(cur, nxt, model.vocab_size))


def grad(model: ToyDialogueModel, batch: Sequence[TokenSequence]) -> np.ndarray:
    """Analytic gradient of :func:`forward_loss` w.r.t. the flat parameter vector."""
    cur, nxt = _pairs(batch, model.vocab_size)
    return _table_grad(model.table, _counts(cur, nxt, model.vocab_size))


def local_train(
    start,
    data: Sequence[TokenSequence],
    cfg: TrainConfig,
    prox: Optional[tuple[float, np.ndarray]] = None,
) -> np.ndarray:
    """Run ``cfg.local_steps`` gradient-descent steps starting from ``start``.

    Minibatches come from one seeded permutation of ``data`` read cyclically,
    so every batch has exactly ``cfg.batch_size`` sequences.  ``prox`` is an
    optional ``(mu, anchor)`` pair adding ``mu/2 * ||w - anchor||^2`` to the
    objective.  ``start`` is never modified.
    """
    model = ToyDialogueModel.from_params(start)
    w = np.array(model.params)
    anchor = None
    if prox is not None:
        mu, anchor_vals = prox
        if not mu > 0:
            raise InvalidInputError("proximal mu must be positive")
        anchor = np.asarray(anchor_vals, dtype=np.float64).reshape(-1)
        if anchor.size != w.size:
            raise ShapeError(f"anchor dim {anchor.size} != start dim {w.size}")
    if len(data) == 0:
        raise InvalidInputError("local dataset is empty")
    v = model.vocab_size
    per_seq = [_counts(*_pairs([seq], v), v) for seq in data]

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(data))
    cursor = 0
    for _ in range(cfg.local_steps):
        idx = order[(cursor + np.arange(cfg.batch_size)) % len(data)]
        cursor = (cursor + cfg.batch_size) % len(data)
        counts = np.sum([per_seq[i] for i in idx], axis=0)
        step = _table_grad(w.reshape(v, v), counts)
        if anchor is not None:
            step = step + fedprox_penalty(w, anchor, mu)[1]
        w = w - cfg.learning_rate * step
    return w


def generate(model: ToyDialogueModel, context: TokenSequence, max_len: int) -> list[int]:
    """Greedy decoding from the last context token.

    Ties go to the lowest token id (``np.argmax`` semantics); decoding stops
    after emitting :data:`EOS` or ``max_len`` tokens.
    """
    if len(context) == 0:
        raise InvalidInputError("context is empty")
    if max_len < 1:
        raise InvalidInputError("max_len must be >= 1")
    for tok in context:
        if not 0 <= tok < model.vocab_size:
            raise InvalidInputError(f"token id {tok} out of range for vocab {model.vocab_size}")
    table = model.table
    cur = int(context[-1])
    out: list[int] = []
    while len(out) < max_len:
        cur = int(np.argmax(table[cur]))
        out.append(cur)
        if cur == EOS:
            break
    return out
