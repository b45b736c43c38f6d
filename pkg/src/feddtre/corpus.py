"""Seeded Markov-chain dialogue corpus.

Every non-EOS token has a small fixed set of likely successors, so a bigram
model has real structure to learn.  Sequences end with the EOS token (id 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import EOS


@dataclass(frozen=True)
class CorpusConfig:
    vocab_size: int = 16
    n_sequences: int = 400
    min_len: int = 4
    max_len: int = 10
    seed: int = 0
    branching: int = 2
    n_eval: int = 60
    n_trust: int = 100

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ConfigError("vocab_size", "must be >= 3")
        if self.min_len < 4:
            raise ConfigError("min_len", "must be >= 4 so held-out replies have 2+ tokens")
        if self.max_len < self.min_len:
            raise ConfigError("max_len", "must be >= min_len")
        if not 1 <= self.branching <= self.vocab_size - 1:
            raise ConfigError("branching", "must be in [1, vocab_size - 1]")
        for name in ("n_sequences", "n_eval", "n_trust"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")


@dataclass(frozen=True)
class Corpus:
    train: list[list[int]]
    eval_pairs: list[tuple[list[int], list[int]]]
    trust_contexts: list[list[int]]
    transitions: np.ndarray


def transition_matrix(cfg: CorpusConfig, rng: np.random.Generator) -> np.ndarray:
    v = cfg.vocab_size
    probs = np.zeros((v, v))
    for tok in range(1, v):
        succ = rng.choice(np.arange(1, v), size=cfg.branching, replace=False)
        probs[tok, succ] = rng.dirichlet(np.full(cfg.branching, 2.0))
    return probs


def _sequence(rng: np.random.Generator, probs: np.ndarray, cfg: CorpusConfig) -> list[int]:
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    tok = int(rng.integers(1, cfg.vocab_size))
    seq = [tok]
    while len(seq) < length - 1:
        tok = int(rng.choice(cfg.vocab_size, p=probs[tok]))
        seq.append(tok)
    seq.append(EOS)
    return seq


def generate_corpus(cfg: CorpusConfig) -> Corpus:
    rng = np.random.default_rng(cfg.seed)
    probs = transition_matrix(cfg, rng)
    train = [_sequence(rng, probs, cfg) for _ in range(cfg.n_sequences)]
    eval_pairs = []
    for _ in range(cfg.n_eval):
        seq = _sequence(rng, probs, cfg)
        cut = len(seq) // 2
        eval_pairs.append((seq[:cut], seq[cut:]))
    trust_contexts = []
    for _ in range(cfg.n_trust):
        seq = _sequence(rng, probs, cfg)
        trust_contexts.append(seq[: len(seq) // 2])
    return Corpus(train, eval_pairs, trust_contexts, probs)
