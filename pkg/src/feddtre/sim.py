"""Round-by-round federated simulation.

One communication round: sample clients, train each from the current
global weights, optionally blend the result back toward the global weights,
then average.  FedAvg and FedProx run through the same code with a blend
weight of 0, so every baseline shares partitioning, sampling, seeding and
logging with FedDTRE.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError, NumericFailure
from .metrics import MetricReport, evaluate_generation
from .model import ToyDialogueModel, TrainConfig, forward_loss, local_train
from .strategies import (
    FedDTRE,
    FedProx,
    FixedAlpha,
    StrategyConfig,
    aggregate_mean,
    blend_update,
    compute_alpha,
    delta_s,
    k_schedule,
    phi_score,
    strategy_label,
)
from .trust import (
    ConstantScorer,
    DeterministicF1,
    EmbeddingTable,
    LearnedLinear,
    ScoredPair,
    TrustEvaluator,
    synth_trust_dataset,
    train_trust_evaluator_federated,
    trust_score,
)

log = logging.getLogger(__name__)

TokenSequence = Sequence[int]


def derive_seed(*parts: int) -> int:
    """Mix integers into one 64-bit seed."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Seeds:
    data: int = 0
    sampling: int = 1
    training: int = 2
    eval: int = 3


@dataclass(frozen=True)
class EvaluatorConfig:
    """How the trust evaluator is built.

    ``kind`` is ``"f1"`` (greedy-match F1), ``"learned"`` (logistic scorer
    trained federatedly on synthetic labelled pairs before the dialogue
    phase) or ``"constant"`` (fixed score, for degenerate checks).
    """

    kind: str = "f1"
    embed_dim: int = 8
    seed: int = 7
    constant: float = 0.5
    pretrain_rounds: int = 50
    pairs_per_client: int = 50
    label_noise: float = 0.05
    learning_rate: float = 3.0
    freeze: bool = True

    def __post_init__(self):
        if self.kind not in ("f1", "learned", "constant"):
            raise ConfigError("kind", f"unknown evaluator kind {self.kind!r}")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim", "must be >= 1")
        if not 0 <= self.constant <= 1:
            raise ConfigError("constant", "must lie in [0, 1]")
        if self.pretrain_rounds < 1:
            raise ConfigError("pretrain_rounds", "must be >= 1")
        if self.pairs_per_client < 1:
            raise ConfigError("pairs_per_client", "must be >= 1")


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 8
    clients_per_round: int = 2
    rounds: int = 100
    strategy: StrategyConfig = field(default_factory=FedDTRE)
    train: TrainConfig = field(default_factory=TrainConfig)
    trust_eval_samples: int = 100
    seeds: Seeds = field(default_factory=Seeds)
    partition_skew: float = 0.0
    max_len: int = 16
    evaluator: EvaluatorConfig = field(default_factory=EvaluatorConfig)

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError("n_clients", "must be >= 1")
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ConfigError(
                "clients_per_round",
                f"must be in [1, n_clients={self.n_clients}], got {self.clients_per_round}",
            )
        if self.rounds < 1:
            raise ConfigError("rounds", "must be >= 1")
        if self.trust_eval_samples < 1:
            raise ConfigError("trust_eval_samples", "must be >= 1")
        if not self.partition_skew >= 0:
            raise ConfigError("partition_skew", "must be >= 0")
        if self.max_len < 1:
            raise ConfigError("max_len", "must be >= 1")


@dataclass(frozen=True)
class ClientPartition:
    client_id: int
    data: tuple
    seed: int

    def __post_init__(self):
        if len(self.data) == 0:
            raise InvalidInputError(f"client {self.client_id} has no data")


def partition_data(dataset: Sequence[TokenSequence], n_clients: int, skew: float, seed: int) -> list[ClientPartition]:
    """Split ``dataset`` into disjoint client shards.

    With ``skew == 0`` shard sizes differ by at most one.  Otherwise sizes
    follow a power law ``rank ** -skew`` (ranks shuffled across clients) on
    top of one guaranteed sequence per client.
    """
    n = len(dataset)
    if n_clients < 1:
        raise InvalidInputError("n_clients must be >= 1")
    if n < n_clients:
        raise InvalidInputError(f"dataset of {n} sequences cannot cover {n_clients} clients")
    if skew < 0:
        raise InvalidInputError("skew must be >= 0")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    if skew == 0:
        sizes = np.full(n_clients, n // n_clients)
        sizes[: n % n_clients] += 1
    else:
        weights = np.arange(1, n_clients + 1, dtype=np.float64) ** -skew
        rng.shuffle(weights)
        share = (n - n_clients) * weights / weights.sum()
        extra = np.floor(share).astype(int)
        leftover = (n - n_clients) - extra.sum()
        # largest remainder, ties to the lower client id
        for cid in np.argsort(-(share - extra), kind="stable")[:leftover]:
            extra[cid] += 1
        sizes = 1 + extra
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [
        ClientPartition(cid, tuple(tuple(dataset[i]) for i in order[bounds[cid] : bounds[cid + 1]]), derive_seed(seed, cid))
        for cid in range(n_clients)
    ]


def sample_clients(n_clients: int, k: int, seed: int, round_index: int) -> list[int]:
    if not 1 <= k <= n_clients:
        raise InvalidInputError(f"cannot sample {k} of {n_clients} clients")
    rng = np.random.default_rng([seed, round_index])
    return sorted(int(c) for c in rng.choice(n_clients, size=k, replace=False))


def evaluate_trust(
    model,
    ev: TrustEvaluator,
    eval_contexts: Sequence[TokenSequence],
    n_samples: int,
    seed,
    max_len: int = 16,
) -> float:
    """Mean trust score of the model's replies on a seeded sample of contexts.

    The sample depends only on ``seed``, so scoring two models with the same
    seed compares them on identical contexts.
    """
    if len(eval_contexts) == 0:
        raise InvalidInputError("no evaluation contexts")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    m = min(n_samples, len(eval_contexts))
    if m == len(eval_contexts):
        idx = range(m)
    else:
        idx = sorted(np.random.default_rng(seed).choice(len(eval_contexts), size=m, replace=False).tolist())
    total = 0.0
    for i in idx:
        reply = model.respond(eval_contexts[i], max_len)
        total += trust_score(ev, eval_contexts[i], reply) if reply else 0.0
    return total / m


@dataclass
class ClientRecord:
    client_id: int
    pre_loss: float
    post_loss: float
    alpha: Optional[float]
    s_l: Optional[float] = None
    delta_s: Optional[float] = None
    phi: Optional[float] = None


@dataclass
class RoundRecord:
    round: int
    selected: list[int]
    clients: list[ClientRecord]
    s_g: Optional[float]
    k: Optional[float]
    aggregated_norm: float
    global_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimState:
    global_params: np.ndarray
    partitions: list[ClientPartition]
    evaluator: TrustEvaluator
    trust_contexts: list
    round_index: int = 0
    trust_partitions: Optional[list[list[ScoredPair]]] = None


def _check_finite(vec: np.ndarray, round_index: int, what: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise NumericFailure(round_index, f"non-finite {what}")


def _client_update(state: SimState, cfg: FederationConfig, cid: int, s_g: Optional[float], k: Optional[float]):
    r = state.round_index
    g = state.global_params
    part = state.partitions[cid]
    strategy = cfg.strategy
    tcfg = replace(cfg.train, seed=derive_seed(cfg.seeds.training, part.seed, r))
    prox = (strategy.mu, g) if isinstance(strategy, FedProx) else None

    with np.errstate(over="ignore", invalid="ignore"):
        local = local_train(g, part.data, tcfg, prox)
    _check_finite(local, r, f"weights from client {cid}")
    local_model = ToyDialogueModel.from_params(local)
    with np.errstate(over="ignore"):
        rec = ClientRecord(
            client_id=cid,
            pre_loss=forward_loss(ToyDialogueModel.from_params(g), part.data),
            post_loss=forward_loss(local_model, part.data),
            alpha=0.0,
        )
    if not math.isfinite(rec.post_loss):
        raise NumericFailure(r, f"non-finite loss for client {cid}")
    if isinstance(strategy, FedDTRE):
        sched = strategy.schedule
        rec.s_l = evaluate_trust(
            local_model, state.evaluator, state.trust_contexts, cfg.trust_eval_samples,
            [cfg.seeds.eval, r], cfg.max_len,
        )
        rec.delta_s = delta_s(s_g, rec.s_l)
        rec.phi = phi_score(rec.delta_s, k, sched.midpoint)
        rec.alpha = compute_alpha(rec.phi, sched)
    elif isinstance(strategy, FixedAlpha):
        rec.alpha = strategy.alpha
    return blend_update(local, g, rec.alpha), rec


def run_round(state: SimState, cfg: FederationConfig, full_data: Optional[Sequence[TokenSequence]] = None):
    """Advance the federation by one round; returns ``(new_state, record)``."""
    r = state.round_index
    selected = sample_clients(cfg.n_clients, cfg.clients_per_round, cfg.seeds.sampling, r)
    g = state.global_params
    s_g = k = None
    if isinstance(cfg.strategy, FedDTRE):
        # one global score per round, on the same contexts every client is scored on
        s_g = evaluate_trust(
            ToyDialogueModel.from_params(g), state.evaluator, state.trust_contexts,
            cfg.trust_eval_samples, [cfg.seeds.eval, r], cfg.max_len,
        )
        k = k_schedule(cfg.strategy.schedule, r)

    blended = {}
    records = []
    for cid in selected:
        vec, rec = _client_update(state, cfg, cid, s_g, k)
        _check_finite(vec, r, f"blend for client {cid}")
        blended[cid] = vec
        records.append(rec)
    new_global = aggregate_mean(blended)
    _check_finite(new_global, r, "aggregate")

    if full_data is None:
        full_data = [seq for p in state.partitions for seq in p.data]
    new_model = ToyDialogueModel.from_params(new_global)
    with np.errstate(over="ignore"):
        global_loss = forward_loss(new_model, full_data)
    if not math.isfinite(global_loss):
        raise NumericFailure(r, "non-finite global loss")
    record = RoundRecord(
        round=r,
        selected=selected,
        clients=records,
        s_g=s_g,
        k=k,
        aggregated_norm=float(np.linalg.norm(new_global)),
        global_loss=global_loss,
    )

    evaluator = state.evaluator
    if not cfg.evaluator.freeze and isinstance(evaluator, LearnedLinear) and state.trust_partitions:
        evaluator = train_trust_evaluator_federated(
            [state.trust_partitions[c] for c in selected],
            1,
            _evaluator_train_cfg(cfg, derive_seed(cfg.seeds.eval, r)),
            evaluator.table,
            init=evaluator,
        )
    new_state = replace(state, global_params=new_global, round_index=r + 1, evaluator=evaluator)
    log.debug("round %d selected=%s loss=%.6f", r, selected, record.global_loss)
    return new_state, record


def _evaluator_train_cfg(cfg: FederationConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.evaluator.learning_rate,
        local_steps=cfg.train.local_steps,
        batch_size=cfg.train.batch_size,
        seed=seed,
    )


def build_evaluator(cfg: FederationConfig, vocab_size: int):
    """Build the trust evaluator; returns ``(evaluator, per-client labelled pairs or None)``."""
    ecfg = cfg.evaluator
    if ecfg.kind == "constant":
        return ConstantScorer(ecfg.constant), None
    table = EmbeddingTable.random(vocab_size, ecfg.embed_dim, ecfg.seed)
    if ecfg.kind == "f1":
        return DeterministicF1(table), None
    partitions = [
        synth_trust_dataset(derive_seed(ecfg.seed, cid), ecfg.pairs_per_client, table, noise=ecfg.label_noise)
        for cid in range(cfg.n_clients)
    ]
    ev = train_trust_evaluator_federated(
        partitions, ecfg.pretrain_rounds, _evaluator_train_cfg(cfg, ecfg.seed), table
    )
    return ev, partitions


@dataclass
class ExperimentResult:
    strategy: str
    rounds: list[RoundRecord]
    final_global: np.ndarray
    metrics: MetricReport
    initial_loss: float
    final_loss: float
    seeds: Seeds

    def rounds_jsonl(self) -> str:
        lines = []
        for rec in self.rounds:
            obj = {"strategy": self.strategy, **rec.to_dict()}
            lines.append(json.dumps(obj, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def summary_row(self) -> dict:
        m = self.metrics
        return {
            "strategy": self.strategy,
            "seed": self.seeds.training,
            "T": len(self.rounds),
            "BLEU-1": repr(m.bleu_1),
            "BLEU-4": repr(m.bleu_4),
            "ROUGE-1": repr(m.rouge_1),
            "ROUGE-2": repr(m.rouge_2),
            "trust": repr(m.trust),
            "final_loss": repr(self.final_loss),
        }


SUMMARY_COLUMNS = ("strategy", "seed", "T", "BLEU-1", "BLEU-4", "ROUGE-1", "ROUGE-2", "trust", "final_loss")


def _prepare(cfg, dataset, eval_set, vocab_size, evaluator, trust_contexts):
    if len(eval_set) == 0:
        raise InvalidInputError("evaluation set is empty")
    partitions = partition_data(dataset, cfg.n_clients, cfg.partition_skew, cfg.seeds.data)
    trust_partitions = None
    if evaluator is None:
        evaluator, trust_partitions = build_evaluator(cfg, vocab_size)
    if trust_contexts is None:
        trust_contexts = [ctx for ctx, _ in eval_set]
    return partitions, evaluator, list(trust_contexts), trust_partitions


def run_experiment(
    cfg: FederationConfig,
    dataset: Sequence[TokenSequence],
    eval_set: Sequence[tuple[TokenSequence, TokenSequence]],
    vocab_size: int,
    evaluator: Optional[TrustEvaluator] = None,
    trust_contexts: Optional[Sequence[TokenSequence]] = None,
) -> ExperimentResult:
    """Run ``cfg.rounds`` rounds from an all-zero model, then score the final model.

    ``trust_contexts`` defaults to the contexts of ``eval_set``; ``evaluator``
    defaults to the one described by ``cfg.evaluator``.
    """
    partitions, evaluator, trust_contexts, trust_partitions = _prepare(
        cfg, dataset, eval_set, vocab_size, evaluator, trust_contexts
    )
    init = ToyDialogueModel.zeros(vocab_size)
    state = SimState(np.array(init.params), partitions, evaluator, trust_contexts, 0, trust_partitions)
    records = []
    for _ in range(cfg.rounds):
        state, rec = run_round(state, cfg, dataset)
        records.append(rec)
    final_model = ToyDialogueModel.from_params(state.global_params)
    metrics = evaluate_generation(final_model, eval_set, state.evaluator, cfg.max_len)
    return ExperimentResult(
        strategy=strategy_label(cfg.strategy),
        rounds=records,
        final_global=state.global_params,
        metrics=metrics,
        initial_loss=forward_loss(init, dataset),
        final_loss=records[-1].global_loss,
        seeds=cfg.seeds,
    )


def run_local_baseline(
    cfg: FederationConfig,
    dataset: Sequence[TokenSequence],
    eval_set: Sequence[tuple[TokenSequence, TokenSequence]],
    vocab_size: int,
    evaluator: Optional[TrustEvaluator] = None,
    trust_contexts: Optional[Sequence[TokenSequence]] = None,
) -> ExperimentResult:
    """No-federation reference: each client only ever trains its own model.

    Client sampling and per-client seeds match the federated runs.  Metrics
    and losses are averaged over the clients' final models; ``final_global``
    holds the client average for the record only.
    """
    partitions, evaluator, _, _ = _prepare(cfg, dataset, eval_set, vocab_size, evaluator, trust_contexts)
    init = ToyDialogueModel.zeros(vocab_size)
    params = {p.client_id: np.array(init.params) for p in partitions}
    records = []
    for r in range(cfg.rounds):
        selected = sample_clients(cfg.n_clients, cfg.clients_per_round, cfg.seeds.sampling, r)
        client_recs = []
        for cid in selected:
            part = partitions[cid]
            tcfg = replace(cfg.train, seed=derive_seed(cfg.seeds.training, part.seed, r))
            before = ToyDialogueModel.from_params(params[cid])
            with np.errstate(over="ignore", invalid="ignore"):
                params[cid] = local_train(params[cid], part.data, tcfg)
            _check_finite(params[cid], r, f"weights from client {cid}")
            client_recs.append(
                ClientRecord(
                    client_id=cid,
                    pre_loss=forward_loss(before, part.data),
                    post_loss=forward_loss(ToyDialogueModel.from_params(params[cid]), part.data),
                    alpha=None,
                )
            )
        avg = aggregate_mean(params)
        losses = [forward_loss(ToyDialogueModel.from_params(params[c]), dataset) for c in sorted(params)]
        records.append(
            RoundRecord(r, selected, client_recs, None, None, float(np.linalg.norm(avg)), math.fsum(losses) / len(losses))
        )
    reports = [
        evaluate_generation(ToyDialogueModel.from_params(params[c]), eval_set, evaluator, cfg.max_len)
        for c in sorted(params)
    ]
    n = len(reports)
    metrics = MetricReport(
        *(math.fsum(rep.values()[i] for rep in reports) / n for i in range(5)),
        n_pairs=reports[0].n_pairs,
    )
    return ExperimentResult(
        strategy="Local",
        rounds=records,
        final_global=aggregate_mean(params),
        metrics=metrics,
        initial_loss=forward_loss(init, dataset),
        final_loss=records[-1].global_loss,
        seeds=cfg.seeds,
    )
