"""Deterministic federated-learning simulator for trust-driven adaptive aggregation."""

from .errors import ConfigError, InvalidInputError, NumericFailure, ShapeError
from .metrics import MetricReport, bleu, brevity_penalty, evaluate_generation, rouge_n
from .model import ToyDialogueModel, TrainConfig, forward_loss, generate, grad, local_train
from .sim import (
    ClientPartition,
    ExperimentResult,
    FederationConfig,
    RoundRecord,
    Seeds,
    evaluate_trust,
    partition_data,
    run_experiment,
    run_round,
    sample_clients,
)
from .strategies import (
    AlphaSchedule,
    FedAvg,
    FedDTRE,
    FedProx,
    FixedAlpha,
    aggregate_mean,
    blend_update,
    compute_alpha,
    delta_s,
    fedprox_penalty,
    k_schedule,
    phi_score,
    sigmoid_k,
)
from .trust import (
    ConstantScorer,
    DeterministicF1,
    EmbeddingTable,
    LearnedLinear,
    ScoredPair,
    bert_f1,
    synth_trust_dataset,
    train_trust_evaluator_federated,
    trust_score,
)

__version__ = "0.1.0"
