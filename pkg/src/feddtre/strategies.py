"""Aggregation and client-update rules.

FedAvg and FedProx are the usual baselines.  FedDTRE blends each client's
trained weights with the incoming global weights, ``(1 - a) * local + a * global``,
where ``a`` grows with how much better the global model scores than the
local one under the trust evaluator.  FixedAlpha is the same blend with a
constant ``a`` (the ablation setting).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidInputError, ShapeError
from .params import check_same_dim


@dataclass(frozen=True)
class AlphaSchedule:
    k0: float = 0.7
    midpoint: float = 0.01
    alpha_min: float = 0.1
    alpha_max: float = 1.0
    k_growth: float = 0.01

    def __post_init__(self):
        if not self.k0 > 0:
            raise InvalidInputError("k0 must be positive")
        if not 0 <= self.alpha_min < self.alpha_max <= 1:
            raise InvalidInputError("need 0 <= alpha_min < alpha_max <= 1")
        if not self.k_growth >= 0:
            raise InvalidInputError("k_growth must be non-negative")


@dataclass(frozen=True)
class FedAvg:
    kind: str = field(default="fedavg", init=False)


@dataclass(frozen=True)
class FedProx:
    mu: float = 0.01
    kind: str = field(default="fedprox", init=False)

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidInputError("FedProx mu must be positive")


@dataclass(frozen=True)
class FedDTRE:
    schedule: AlphaSchedule = field(default_factory=AlphaSchedule)
    kind: str = field(default="feddtre", init=False)


@dataclass(frozen=True)
class FixedAlpha:
    alpha: float = 0.5
    kind: str = field(default="fixed_alpha", init=False)

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise InvalidInputError("fixed alpha must lie in [0, 1]")


StrategyConfig = Union[FedAvg, FedProx, FedDTRE, FixedAlpha]


def strategy_to_dict(strategy: StrategyConfig) -> dict:
    return asdict(strategy)


def strategy_from_dict(data: Mapping) -> StrategyConfig:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind == "fedavg":
        return FedAvg(**data)
    if kind == "fedprox":
        return FedProx(**data)
    if kind == "feddtre":
        return FedDTRE(AlphaSchedule(**data.get("schedule", {})))
    if kind == "fixed_alpha":
        return FixedAlpha(**data)
    raise InvalidInputError(f"unknown strategy kind {kind!r}")


def strategy_label(strategy: StrategyConfig) -> str:
    if isinstance(strategy, FixedAlpha):
        return f"FixedAlpha({strategy.alpha:g})"
    return {"fedavg": "FedAvg", "fedprox": "FedProx", "feddtre": "FedDTRE"}[strategy.kind]


def aggregate_mean(updates: Union[Sequence[np.ndarray], Mapping[int, np.ndarray]]) -> np.ndarray:
    """Coordinate-wise mean of client vectors.

    A mapping is read in ascending client-id order.  Each coordinate is the
    exactly rounded mean (rational arithmetic), so the result does not depend
    on summation order and the mean of identical vectors is that vector.
    """
    if isinstance(updates, Mapping):
        vectors = [updates[cid] for cid in sorted(updates)]
    else:
        vectors = list(updates)
    if not vectors:
        raise InvalidInputError("no updates to aggregate")
    stacked = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vectors]
    dim = stacked[0].size
    for v in stacked[1:]:
        if v.size != dim:
            raise ShapeError(f"dimension mismatch: {dim} vs {v.size}")
    if not all(np.all(np.isfinite(v)) for v in stacked):
        raise InvalidInputError("cannot aggregate non-finite parameters")
    n = len(stacked)
    if n == 1:
        return stacked[0].copy()
    columns = np.stack(stacked, axis=1).tolist()
    return np.array([float(sum(map(Fraction, col)) / n) for col in columns])


def sigmoid_k(x: float, k: float, midpoint: float) -> float:
    z = -k * (x - midpoint)
    if z > 0:
        ez = math.exp(-z)
        return ez / (1.0 + ez)
    return 1.0 / (1.0 + math.exp(z))


def phi_score(delta: float, k: float, midpoint: float) -> float:
    """Normalised sigmoid of a positive score gap; 0 for gaps <= 0, clamped to [0, 1]."""
    if not k > 0:
        raise InvalidInputError("k must be positive")
    if delta <= 0:
        return 0.0
    s0 = sigmoid_k(0.0, k, midpoint)
    phi = (sigmoid_k(delta, k, midpoint) - s0) / (sigmoid_k(1.0, k, midpoint) - s0)
    return min(max(phi, 0.0), 1.0)


def compute_alpha(phi: float, sched: AlphaSchedule) -> float:
    if not 0 <= phi <= 1:
        raise InvalidInputError(f"phi {phi} outside [0, 1]")
    return sched.alpha_min + phi * (sched.alpha_max - sched.alpha_min)


def delta_s(s_g: float, s_l: float) -> float:
    return s_g - s_l


def blend_update(local_trained: np.ndarray, global_params: np.ndarray, alpha: float) -> np.ndarray:
    local_trained = np.asarray(local_trained, dtype=np.float64)
    global_params = np.asarray(global_params, dtype=np.float64)
    check_same_dim(local_trained, global_params)
    if not 0 <= alpha <= 1:
        raise InvalidInputError(f"alpha {alpha} outside [0, 1]")
    return (1.0 - alpha) * local_trained + alpha * global_params


def k_schedule(sched: AlphaSchedule, round_index: int) -> float:
    # growth law is linear per communication round
    if round_index < 0:
        raise InvalidInputError("round index must be >= 0")
    return sched.k0 * (1.0 + sched.k_growth * round_index)


def fedprox_penalty(w: np.ndarray, anchor: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
    """Proximal term ``mu/2 * ||w - anchor||^2`` and its gradient."""
    w = np.asarray(w, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    check_same_dim(w, anchor)
    diff = w - anchor
    return 0.5 * mu * float(diff @ diff), mu * diff
