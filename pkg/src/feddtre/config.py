"""Experiment spec files.

Specs are JSON objects with nested sections::

    {
      "name": "reference",
      "output_dir": "runs/reference",
      "fedprox_mu": 0.01,
      "corpus": {"vocab_size": 16, "n_sequences": 400, ...},
      "federation": {
        "n_clients": 8, "clients_per_round": 2, "rounds": 30,
        "strategy": {"kind": "feddtre", "schedule": {"k0": 0.7, ...}},
        "train": {"learning_rate": 2.0, "local_steps": 5, ...},
        "seeds": {"data": 0, "sampling": 1, "training": 2, "eval": 3},
        "evaluator": {"kind": "f1", ...}
      }
    }

Missing keys take their defaults; unknown keys are rejected.  The canonical
form (:func:`dump_spec`) writes every key, sorted, with two-space indent.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .corpus import CorpusConfig
from .errors import ConfigError, InvalidInputError
from .model import TrainConfig
from .sim import EvaluatorConfig, FederationConfig, Seeds
from .strategies import AlphaSchedule, FedAvg, FedDTRE, FedProx, FixedAlpha, strategy_to_dict

_SAFE_NAME = re.compile(r"^[A-Za-z0-9_-][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    federation: FederationConfig = field(default_factory=FederationConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    output_dir: str = "runs"
    fedprox_mu: float = 0.01

    def __post_init__(self):
        if not isinstance(self.name, str) or not _SAFE_NAME.match(self.name):
            raise ConfigError("name", f"must be a non-empty filesystem-safe name, got {self.name!r}")
        if not self.fedprox_mu > 0:
            raise ConfigError("fedprox_mu", "must be positive")

    def with_seed(self, seed: int) -> "ExperimentSpec":
        seeds = Seeds(data=seed, sampling=seed + 1, training=seed + 2, eval=seed + 3)
        return replace(
            self,
            federation=replace(self.federation, seeds=seeds),
            corpus=replace(self.corpus, seed=seed),
        )


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name


def _build(cls, data: Any, path: str, **nested):
    if not isinstance(data, Mapping):
        raise ConfigError(path or "spec", f"expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(_join(path, unknown[0]), "unknown key")
    kwargs = {k: v for k, v in data.items() if k not in nested}
    kwargs.update({k: v for k, v in nested.items() if k in data})
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(_join(path, exc.field), exc.message) from None
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(path or "spec", str(exc)) from None


def _strategy(data: Any, path: str):
    if not isinstance(data, Mapping):
        raise ConfigError(path, "expected an object")
    kind = data.get("kind")
    rest = {k: v for k, v in data.items() if k != "kind"}
    if kind == "fedavg":
        return _build(FedAvg, rest, path)
    if kind == "fedprox":
        return _build(FedProx, rest, path)
    if kind == "fixed_alpha":
        return _build(FixedAlpha, rest, path)
    if kind == "feddtre":
        sched = _build(AlphaSchedule, rest.get("schedule", {}), f"{path}.schedule")
        return _build(FedDTRE, rest, path, schedule=sched)
    raise ConfigError(f"{path}.kind", f"unknown strategy kind {kind!r}")


def parse_spec(data: Mapping) -> ExperimentSpec:
    if not isinstance(data, Mapping):
        raise ConfigError("spec", "top level must be an object")
    fed = data.get("federation", {})
    nested = {}
    if isinstance(fed, Mapping):
        if "strategy" in fed:
            nested["strategy"] = _strategy(fed["strategy"], "federation.strategy")
        if "train" in fed:
            nested["train"] = _build(TrainConfig, fed["train"], "federation.train")
        if "seeds" in fed:
            nested["seeds"] = _build(Seeds, fed["seeds"], "federation.seeds")
        if "evaluator" in fed:
            nested["evaluator"] = _build(EvaluatorConfig, fed["evaluator"], "federation.evaluator")
    federation = _build(FederationConfig, fed, "federation", **nested)
    corpus = _build(CorpusConfig, data.get("corpus", {}), "corpus")
    top = {k: v for k, v in data.items() if k not in ("federation", "corpus")}
    if "name" not in top:
        raise ConfigError("name", "missing")
    return _build(ExperimentSpec, {**top, "federation": None, "corpus": None}, "", federation=federation, corpus=corpus)


def load_spec(path) -> ExperimentSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("spec", f"invalid JSON: {exc}") from None
    return parse_spec(data)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    out = dataclasses.asdict(spec)
    out["federation"]["strategy"] = strategy_to_dict(spec.federation.strategy)
    return out


def dump_spec(spec: ExperimentSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n"
