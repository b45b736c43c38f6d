"""Command-line entry point.

Example usage::

    feddtre run examples/reference.json
    feddtre compare examples/reference.json --out runs/compare
    feddtre ablate examples/reference.json --alpha 0.5,0.25
    feddtre run spec.json --seed-override 11

Every command writes ``rounds.jsonl``, ``summary.csv`` and ``report.txt``
into the output directory (the spec's ``output_dir`` unless ``--out`` is
given) and nowhere else.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ExperimentSpec, load_spec
from .corpus import Corpus, generate_corpus
from .errors import ConfigError, InvalidInputError, NumericFailure
from .metrics import format_table
from .sim import SUMMARY_COLUMNS, ExperimentResult, run_experiment, run_local_baseline
from .strategies import AlphaSchedule, FedAvg, FedDTRE, FedProx, FixedAlpha

log = logging.getLogger("feddtre")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _run_one(spec: ExperimentSpec, corpus: Corpus, strategy=None, local: bool = False) -> ExperimentResult:
    fed = spec.federation if strategy is None else replace(spec.federation, strategy=strategy)
    runner = run_local_baseline if local else run_experiment
    log.info("running %s", "Local" if local else type(fed.strategy).__name__)
    return runner(
        fed,
        corpus.train,
        corpus.eval_pairs,
        spec.corpus.vocab_size,
        trust_contexts=corpus.trust_contexts,
    )


def _schedule(spec: ExperimentSpec) -> AlphaSchedule:
    strategy = spec.federation.strategy
    return strategy.schedule if isinstance(strategy, FedDTRE) else AlphaSchedule()


def _report_header(spec: ExperimentSpec, title: str) -> str:
    c = spec.corpus
    s = spec.federation.seeds
    fed = spec.federation
    return (
        f"{title}: {spec.name}\n"
        f"corpus: vocab={c.vocab_size} sequences={c.n_sequences} len=[{c.min_len},{c.max_len}] "
        f"branching={c.branching} seed={c.seed}\n"
        f"federation: clients={fed.n_clients} per_round={fed.clients_per_round} rounds={fed.rounds} "
        f"lr={fed.train.learning_rate} local_steps={fed.train.local_steps} evaluator={fed.evaluator.kind}\n"
        f"seeds: data={s.data} sampling={s.sampling} training={s.training} eval={s.eval}\n"
        "scores: sentence-level means, shown x100\n"
    )


def write_outputs(out_dir: Path, spec: ExperimentSpec, results: Sequence[ExperimentResult], title: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rounds.jsonl").write_text("".join(r.rounds_jsonl() for r in results), encoding="utf-8")

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.summary_row())
    (out_dir / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")

    table = format_table([(r.strategy, r.metrics) for r in results])
    (out_dir / "report.txt").write_text(_report_header(spec, title) + table, encoding="utf-8")


def cmd_run(spec: ExperimentSpec, out_dir: Path) -> list[ExperimentResult]:
    corpus = generate_corpus(spec.corpus)
    results = [_run_one(spec, corpus)]
    write_outputs(out_dir, spec, results, "run")
    return results


def cmd_compare(spec: ExperimentSpec, out_dir: Path) -> list[ExperimentResult]:
    corpus = generate_corpus(spec.corpus)
    results = [
        _run_one(spec, corpus, local=True),
        _run_one(spec, corpus, FedAvg()),
        _run_one(spec, corpus, FedProx(spec.fedprox_mu)),
        _run_one(spec, corpus, FedDTRE(_schedule(spec))),
    ]
    write_outputs(out_dir, spec, results, "compare")
    return results


def cmd_ablate(spec: ExperimentSpec, out_dir: Path, alphas: Sequence[float]) -> list[ExperimentResult]:
    if not alphas:
        raise ConfigError("alpha", "need at least one value")
    for a in alphas:
        if not 0 <= a <= 1:
            raise ConfigError("alpha", f"{a} is outside [0, 1]")
    corpus = generate_corpus(spec.corpus)
    results = [_run_one(spec, corpus, FixedAlpha(a)) for a in alphas]
    results.append(_run_one(spec, corpus, FedDTRE(_schedule(spec))))
    write_outputs(out_dir, spec, results, "ablate")
    return results


def _alpha_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("spec", type=Path, help="experiment spec (JSON)")
    common.add_argument("--seed-override", type=int, default=None, help="replace every seed in the spec")
    common.add_argument("--out", type=Path, default=None, help="output directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="feddtre", description="Trust-driven federated aggregation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the spec's strategy")
    sub.add_parser("compare", parents=[common], help="Local, FedAvg, FedProx and FedDTRE side by side")
    ablate = sub.add_parser("ablate", parents=[common], help="fixed blend weights vs dynamic FedDTRE")
    ablate.add_argument("--alpha", type=_alpha_list, default=[0.5, 0.25], help="comma-separated fixed alphas")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = load_spec(args.spec)
        if args.seed_override is not None:
            spec = spec.with_seed(args.seed_override)
        out_dir = args.out if args.out is not None else Path(spec.output_dir)
        if args.command == "run":
            cmd_run(spec, out_dir)
        elif args.command == "compare":
            cmd_compare(spec, out_dir)
        else:
            cmd_ablate(spec, out_dir, args.alpha)
    except ConfigError as exc:
        print(f"error: invalid spec field {exc.field}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote rounds.jsonl, summary.csv, report.txt to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
