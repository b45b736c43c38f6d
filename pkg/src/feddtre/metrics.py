"""BLEU, ROUGE-N and the per-strategy metric report."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, fields
from typing import Protocol, Sequence

from .errors import InvalidInputError

TokenSequence = Sequence[int]

REPORT_COLUMNS = ("BLEU-1", "BLEU-4", "ROUGE-1", "ROUGE-2", "trust")


def _ngrams(seq: TokenSequence, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def brevity_penalty(lc: int, lr: int) -> float:
    if lc < 1 or lr < 1:
        raise InvalidInputError("lengths must be >= 1")
    if lc > lr:
        return 1.0
    return math.exp(1.0 - lr / lc)


def bleu(candidate: TokenSequence, references: Sequence[TokenSequence], max_n: int = 4) -> float:
    """Sentence BLEU with reference clipping, uniform weights and no smoothing.

    Any zero n-gram precision gives a score of 0.  The reference length used
    for the brevity penalty is the one closest to the candidate, ties going
    to the shorter reference.
    """
    if not 1 <= max_n <= 4:
        raise InvalidInputError("max_n must be in [1, 4]")
    if len(candidate) == 0:
        raise InvalidInputError("candidate is empty")
    if not references or any(len(r) == 0 for r in references):
        raise InvalidInputError("references must be a non-empty list of non-empty sequences")

    precisions = []
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for ref in references:
            max_ref |= _ngrams(ref, n)
        clipped = sum(min(c, max_ref[g]) for g, c in cand.items())
        if clipped == 0:
            return 0.0
        precisions.append(clipped / total)

    lc = len(candidate)
    lr = min((len(r) for r in references), key=lambda length: (abs(length - lc), length))
    # product ** (1/N) is exp(sum(log(p_n) / N)) without the log/exp round trip
    return brevity_penalty(lc, lr) * math.prod(precisions) ** (1.0 / max_n)


def rouge_n(candidate: TokenSequence, references: Sequence[TokenSequence], n: int) -> float:
    """Clipped n-gram recall pooled over all references."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if not references:
        raise InvalidInputError("references must be non-empty")
    cand = _ngrams(candidate, n)
    matched = 0
    total = 0
    for ref in references:
        ref_grams = _ngrams(ref, n)
        total += sum(ref_grams.values())
        matched += sum(min(c, cand[g]) for g, c in ref_grams.items())
    if total == 0:
        raise InvalidInputError(f"no reference has at least {n} tokens")
    return matched / total


@dataclass(frozen=True)
class MetricReport:
    bleu_1: float
    bleu_4: float
    rouge_1: float
    rouge_2: float
    trust: float
    n_pairs: int
    averaging: str = "sentence"

    def values(self) -> tuple[float, ...]:
        return (self.bleu_1, self.bleu_4, self.rouge_1, self.rouge_2, self.trust)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def format_table(rows: Sequence[tuple[str, MetricReport]], title: str = "Method") -> str:
    """Aligned text table, one row per method, scores shown as percentages."""
    header = [title, *REPORT_COLUMNS]
    body = [[label, *(f"{100 * v:.2f}" for v in report.values())] for label, report in rows]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = (c.rjust(w) for c, w in zip(cells[1:], widths[1:]))
        return "  ".join([first, *rest])

    rule = "-" * len(line(header))
    return "\n".join([rule, line(header), rule, *(line(r) for r in body), rule]) + "\n"


class Responder(Protocol):
    def respond(self, context: TokenSequence, max_len: int) -> list[int]: ...


def evaluate_generation(model: Responder, test, ev, max_len: int = 16) -> MetricReport:
    """Generate a reply per test context and average sentence-level scores.

    ``test`` is a sequence of ``(context, reference)`` pairs; ``ev`` is any
    trust evaluator.  An empty reply scores 0 on every metric.
    """
    if len(test) == 0:
        raise InvalidInputError("test set is empty")
    sums = [0.0] * 5
    for context, reference in test:
        reply = model.respond(context, max_len)
        if reply:
            scores = (
                bleu(reply, [reference], 1),
                bleu(reply, [reference], 4),
                rouge_n(reply, [reference], 1),
                rouge_n(reply, [reference], 2),
                ev.score(context, reply),
            )
        else:
            rouge_n([], [reference], 2)  # still validate the reference
            scores = (0.0,) * 5
        sums = [s + x for s, x in zip(sums, scores)]
    n = len(test)
    return MetricReport(*(s / n for s in sums), n_pairs=n)
