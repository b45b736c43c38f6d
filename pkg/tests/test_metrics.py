import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feddtre.errors import InvalidInputError
from feddtre.metrics import MetricReport, bleu, brevity_penalty, evaluate_generation, format_table, rouge_n
from feddtre.model import ToyDialogueModel
from feddtre.trust import DeterministicF1, EmbeddingTable

A, B, C, D, E = range(1, 6)

tokens = st.lists(st.integers(0, 5), min_size=1, max_size=8)


def naive_rouge(cand, ref, n):
    ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
    cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
    used = [False] * len(cand_grams)
    hits = 0
    for g in ref_grams:
        for j, h in enumerate(cand_grams):
            if not used[j] and h == g:
                used[j] = True
                hits += 1
                break
    return hits / len(ref_grams)


def naive_bleu(cand, ref, max_n):
    logs = 0.0
    for n in range(1, max_n + 1):
        cg = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
        if not cg:
            return 0.0
        rc = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
        hit = 0
        for g, c in Counter(cg).items():
            hit += min(c, rc[g])
        if hit == 0:
            return 0.0
        logs += math.log(hit / len(cg)) / max_n
    lc, lr = len(cand), len(ref)
    bp = 1.0 if lc > lr else math.exp(1 - lr / lc)
    return bp * math.exp(logs)


def test_brevity_penalty():
    assert brevity_penalty(5, 3) == 1.0
    assert brevity_penalty(4, 4) == 1.0
    assert brevity_penalty(2, 4) == pytest.approx(math.exp(-1), abs=1e-15)
    with pytest.raises(InvalidInputError):
        brevity_penalty(0, 3)


def test_bleu_hand_cases():
    assert bleu([A, B, C, D], [[A, B, C, D]], 4) == 1.0
    assert bleu([A, B, C, D], [[A, B, C, D, E]], 1) == pytest.approx(math.exp(-0.25), abs=1e-12)
    assert bleu([A, B], [[C, D, E]], 1) == 0.0
    # no 4-grams in a 3-token candidate
    assert bleu([A, B, C], [[A, B, C]], 4) == 0.0


def test_bleu_closest_reference_ties_to_shorter():
    # lc = 4, references of length 3 and 5 -> lr = 3, BP = 1
    assert bleu([A, B, C, D], [[A, B, C], [A, B, C, D, E]], 1) == 1.0
    # lc = 2, references of length 1 and 3 -> lr = 1
    assert bleu([A, B], [[A], [A, B, C]], 1) == 1.0


def test_bleu_clips_repeated_tokens():
    assert bleu([A, A, A, A], [[A, B, C]], 1) == pytest.approx(0.25)


def test_bleu_errors():
    with pytest.raises(InvalidInputError):
        bleu([], [[A]], 1)
    with pytest.raises(InvalidInputError):
        bleu([A], [], 1)
    with pytest.raises(InvalidInputError):
        bleu([A], [[A]], 5)


def test_rouge_hand_cases():
    assert rouge_n([A, B, C], [[A, B, C]], 2) == 1.0
    assert rouge_n([A, C, D], [[A, B, C]], 1) == 2 / 3
    assert rouge_n([D, E], [[A, B, C]], 1) == 0.0
    with pytest.raises(InvalidInputError):
        rouge_n([A, B], [[A]], 2)


def test_rouge_pools_references():
    # matches 2 of 3 in the first reference and 1 of 2 in the second
    assert rouge_n([A, B], [[A, B, C], [B, D]], 1) == 3 / 5


def test_rouge1_matches_naive_oracle_on_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(500):
        cand = rng.integers(0, 6, size=rng.integers(1, 9)).tolist()
        ref = rng.integers(0, 6, size=rng.integers(1, 9)).tolist()
        assert rouge_n(cand, [ref], 1) == naive_rouge(cand, ref, 1)


@settings(max_examples=200)
@given(tokens, tokens, st.integers(1, 4))
def test_bleu_matches_naive_oracle(cand, ref, n):
    assert bleu(cand, [ref], n) == pytest.approx(naive_bleu(cand, ref, n), rel=1e-12, abs=1e-15)


@settings(max_examples=200)
@given(tokens, tokens, st.permutations(list(range(6))))
def test_metrics_invariant_under_relabelling(cand, ref, perm):
    relabel = lambda seq: [perm[t] for t in seq]
    for n in (1, 2, 3, 4):
        assert bleu(cand, [ref], n) == bleu(relabel(cand), [relabel(ref)], n)
        if len(ref) >= n:
            assert rouge_n(cand, [ref], n) == rouge_n(relabel(cand), [relabel(ref)], n)
            assert 0.0 <= rouge_n(cand, [ref], n) <= 1.0
        assert 0.0 <= bleu(cand, [ref], n) <= 1.0


@settings(max_examples=200)
@given(tokens, tokens)
def test_bleu1_long_candidate_is_clipped_precision(cand, ref):
    if len(cand) <= len(ref):
        return
    clipped = sum(min(c, Counter(ref)[t]) for t, c in Counter(cand).items())
    assert bleu(cand, [ref], 1) == clipped / len(cand)


class Echo:
    """Test double that answers with a fixed reply per context."""

    def __init__(self, replies):
        self.replies = replies

    def respond(self, context, max_len):
        return list(self.replies[tuple(context)])


def test_echo_model_scores_perfectly():
    table = EmbeddingTable.random(8, 4, 0)
    test = [([1, 2], [1, 2, 3, 4]), ([5], [5, 6, 7, 0])]
    echo = Echo({tuple(c): c for c, _ in test} | {(1, 2): [1, 2, 3, 4], (5,): [5, 6, 7, 0]})
    report = evaluate_generation(echo, test, DeterministicF1(table))
    assert report.bleu_1 == report.bleu_4 == report.rouge_1 == report.rouge_2 == 1.0
    # trust compares reply with context, not with the reference
    ctx_echo = Echo({(1, 2): [1, 2], (5,): [5]})
    test2 = [([1, 2], [1, 2]), ([5], [5, 0])]
    assert evaluate_generation(ctx_echo, test2, DeterministicF1(table)).trust == pytest.approx(1.0, abs=1e-12)


def test_singleton_report_equals_sentence_metrics():
    table = EmbeddingTable.random(8, 4, 0)
    ev = DeterministicF1(table)
    reply = [2, 3, 1, 0]
    ctx, ref = [1], [2, 3, 4, 0]
    report = evaluate_generation(Echo({(1,): reply}), [(ctx, ref)], ev)
    assert report.values() == (
        bleu(reply, [ref], 1),
        bleu(reply, [ref], 4),
        rouge_n(reply, [ref], 1),
        rouge_n(reply, [ref], 2),
        ev.score(ctx, reply),
    )
    assert report.n_pairs == 1 and report.averaging == "sentence"


def test_report_matches_scripted_computation():
    rng = np.random.default_rng(21)
    v = 7
    model = ToyDialogueModel(v, rng.normal(size=v * v))
    table = EmbeddingTable.random(v, 3, 4)
    test = [(rng.integers(1, v, size=2).tolist(), rng.integers(0, v, size=4).tolist()) for _ in range(15)]
    report = evaluate_generation(model, test, DeterministicF1(table), max_len=6)

    # scripted: manual greedy decode + naive metrics
    tab = model.params.reshape(v, v).tolist()
    cols = [[], [], [], [], []]
    for ctx, ref in test:
        cur, reply = ctx[-1], []
        while len(reply) < 6:
            cur = max(range(v), key=lambda j: (tab[cur][j], -j))
            reply.append(cur)
            if cur == 0:
                break
        vec = table.vectors.tolist()
        sim = lambda i, j: min(max(sum(a * b for a, b in zip(vec[i], vec[j])), 0.0), 1.0)
        rec = sum(max(sim(x, r) for r in reply) for x in ctx) / len(ctx)
        prec = sum(max(sim(x, r) for x in ctx) for r in reply) / len(reply)
        f1 = 2 * rec * prec / (rec + prec) if rec + prec > 0 else 0.0
        for col, val in zip(cols, (naive_bleu(reply, ref, 1), naive_bleu(reply, ref, 4),
                                    naive_rouge(reply, ref, 1), naive_rouge(reply, ref, 2), f1)):
            col.append(val)
    expected = [sum(c) / len(c) for c in cols]
    np.testing.assert_allclose(report.values(), expected, rtol=1e-12, atol=1e-15)


def test_evaluate_generation_rejects_empty():
    with pytest.raises(InvalidInputError):
        evaluate_generation(Echo({}), [], None)


def test_format_table_columns():
    rep = MetricReport(0.1, 0.02, 0.3, 0.04, 0.5, 3)
    text = format_table([("FedAvg", rep), ("FedDTRE", rep)])
    lines = text.splitlines()
    assert lines[1].split() == ["Method", "BLEU-1", "BLEU-4", "ROUGE-1", "ROUGE-2", "trust"]
    assert lines[3].split() == ["FedAvg", "10.00", "2.00", "30.00", "4.00", "50.00"]
