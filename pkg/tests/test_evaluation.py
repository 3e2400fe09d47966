import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldivec.errors import ValidationError
from ldivec.evaluation import evaluate
from ldivec.scoring import ScoreMatrix


def naive(scores, labels):
    S, L = len(scores), len(scores[0])
    correct, loss = 0, 0.0
    confusion = [[0] * L for _ in range(L)]
    for row, lab in zip(scores, labels):
        best = max(range(L), key=lambda k: (row[k], -k))
        correct += best == lab
        confusion[lab][best] += 1
        top = max(row)
        loss -= row[lab] - top - math.log(sum(math.exp(v - top) for v in row))
    return correct / S, confusion, loss / S


def test_perfect_scores():
    rep = evaluate(np.eye(3) * 50, [0, 1, 2])
    assert rep.accuracy == 1.0
    assert np.array_equal(rep.confusion, np.eye(3, dtype=int))
    assert 0 <= rep.log_loss < 1e-20


def test_flat_scores_tie_to_first_language():
    rep = evaluate(np.zeros((5, 4)), [0, 1, 2, 3, 0])
    assert rep.accuracy == pytest.approx(0.4)
    assert rep.confusion[:, 0].tolist() == [2, 1, 1, 1]
    assert rep.log_loss == pytest.approx(math.log(4), abs=1e-15)


def test_matches_naive_loop(rng):
    x = rng.standard_normal((40, 5)) * 3
    labels = rng.integers(0, 5, 40)
    acc, conf, loss = naive(x.tolist(), labels.tolist())
    rep = evaluate(x, labels)
    assert rep.accuracy == acc
    assert rep.confusion.tolist() == conf
    assert rep.log_loss == pytest.approx(loss, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_row_shift_and_column_permutation_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((12, 4))
    labels = rng.integers(0, 4, 12)
    base = evaluate(x, labels)
    shifted = evaluate(x + shift, labels)
    assert abs(shifted.log_loss - base.log_loss) <= 1e-12 * max(1.0, abs(shift))
    assert np.array_equal(shifted.confusion, base.confusion)
    perm = rng.permutation(4)
    inv = np.argsort(perm)
    permuted = evaluate(x[:, perm], inv[labels])
    assert permuted.accuracy == base.accuracy
    assert abs(permuted.log_loss - base.log_loss) <= 1e-12


def test_labels_taken_from_score_matrix():
    sm = ScoreMatrix([[1.0, 0.0], [0.0, 1.0]], "ld", [0, 0], ["a", "b"])
    rep = evaluate(sm)
    assert rep.accuracy == 0.5 and rep.languages == ["a", "b"]
    text = rep.to_text()
    assert "accuracy  0.5000" in text and "confusion" in text
    kv = rep.to_keyvalue()
    assert "accuracy = 0.5\n" in kv and "confusion.0 = 1 1\n" in kv


def test_missing_or_bad_labels():
    with pytest.raises(ValidationError):
        evaluate(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        evaluate(np.zeros((2, 2)), [0, -1])
    with pytest.raises(ValidationError):
        evaluate(np.zeros((2, 2)), [0, 2])
    with pytest.raises(ValidationError):
        evaluate(np.zeros((2, 2)), [0])
