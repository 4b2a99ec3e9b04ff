import numpy as np
import pytest

from pama_tts.errors import ShapeError, TokenError
from pama_tts.models import Token, TokenKind
from pama_tts.services.token_model import (
    Vocabulary,
    apply_filter,
    build_sequence,
    filter_mask,
    parse_utterance,
)
from pama_tts.utils.numerics import Array


def names(seq):
    return [t.name for t in seq.tokens]


def test_one_syllable_order():
    seq = build_sequence([((1, 2), 3, 1)])
    assert names(seq) == ["sil", "p1", "p2", "t3", "#1", "sil"]
    assert list(filter_mask(seq)) == [True, True, True, False, False, True]


def test_boundary_three_is_kept():
    seq = build_sequence([((1,), 2, 3), ((4,), 1, 0)])
    idx = names(seq).index("#3")
    assert seq.filter_mask[idx]
    assert not seq.filter_mask[names(seq).index("#0")]


def test_empty_syllable_list_fails():
    with pytest.raises(TokenError):
        build_sequence([])


@pytest.mark.parametrize("syllable", [((1,), 6, 0), ((1,), 0, 0), ((1,), 2, 4), ((), 2, 1)])
def test_out_of_range_values_fail(syllable):
    with pytest.raises(TokenError):
        build_sequence([syllable])


def test_parse_round_trip():
    text = "sil p3 p7 t3 #1 p2 t5 #3 sil"
    seq = parse_utterance(text)
    assert seq.to_text() == text
    assert parse_utterance("p3 p7 t3 #1 p2 t5 #3").to_text() == text


@pytest.mark.parametrize("text", ["p1 #1", "t3 #1", "p1 t3", "p1 t3 sil p2 t1 #0", "q1 t1 #0"])
def test_malformed_text_fails(text):
    with pytest.raises(TokenError):
        parse_utterance(text)


def test_vocabulary_is_a_bijection():
    vocab = Vocabulary(16)
    seen = set()
    for index in range(vocab.size):
        token = vocab.token(index)
        assert vocab.index(token) == index
        seen.add((token.kind, token.id))
    assert len(seen) == vocab.size == 26


def test_classifier_classes():
    vocab = Vocabulary(16)
    assert vocab.n_classes == 18
    assert vocab.class_id(Token(kind=TokenKind.SILENCE)) == 16
    assert vocab.class_id(Token(kind=TokenKind.BOUNDARY, id=3)) == 17
    with pytest.raises(TokenError):
        vocab.class_id(Token(kind=TokenKind.TONE, id=2))


def test_filter_keeps_rows_in_order():
    seq = parse_utterance("sil p1 t3 #1 sil")
    hidden = np.arange(10.0).reshape(5, 2)
    out = apply_filter(Array(hidden), seq.filter_mask).numpy()
    np.testing.assert_array_equal(out, hidden[[0, 1, 4]])


def test_all_true_mask_is_identity(rng):
    hidden = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(apply_filter(Array(hidden), [True] * 4).numpy(), hidden)


def test_filter_mask_errors(rng):
    hidden = Array(rng.normal(size=(4, 3)))
    with pytest.raises(ShapeError):
        apply_filter(hidden, [True, False, True])
    with pytest.raises(TokenError):
        apply_filter(hidden, [False] * 4)


def test_filtered_length_matches_labels(tiny_corpus):
    for utt in tiny_corpus:
        assert utt.tokens.filtered_count == utt.label.N
