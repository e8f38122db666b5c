import numpy as np
import pytest

from textcount.tokenizer import END_ID, PAD_ID, START_ID, HashTokenizer


def test_output_shape_and_dtype():
    tok = HashTokenizer()
    out = tok(["the red apples", "three dogs"])
    assert out.shape == (2, 77)
    assert out.dtype == np.int64


def test_single_string_is_batched():
    tok = HashTokenizer()
    out = tok("the sea shells")
    assert out.shape == (1, 77)


def test_start_end_and_padding_structure():
    tok = HashTokenizer()
    row = tok(["two words"])[0]
    assert row[0] == START_ID
    body = row[row != PAD_ID]
    assert body[-1] == END_ID
    # start + 2 words + end
    assert len(body) == 4
    assert np.all(row[len(body):] == PAD_ID)


def test_empty_text_still_well_formed():
    row = HashTokenizer()(["  "])[0]
    assert row[0] == START_ID and row[1] == END_ID
    assert np.all(row[2:] == PAD_ID)


def test_ids_within_vocab():
    tok = HashTokenizer(vocab_size=512, context_length=16)
    texts = [f"word{i} thing{i * 7} stuff" for i in range(50)]
    out = tok(texts)
    assert out.min() >= 0
    assert out.max() < 512


def test_deterministic_and_case_insensitive():
    tok = HashTokenizer()
    a = tok(["The Red Apples"])
    b = tok(["the red apples"])
    assert np.array_equal(a, b)
    assert np.array_equal(tok(["the red apples"]), tok(["the red apples"]))


def test_distinct_words_usually_distinct_ids():
    tok = HashTokenizer()
    ids = tok([f"uniqueword{i}" for i in range(100)])[:, 1]
    assert len(set(ids.tolist())) > 95


def test_truncation_keeps_end_token():
    tok = HashTokenizer(context_length=8)
    row = tok([" ".join(f"w{i}" for i in range(30))])[0]
    assert len(row) == 8
    assert row[0] == START_ID
    assert row[-1] == END_ID
    assert np.all(row != PAD_ID)


def test_word_ids_never_collide_with_specials():
    tok = HashTokenizer()
    row = tok(["alpha beta gamma delta epsilon zeta eta theta"])[0]
    body = row[row != PAD_ID]
    words = body[1:-1]          # strip the start and end markers
    for special in (PAD_ID, START_ID, END_ID):
        assert special not in words


def test_rejects_tiny_vocab():
    with pytest.raises(Exception):
        HashTokenizer(vocab_size=3)
