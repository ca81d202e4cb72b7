"""Vocabulary handling plus the embedding layer and its mask-query twin."""

import numpy as np
import pytest

from nmspeller import tensor as T
from nmspeller.embedding import EmbeddingTables, embed, embed_mask_query
from nmspeller.errors import InputError
from nmspeller.vocab import MASK_ID, SPECIALS, Vocab


def make_tables(vocab=12, dim=8, max_len=16, seed=0):
    return EmbeddingTables(vocab, dim, max_len=max_len, rng=np.random.default_rng(seed))


class TestVocab:
    def test_specials_enforced(self):
        with pytest.raises(InputError):
            Vocab(["[cls]", "[pad]", "[sep]", "[mask]", "[unk]"])
        with pytest.raises(InputError):
            Vocab(list(SPECIALS) + ["a", "a"])

    def test_roundtrip(self, tmp_path):
        vocab = Vocab(list(SPECIALS) + list("abc"))
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        again = Vocab.load(path)
        assert again.tokens == vocab.tokens
        assert again.encode("cab") == vocab.encode("cab")
        assert again.encode_char("z") == 4  # unk fallback

    def test_real_ids_exclude_specials(self):
        vocab = Vocab(list(SPECIALS) + list("abc"))
        assert list(vocab.real_ids) == [5, 6, 7]
        assert vocab.is_special(0) and not vocab.is_special(5)


class TestEmbed:
    def test_zero_tables_give_zero_rows(self):
        tables = make_tables()
        for t in (tables.word, tables.position, tables.token_type):
            t.data[:] = 0.0
        out = embed([3, 7], tables, training=False, rng=None)
        np.testing.assert_array_equal(out.data, np.zeros((2, 8)))

    def test_output_shape(self):
        tables = make_tables()
        assert embed([1, 2, 3, 4], tables, False, None).shape == (4, 8)

    def test_positionwise_locality(self):
        tables = make_tables(seed=3)
        a = embed([5, 6, 7, 8], tables, False, None).data
        b = embed([5, 6, 9, 8], tables, False, None).data
        diff = np.abs(a - b).sum(axis=1)
        assert diff[2] > 0
        assert diff[0] == diff[1] == diff[3] == 0

    def test_bad_id_names_position(self):
        tables = make_tables()
        with pytest.raises(InputError, match="position 1"):
            embed([0, 99], tables, False, None)

    def test_length_cap(self):
        tables = make_tables(max_len=4)
        with pytest.raises(InputError):
            embed([1] * 5, tables, False, None)


class TestMaskQuery:
    def test_content_independence(self):
        tables = make_tables(seed=1)
        q = embed_mask_query(5, tables, False, None).data
        q2 = embed_mask_query(5, tables, False, None).data
        np.testing.assert_array_equal(q, q2)
        # and it equals embedding a row of [mask] tokens
        direct = embed([MASK_ID] * 5, tables, False, None).data
        np.testing.assert_array_equal(q, direct)

    def test_rows_vary_only_through_position_table(self):
        # with word and type contributions removed, rows are the normalized
        # position rows computed by an independent scalar path
        tables = make_tables(seed=2)
        tables.word.data[:] = 0.0
        tables.token_type.data[:] = 0.0
        q = embed_mask_query(3, tables, False, None).data
        pos = tables.position.data[:3]
        mu = pos.mean(axis=1, keepdims=True)
        var = pos.var(axis=1, keepdims=True)
        expected = (pos - mu) / np.sqrt(var + 1e-12)
        np.testing.assert_allclose(q, expected, atol=1e-12)

    def test_empty_length(self):
        tables = make_tables()
        assert embed_mask_query(0, tables, False, None).shape == (0, 8)

    def test_tables_shared_by_reference(self):
        tables = make_tables(seed=4)
        before_e = embed([6, 7], tables, False, None).data.copy()
        before_q = embed_mask_query(2, tables, False, None).data.copy()
        tables.position.data[1] += 0.5
        after_e = embed([6, 7], tables, False, None).data
        after_q = embed_mask_query(2, tables, False, None).data
        assert np.abs(after_e - before_e).sum() > 0
        assert np.abs(after_q - before_q).sum() > 0

    def test_deterministic_without_dropout(self):
        tables = make_tables(seed=5)
        rng = np.random.default_rng(0)
        a = embed([5, 6], tables, training=False, rng=rng).data
        b = embed([5, 6], tables, training=False, rng=rng).data
        np.testing.assert_array_equal(a, b)
