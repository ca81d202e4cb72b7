"""Token embedding layer and the mask-token query path.

Both paths share the same word/position/token-type tables and the same
normalization parameters; the query path replaces every word row with the
[mask] token's row, so for a fixed length it is independent of sentence
content.
"""

from __future__ import annotations

from . import tensor as T
from .errors import ConfigError, InputError
from .vocab import MASK_ID, NUM_SPECIALS


class EmbeddingTables:
    """Word / position / token-type tables plus the shared layer-norm pair."""

    def __init__(self, vocab_size, dim, max_len=128, type_count=2, init_scale=0.02, rng=None):
        if vocab_size < NUM_SPECIALS:
            raise ConfigError(f"vocab_size must be >= {NUM_SPECIALS}, got {vocab_size}")
        if max_len < 1:
            raise ConfigError(f"max_len must be positive, got {max_len}")
        self.vocab_size = int(vocab_size)
        self.dim = int(dim)
        self.max_len = int(max_len)
        self.mask_token_id = MASK_ID
        self.word = T.parameter(rng.normal(0.0, init_scale, (vocab_size, dim)), "embedding.word")
        self.position = T.parameter(rng.normal(0.0, init_scale, (max_len, dim)), "embedding.position")
        self.token_type = T.parameter(rng.normal(0.0, init_scale, (type_count, dim)), "embedding.token_type")
        self.norm_gain = T.parameter([1.0] * dim, "embedding.norm_gain", decay=False)
        self.norm_bias = T.parameter([0.0] * dim, "embedding.norm_bias", decay=False)

    def parameters(self):
        return {
            "embedding.word": self.word,
            "embedding.position": self.position,
            "embedding.token_type": self.token_type,
            "embedding.norm_gain": self.norm_gain,
            "embedding.norm_bias": self.norm_bias,
        }


def _check_length(n, tables):
    if n > tables.max_len:
        raise InputError(f"sequence length {n} exceeds the maximum of {tables.max_len}")


def embed(token_ids, tables, training, rng, dropout_rate=0.1, norm_eps=1e-12):
    """Sum of word+position+type rows, then layer norm, then dropout -> (n, d)."""
    ids = list(token_ids)
    _check_length(len(ids), tables)
    for pos, tid in enumerate(ids):
        if not 0 <= int(tid) < tables.vocab_size:
            raise InputError(
                f"token id {tid} at position {pos} outside vocabulary of size {tables.vocab_size}"
            )
    return _embed_rows(ids, tables, training, rng, dropout_rate, norm_eps)


def embed_mask_query(length, tables, training, rng, dropout_rate=0.1, norm_eps=1e-12):
    """Query embeddings for a mask-token sequence of the given length.

    The word row is the [mask] embedding at every position; position and
    token-type rows, the layer norm and the dropout are the same operators
    as in ``embed`` (the tables are shared by reference).
    """
    n = int(length)
    if n < 0:
        raise InputError(f"length must be non-negative, got {length}")
    _check_length(n, tables)
    return _embed_rows([tables.mask_token_id] * n, tables, training, rng, dropout_rate, norm_eps)


def _embed_rows(ids, tables, training, rng, dropout_rate, norm_eps):
    n = len(ids)
    words = T.gather_rows(tables.word, ids)
    positions = T.gather_rows(tables.position, range(n))
    types = T.gather_rows(tables.token_type, [0] * n)
    summed = T.add(T.add(words, positions), types)
    normed = T.layer_norm(summed, tables.norm_gain, tables.norm_bias, eps=norm_eps)
    return T.dropout(normed, dropout_rate, training, rng)
