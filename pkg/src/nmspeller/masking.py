"""N-gram attention masks over a [cls] chars [sep] [pad]* layout.

Each query row i hides itself and, depending on the mode, one or both of its
neighbors behind a large negative additive score. Two sentence-boundary
exceptions apply: the first character keeps its left neighbor ([cls])
visible and the last character keeps its right neighbor ([sep]) visible;
neighbors that fall outside the sequence or on padding simply do not exist.
The self index is always masked for modes other than ``none``.

Note: a sequence with no characters at all ([cls][sep]) can mask every
column of a row, in which case the softmax renormalizes uniformly; real
sentences always leave unmasked columns.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .errors import ConfigError, InputError

MASK_FILL = -10000.0


class NGramMode(Enum):
    NONE = "none"
    UNIGRAM = "unigram"
    LEFT_BIGRAM = "left_bigram"
    RIGHT_BIGRAM = "right_bigram"
    TRIGRAM = "trigram"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for mode in cls:
            if mode.value == key:
                return mode
        options = ", ".join(m.value for m in cls)
        raise ConfigError(f"unknown n-gram mode {value!r}; expected one of: {options}")


_OFFSETS = {
    NGramMode.UNIGRAM: (0,),
    NGramMode.LEFT_BIGRAM: (-1, 0),
    NGramMode.RIGHT_BIGRAM: (0, 1),
    NGramMode.TRIGRAM: (-1, 0, 1),
}


def build_mask_indices(mode, n_total, padding=None):
    """Per-row sets of masked key positions, or ``None`` for mode ``none``.

    ``padding`` is an optional boolean sequence (True = padding position) of
    length ``n_total``; padding rows get empty sets and padding columns are
    never masked here (the separate padding mask handles them).
    """
    mode = NGramMode.parse(mode)
    if mode is NGramMode.NONE:
        return None
    n_total = int(n_total)
    if n_total < 2:
        raise InputError(f"sequence needs at least [cls] and [sep], got length {n_total}")
    if padding is None:
        padding = [False] * n_total
    else:
        padding = [bool(p) for p in padding]
        if len(padding) != n_total:
            raise InputError(f"padding flags length {len(padding)} != sequence length {n_total}")

    real = [i for i in range(n_total) if not padding[i]]
    sep_pos = max(real)
    first_char = 1 if sep_pos >= 2 else None
    last_char = sep_pos - 1 if sep_pos >= 2 else None

    offsets = _OFFSETS[mode]
    rows = []
    for i in range(n_total):
        if padding[i]:
            rows.append(set())
            continue
        idx = {i + off for off in offsets}
        idx = {j for j in idx if 0 <= j < n_total and not padding[j]}
        if i == first_char:
            idx.discard(i - 1)
        if i == last_char:
            idx.discard(i + 1)
        idx.add(i)
        rows.append(idx)
    return rows


def ngram_additive_mask(mask_indices, n_total):
    """Constant (n, n) tensor with MASK_FILL at masked (row, column) slots."""
    mat = np.zeros((n_total, n_total))
    for i, cols in enumerate(mask_indices):
        for j in cols:
            mat[i, j] = MASK_FILL
    return T.Tensor(mat)


def padding_additive_mask(padding):
    """Constant (n, n) tensor with MASK_FILL on padding columns, or None."""
    padding = [bool(p) for p in padding]
    if not any(padding):
        return None
    n = len(padding)
    mat = np.zeros((n, n))
    mat[:, np.array(padding, dtype=bool)] = MASK_FILL
    return T.Tensor(mat)
