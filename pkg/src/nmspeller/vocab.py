"""Character vocabulary with the five reserved control tokens.

Vocabulary file format: one token per line, line number = id, and the first
five lines must be [pad], [cls], [sep], [mask], [unk] in that order.
"""

from __future__ import annotations

from .errors import InputError

SPECIALS = ("[pad]", "[cls]", "[sep]", "[mask]", "[unk]")
PAD_ID, CLS_ID, SEP_ID, MASK_ID, UNK_ID = range(5)
NUM_SPECIALS = len(SPECIALS)


class Vocab:
    def __init__(self, tokens):
        tokens = list(tokens)
        if len(tokens) < NUM_SPECIALS:
            raise InputError(f"vocabulary needs at least {NUM_SPECIALS} entries, got {len(tokens)}")
        if tuple(tokens[:NUM_SPECIALS]) != SPECIALS:
            raise InputError(
                f"vocabulary must start with {' '.join(SPECIALS)}, got {tokens[:NUM_SPECIALS]}"
            )
        if len(set(tokens)) != len(tokens):
            raise InputError("vocabulary contains duplicate tokens")
        self.tokens = tokens
        self._index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def encode_char(self, char):
        return self._index.get(char, UNK_ID)

    def encode(self, text):
        return [self.encode_char(c) for c in text]

    def decode_id(self, token_id):
        if not 0 <= token_id < len(self.tokens):
            raise InputError(f"token id {token_id} outside vocabulary of size {len(self.tokens)}")
        return self.tokens[token_id]

    def decode(self, ids):
        return "".join(self.decode_id(i) for i in ids)

    @property
    def real_ids(self):
        """Ids of actual characters, i.e. everything past the control tokens."""
        return range(NUM_SPECIALS, len(self.tokens))

    @staticmethod
    def is_special(token_id):
        return token_id < NUM_SPECIALS

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)
