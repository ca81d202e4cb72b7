"""Multi-modal feature encoders and the dot-product gating fusion.

The pronunciation and glyph encoders are deliberately small: a one-layer
tanh recurrence over phoneme symbols and a component-bag sum. The gating
itself introduces no trainable parameters: per-position interaction scores
are row-wise dot products of [semantic ; sequence-mean] against the
duplicated modality encoding, squashed by a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import InputError, ShapeError
from .vocab import NUM_SPECIALS


@dataclass
class ModalityEncodings:
    semantic: T.Tensor        # (n, d)
    semantic_mean: T.Tensor   # (1, d), mean over non-padding rows
    phonetic: T.Tensor        # (n, d)
    graphic: T.Tensor         # (n, d)


@dataclass
class GateValues:
    scores_p: T.Tensor   # (n, 1)
    scores_g: T.Tensor   # (n, 1)
    gates_p: T.Tensor    # (n, 1), strictly inside (0, 1)
    gates_g: T.Tensor    # (n, 1)


class ModalityResources:
    """Per-character pronunciation and glyph component tables.

    Every vocabulary character must have an entry; control tokens map to
    empty sequences, which encode to zero rows.
    """

    def __init__(self, pronunciation, glyphs):
        self.pronunciation = {c: tuple(v) for c, v in pronunciation.items()}
        self.glyphs = {c: tuple(v) for c, v in glyphs.items()}

    def validate_cover(self, vocab):
        for token in vocab.tokens:
            if token not in self.pronunciation:
                raise InputError(f"pronunciation table misses vocabulary entry {token!r}")
            if token not in self.glyphs:
                raise InputError(f"glyph table misses vocabulary entry {token!r}")

    def phoneme_symbols(self):
        symbols = set()
        for seq in self.pronunciation.values():
            symbols.update(seq)
        return sorted(symbols)

    def glyph_components(self):
        components = set()
        for seq in self.glyphs.values():
            components.update(seq)
        return sorted(components)

    @staticmethod
    def _save_table(table, path):
        with open(path, "w", encoding="utf-8") as fh:
            for char in sorted(table):
                fh.write(f"{char}\t{' '.join(table[char])}\n")

    def save(self, pron_path, glyph_path):
        self._save_table(self.pronunciation, pron_path)
        self._save_table(self.glyphs, glyph_path)

    @staticmethod
    def _load_table(path):
        table = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "\t" not in line:
                    raise InputError(f"{path}:{lineno}: expected 'char TAB symbols'")
                char, rest = line.split("\t", 1)
                table[char] = tuple(rest.split())
        return table

    @classmethod
    def load(cls, pron_path, glyph_path):
        return cls(cls._load_table(pron_path), cls._load_table(glyph_path))


class PhonologyEncoder:
    """Left-to-right tanh recurrence over a character's phoneme symbols."""

    def __init__(self, resources, vocab, out_dim, state_dim=16, rng=None, init_scale=0.02):
        resources.validate_cover(vocab)
        self.symbols = resources.phoneme_symbols()
        self._sym_index = {s: i for i, s in enumerate(self.symbols)}
        self._entries = {
            i: tuple(self._sym_index[s] for s in resources.pronunciation[tok])
            for i, tok in enumerate(vocab.tokens)
        }
        self.state_dim = state_dim
        self.out_dim = out_dim
        count = max(len(self.symbols), 1)
        self.sym_emb = T.parameter(rng.normal(0.0, init_scale, (count, state_dim)), "phon.sym_emb")
        self.rec_w = T.parameter(rng.normal(0.0, init_scale, (2 * state_dim, state_dim)), "phon.rec_w")
        self.rec_b = T.parameter([0.0] * state_dim, "phon.rec_b", decay=False)
        self.out_w = T.parameter(rng.normal(0.0, init_scale, (state_dim, out_dim)), "phon.out_w")

    def parameters(self):
        return {"phon.sym_emb": self.sym_emb, "phon.rec_w": self.rec_w,
                "phon.rec_b": self.rec_b, "phon.out_w": self.out_w}

    def _encode_entry(self, entry):
        state = T.Tensor(np.zeros((1, self.state_dim)))
        for sym_id in entry:
            step = T.concat_cols([state, T.gather_rows(self.sym_emb, [sym_id])])
            state = T.tanh(T.affine(step, self.rec_w, self.rec_b))
        return T.matmul(state, self.out_w)

    def encode(self, token_ids):
        """(n, d) rows; identical pronunciation entries share one graph node."""
        rows = []
        cache = {}
        for tid in token_ids:
            entry = self._entries[int(tid)]
            if not entry:
                rows.append(T.Tensor(np.zeros((1, self.out_dim))))
                continue
            if entry not in cache:
                cache[entry] = self._encode_entry(entry)
            rows.append(cache[entry])
        if not rows:
            return T.Tensor(np.zeros((0, self.out_dim)))
        return T.stack_rows(rows)


class GlyphEncoder:
    """Component-bag sum of glyph part embeddings, linearly mapped out."""

    def __init__(self, resources, vocab, out_dim, comp_dim=16, rng=None, init_scale=0.02):
        resources.validate_cover(vocab)
        self.components = resources.glyph_components()
        self._comp_index = {c: i for i, c in enumerate(self.components)}
        self._entries = {
            i: tuple(self._comp_index[c] for c in resources.glyphs[tok])
            for i, tok in enumerate(vocab.tokens)
        }
        self.comp_dim = comp_dim
        self.out_dim = out_dim
        count = max(len(self.components), 1)
        self.comp_emb = T.parameter(rng.normal(0.0, init_scale, (count, comp_dim)), "glyph.comp_emb")
        self.out_w = T.parameter(rng.normal(0.0, init_scale, (comp_dim, out_dim)), "glyph.out_w")

    def parameters(self):
        return {"glyph.comp_emb": self.comp_emb, "glyph.out_w": self.out_w}

    def encode(self, token_ids):
        rows = []
        cache = {}
        for tid in token_ids:
            entry = tuple(sorted(self._entries[int(tid)]))
            if not entry:
                rows.append(T.Tensor(np.zeros((1, self.out_dim))))
                continue
            if entry not in cache:
                bag = T.sum_rows(T.gather_rows(self.comp_emb, list(entry)))
                cache[entry] = T.matmul(bag, self.out_w)
            rows.append(cache[entry])
        if not rows:
            return T.Tensor(np.zeros((0, self.out_dim)))
        return T.stack_rows(rows)


def dot_product_gate(m):
    """Parameter-free gates for the phonetic and graphic modalities.

    score[i] = <[H_s[i] ; mean(H_s)], [H_m[i] ; H_m[i]]>, gate = sigmoid(score).
    """
    n, d = m.semantic.shape
    for other in (m.phonetic, m.graphic):
        if other.shape != (n, d):
            raise ShapeError(f"modality shape {other.shape} != semantic shape {(n, d)}")
    if m.semantic_mean.shape != (1, d):
        raise ShapeError(f"semantic mean shape {m.semantic_mean.shape} must be (1, {d})")

    left = T.concat_cols([m.semantic, T.tile_rows(m.semantic_mean, n)])
    scores_p = T.row_sums(T.mul(left, T.concat_cols([m.phonetic, m.phonetic])))
    scores_g = T.row_sums(T.mul(left, T.concat_cols([m.graphic, m.graphic])))
    return GateValues(scores_p=scores_p, scores_g=scores_g,
                      gates_p=T.sigmoid(scores_p), gates_g=T.sigmoid(scores_g))


def fuse(m, gates):
    """semantic + gate_p * phonetic + gate_g * graphic, gates broadcast over d."""
    return T.add(m.semantic,
                 T.add(T.scale_rows(m.phonetic, gates.gates_p),
                       T.scale_rows(m.graphic, gates.gates_g)))


def special_token_entries(vocab_tokens):
    """Empty pronunciation/glyph entries for the control tokens."""
    return {tok: () for tok in vocab_tokens[:NUM_SPECIALS]}
