"""Synthetic corpus generation, confusion sets, and corpus file I/O.

Sentences are sampled from a seeded character bigram chain, then corrupted
position-by-position through a confusion set; an optional second draw also
corrupts a neighbor to manufacture consecutive errors. The matching
pronunciation/glyph tables are synthesized so that confusable characters
share phoneme and component entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .fusion import ModalityResources
from .vocab import NUM_SPECIALS, SPECIALS, Vocab

_CJK_BASE = 0x4E00

_INITIALS = ["b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h",
             "j", "q", "x", "zh", "ch", "sh", "r", "z", "c", "s", "y", "w"]
_FINALS = ["a", "o", "e", "i", "u", "ai", "ei", "ao", "ou", "an",
           "en", "ang", "eng", "ong", "er", "ia"]
_TONES = ["1", "2", "3", "4", "5"]


@dataclass
class SentencePair:
    """Aligned source/target character-id sequences of equal length."""

    source: list = field(default_factory=list)
    target: list = field(default_factory=list)

    def __post_init__(self):
        self.source = [int(t) for t in self.source]
        self.target = [int(t) for t in self.target]
        if len(self.source) != len(self.target):
            raise InputError(
                f"source has {len(self.source)} characters but target has {len(self.target)}"
            )

    @property
    def crr_pos(self):
        return frozenset(i for i, (s, t) in enumerate(zip(self.source, self.target)) if s == t)

    @property
    def incrr_pos(self):
        return frozenset(i for i, (s, t) in enumerate(zip(self.source, self.target)) if s != t)


class ConfusionSet:
    """Per-character candidate lists of visually/phonologically close characters."""

    def __init__(self, mapping):
        self.mapping = {}
        for char, candidates in mapping.items():
            candidates = tuple(candidates)
            if not candidates:
                raise InputError(f"confusion entry for {char!r} has no candidates")
            if char in candidates:
                raise InputError(f"confusion entry for {char!r} lists itself as a candidate")
            self.mapping[char] = candidates

    def __len__(self):
        return len(self.mapping)

    def __contains__(self, char):
        return char in self.mapping

    def candidates(self, char):
        return self.mapping[char]

    def validate_vocab(self, vocab):
        for char, candidates in self.mapping.items():
            if char not in vocab:
                raise InputError(f"confusion key {char!r} is not in the vocabulary")
            for cand in candidates:
                if cand not in vocab:
                    raise InputError(f"confusion candidate {cand!r} is not in the vocabulary")

    def groups(self):
        """Connected components over the key<->candidate links, sorted."""
        parent = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for char, candidates in self.mapping.items():
            for cand in candidates:
                ra, rb = find(char), find(cand)
                if ra != rb:
                    parent[rb] = ra
        buckets = {}
        for char in parent:
            buckets.setdefault(find(char), set()).add(char)
        return sorted((sorted(chars) for chars in buckets.values()), key=lambda g: g[0])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for char in sorted(self.mapping):
                fh.write(f"{char}\t{''.join(self.mapping[char])}\n")

    @classmethod
    def load(cls, path):
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "\t" not in line:
                    raise InputError(f"{path}:{lineno}: expected 'char TAB candidates'")
                char, cands = line.split("\t", 1)
                if len(char) != 1:
                    raise InputError(f"{path}:{lineno}: key must be a single character")
                mapping[char] = tuple(cands)
        return cls(mapping)


def synth_vocab(vocab_size):
    """Deterministic synthetic vocabulary of consecutive CJK characters."""
    if vocab_size <= NUM_SPECIALS:
        raise ConfigError(f"vocab_size must exceed {NUM_SPECIALS}, got {vocab_size}")
    chars = [chr(_CJK_BASE + i) for i in range(vocab_size - NUM_SPECIALS)]
    return Vocab(list(SPECIALS) + chars)


def build_confusion_set(vocab, rng, group_size=4):
    """Partition the real characters into confusion groups of ~group_size."""
    if group_size < 2:
        raise ConfigError(f"group_size must be at least 2, got {group_size}")
    chars = [vocab.tokens[i] for i in vocab.real_ids]
    if len(chars) < 2:
        raise ConfigError("vocabulary too small to build a confusion set")
    order = [chars[i] for i in rng.permutation(len(chars))]
    groups = [order[i:i + group_size] for i in range(0, len(order), group_size)]
    if len(groups) > 1 and len(groups[-1]) < 2:
        groups[-2].extend(groups.pop())
    mapping = {}
    for group in groups:
        for char in group:
            mapping[char] = tuple(c for c in group if c != char)
    return ConfusionSet(mapping)


def build_resources(vocab, confusion, rng):
    """Synthetic pronunciation/glyph tables tied to the confusion groups.

    Characters inside one group share syllable initial+final (differing in
    tone) and share a group glyph component next to a unique one, so both
    modalities carry group identity. Control tokens get empty entries.
    """
    pron = {tok: () for tok in vocab.tokens[:NUM_SPECIALS]}
    glyphs = {tok: () for tok in vocab.tokens[:NUM_SPECIALS]}
    grouped = set()
    unique = 0
    for gi, group in enumerate(confusion.groups()):
        initial = _INITIALS[int(rng.integers(len(_INITIALS)))]
        final = _FINALS[int(rng.integers(len(_FINALS)))]
        for mi, char in enumerate(group):
            if char not in vocab:
                continue
            pron[char] = (initial, final, _TONES[mi % len(_TONES)])
            glyphs[char] = (f"g{gi}", f"u{unique}")
            unique += 1
            grouped.add(char)
    for i in vocab.real_ids:
        char = vocab.tokens[i]
        if char in grouped:
            continue
        pron[char] = (_INITIALS[int(rng.integers(len(_INITIALS)))],
                      _FINALS[int(rng.integers(len(_FINALS)))],
                      _TONES[int(rng.integers(len(_TONES)))])
        glyphs[char] = (f"u{unique}",)
        unique += 1
    return ModalityResources(pron, glyphs)


def _bigram_chain(chars, rng, branch=4):
    starts = list(chars)
    table = {}
    for char in chars:
        k = min(branch, len(chars))
        succ = [chars[i] for i in rng.choice(len(chars), size=k, replace=False)]
        weights = rng.random(k) + 0.1
        table[char] = (succ, weights / weights.sum())
    return starts, table


def _corrupt(sentence, confusion, error_rate, adjacent_error_rate, rng):
    source = list(sentence)
    hit = [False] * len(sentence)
    for i, char in enumerate(sentence):
        if hit[i] or char not in confusion:
            continue
        if rng.random() >= error_rate:
            continue
        cands = confusion.candidates(char)
        source[i] = cands[int(rng.integers(len(cands)))]
        hit[i] = True
        if adjacent_error_rate > 0 and rng.random() < adjacent_error_rate:
            for j in (i + 1, i - 1):
                if 0 <= j < len(sentence) and not hit[j] and sentence[j] in confusion:
                    neigh = confusion.candidates(sentence[j])
                    source[j] = neigh[int(rng.integers(len(neigh)))]
                    hit[j] = True
                    break
    return source


def generate_corpus(vocab_size, n_sentences, length_range, error_rate,
                    adjacent_error_rate, confusion, rng):
    """Aligned sentence pairs plus matching modality resources.

    The vocabulary is the deterministic ``synth_vocab(vocab_size)``; the
    confusion set must cover characters from it.
    """
    if not 0.0 <= error_rate < 1.0:
        raise ConfigError(f"error_rate must lie in [0, 1), got {error_rate}")
    if not 0.0 <= adjacent_error_rate <= 1.0:
        raise ConfigError(f"adjacent_error_rate must lie in [0, 1], got {adjacent_error_rate}")
    if len(confusion) == 0:
        raise InputError("confusion set is empty")
    lo, hi = int(length_range[0]), int(length_range[1])
    if lo < 1 or hi < lo:
        raise ConfigError(f"invalid length range ({lo}, {hi})")

    vocab = synth_vocab(vocab_size)
    confusion.validate_vocab(vocab)
    resources = build_resources(vocab, confusion, rng)
    chars = [vocab.tokens[i] for i in vocab.real_ids]
    starts, table = _bigram_chain(chars, rng)

    pairs = []
    for _ in range(int(n_sentences)):
        length = int(rng.integers(lo, hi + 1))
        sentence = [starts[int(rng.integers(len(starts)))]]
        while len(sentence) < length:
            succ, weights = table[sentence[-1]]
            sentence.append(succ[int(rng.choice(len(succ), p=weights))])
        source = _corrupt(sentence, confusion, error_rate, adjacent_error_rate, rng)
        pairs.append(SentencePair(vocab.encode(source), vocab.encode(sentence)))
    return pairs, resources


def save_pairs(pairs, vocab, path):
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(f"{vocab.decode(pair.source)}\t{vocab.decode(pair.target)}\n")


def load_pairs(path, vocab):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected 'source TAB target'")
            source, target = parts
            if len(source) != len(target):
                raise InputError(
                    f"{path}:{lineno}: source has {len(source)} characters, "
                    f"target has {len(target)}"
                )
            pairs.append(SentencePair(vocab.encode(source), vocab.encode(target)))
    return pairs
