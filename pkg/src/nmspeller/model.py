"""Full spell-checker assembly.

Pipeline per sequence: embedding -> optional n-gram masking layer (queries
from mask-token embeddings, residual from the plain embedding output) ->
semantic encoder stack -> optional gated multi-modal fusion -> fusion
encoder stack -> vocabulary classifier. The masking layer runs in training
whenever the mode is not ``none``; at prediction it is applied only while
``mask_at_inference`` is set.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .embedding import EmbeddingTables, embed, embed_mask_query
from .encoder import EncoderStack, OutputProjection, classify
from .errors import ConfigError, InputError
from .fusion import (GlyphEncoder, ModalityEncodings, PhonologyEncoder,
                     dot_product_gate, fuse)
from .layers import TransformerLayer
from .masking import (NGramMode, build_mask_indices, ngram_additive_mask,
                      padding_additive_mask)
from .vocab import CLS_ID, NUM_SPECIALS, PAD_ID, SEP_ID


class SpellChecker:
    def __init__(self, config, vocab, resources=None, rng=None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.mode = config.mode
        self.mask_at_inference = config.mask_at_inference
        if rng is None:
            rng = np.random.default_rng(config.seed)

        d = config.hidden_size
        heads = config.num_heads
        ffn = config.effective_ffn_size
        self.tables = EmbeddingTables(len(vocab), d, max_len=config.max_len, rng=rng)
        self.masker = None
        if self.mode is not NGramMode.NONE:
            self.masker = TransformerLayer(d, heads, ffn, rng, name="masker")
        self.semantic = EncoderStack(config.semantic_layers, d, heads, ffn, rng, name="semantic")
        self.phonology = None
        self.glyph = None
        self.fusion_encoder = None
        if config.fusion:
            if resources is None:
                raise ConfigError("fusion is enabled but no modality resources were given")
            self.phonology = PhonologyEncoder(resources, vocab, d, rng=rng)
            self.glyph = GlyphEncoder(resources, vocab, d, rng=rng)
            self.fusion_encoder = EncoderStack(config.fusion_layers, d, heads, ffn,
                                               rng, name="fusion_enc")
        self.classifier = OutputProjection(d, len(vocab), rng)

    def parameters(self):
        out = {}
        out.update(self.tables.parameters())
        if self.masker is not None:
            out.update(self.masker.parameters())
        out.update(self.semantic.parameters())
        if self.phonology is not None:
            out.update(self.phonology.parameters())
            out.update(self.glyph.parameters())
            out.update(self.fusion_encoder.parameters())
        out.update(self.classifier.parameters())
        return out

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def _masking_active(self, training):
        if self.masker is None:
            return False
        return training or self.mask_at_inference

    def forward(self, token_ids, training=False, rng=None, return_detail=False):
        """Vocabulary logits (n, V) for a full [cls] ... [sep] [pad]* layout."""
        ids = [int(t) for t in token_ids]
        n = len(ids)
        padding = [t == PAD_ID for t in ids]
        pad_mask = padding_additive_mask(padding)
        rate = self.config.dropout

        e_out = embed(ids, self.tables, training, rng, rate)
        detail = {"e_out": e_out, "head_traces": None}

        hidden = e_out
        if self._masking_active(training):
            indices = build_mask_indices(self.mode, n, padding)
            mask = ngram_additive_mask(indices, n)
            if pad_mask is not None:
                mask = T.Tensor(mask.data + pad_mask.data)
            e_query = embed_mask_query(n, self.tables, training, rng, rate)
            detail["e_query"] = e_query
            detail["mask_indices"] = indices
            result = self.masker.forward(e_out, query=e_query, additive_mask=mask,
                                         training=training, rng=rng, dropout_rate=rate,
                                         return_trace=return_detail)
            if return_detail:
                hidden, detail["head_traces"] = result
            else:
                hidden = result

        h_s = self.semantic.forward(hidden, pad_mask, training, rng, rate)
        detail["semantic"] = h_s

        if self.phonology is not None:
            real_rows = [i for i in range(n) if not padding[i]]
            modalities = ModalityEncodings(
                semantic=h_s,
                semantic_mean=T.mean_rows(h_s, real_rows),
                phonetic=self.phonology.encode(ids),
                graphic=self.glyph.encode(ids),
            )
            gates = dot_product_gate(modalities)
            fused = fuse(modalities, gates)
            h_final = self.fusion_encoder.forward(fused, pad_mask, training, rng, rate)
            detail.update(modalities=modalities, gates=gates, fusion=fused)
        else:
            h_final = h_s

        logits = classify(h_final, self.classifier)
        if return_detail:
            return logits, detail
        return logits

    def predict_ids(self, source_ids):
        """Corrected character ids for one sentence (no boundary tokens).

        Argmax is restricted to real-character ids; [pad] positions pass
        through unchanged.
        """
        source_ids = [int(t) for t in source_ids]
        ids = [CLS_ID] + source_ids + [SEP_ID]
        if len(ids) > self.config.max_len:
            raise InputError(
                f"sentence of {len(source_ids)} characters exceeds the maximum "
                f"layout length of {self.config.max_len}"
            )
        logits = self.forward(ids, training=False).data
        out = []
        for offset, sid in enumerate(source_ids, start=1):
            if sid == PAD_ID:
                out.append(sid)
                continue
            row = logits[offset]
            out.append(NUM_SPECIALS + int(np.argmax(row[NUM_SPECIALS:])))
        return out

    def predict_corpus(self, sources):
        return [self.predict_ids(src) for src in sources]


def toggle_inference_masking(model, active):
    """Switch the prediction-time use of the masking layer; parameters and
    training behavior are untouched."""
    model.mask_at_inference = bool(active)
