"""Encoder stacks and the vocabulary classifier head."""

from __future__ import annotations

from . import tensor as T
from .errors import ConfigError
from .layers import TransformerLayer


class EncoderStack:
    """Sequential standard self-attention layers (padding mask only)."""

    def __init__(self, depth, dim, heads, ffn_dim, rng, name="encoder", norm_eps=1e-12):
        if depth < 1:
            raise ConfigError(f"encoder depth must be >= 1, got {depth}")
        self.layers = [
            TransformerLayer(dim, heads, ffn_dim, rng, norm_eps=norm_eps, name=f"{name}.{i}")
            for i in range(depth)
        ]

    @property
    def depth(self):
        return len(self.layers)

    def parameters(self):
        out = {}
        for layer in self.layers:
            out.update(layer.parameters())
        return out

    def forward(self, hidden, padding_mask=None, training=False, rng=None, dropout_rate=0.1):
        for layer in self.layers:
            hidden = layer.forward(hidden, additive_mask=padding_mask, training=training,
                                   rng=rng, dropout_rate=dropout_rate)
        return hidden


class OutputProjection:
    """Dense map from hidden states to vocabulary logits."""

    def __init__(self, dim, vocab_size, rng, init_scale=0.02, name="classifier"):
        self.weight = T.parameter(rng.normal(0.0, init_scale, (dim, vocab_size)), f"{name}.w")
        self.bias = T.parameter([0.0] * vocab_size, f"{name}.b", decay=False)
        self.name = name

    def parameters(self):
        return {f"{self.name}.w": self.weight, f"{self.name}.b": self.bias}


def classify(hidden, proj):
    """Vocabulary logits (n, V). Softmax is applied only where probabilities
    are needed; argmax over logits equals argmax over the softmax."""
    return T.affine(hidden, proj.weight, proj.bias)
