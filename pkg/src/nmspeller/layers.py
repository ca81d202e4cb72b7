"""Transformer encoder layer used by the masking layer and both encoder stacks.

Post-norm layout: multi-head attention -> dropout -> add & norm, then a
GELU feed-forward -> dropout -> add & norm. The residual is always the
key/value input; the masking layer passes a different query source, which
is the only structural difference from a standard self-attention layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import tensor as T
from .errors import ConfigError, ShapeError


@dataclass
class HeadTrace:
    """Per-head intermediates for inspection: pre-softmax scores are post-mask."""

    q: T.Tensor
    k: T.Tensor
    v: T.Tensor
    att_scores: T.Tensor
    weights: T.Tensor
    head: T.Tensor


class TransformerLayer:
    def __init__(self, dim, heads, ffn_dim, rng, init_scale=0.02, norm_eps=1e-12, name="layer"):
        if dim % heads != 0:
            raise ConfigError(f"head count {heads} must divide hidden size {dim}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.ffn_dim = ffn_dim
        self.norm_eps = norm_eps
        self.name = name

        def w(shape, suffix, decay=True):
            return T.parameter(rng.normal(0.0, init_scale, shape), f"{name}.{suffix}", decay=decay)

        dk = self.head_dim
        self.wq = [w((dim, dk), f"wq{h}") for h in range(heads)]
        self.wk = [w((dim, dk), f"wk{h}") for h in range(heads)]
        self.wv = [w((dim, dk), f"wv{h}") for h in range(heads)]
        self.wo = w((dim, dim), "wo")
        self.ffn_w1 = w((dim, ffn_dim), "ffn_w1")
        self.ffn_b1 = T.parameter([0.0] * ffn_dim, f"{name}.ffn_b1", decay=False)
        self.ffn_w2 = w((ffn_dim, dim), "ffn_w2")
        self.ffn_b2 = T.parameter([0.0] * dim, f"{name}.ffn_b2", decay=False)
        self.norm1_gain = T.parameter([1.0] * dim, f"{name}.norm1_gain", decay=False)
        self.norm1_bias = T.parameter([0.0] * dim, f"{name}.norm1_bias", decay=False)
        self.norm2_gain = T.parameter([1.0] * dim, f"{name}.norm2_gain", decay=False)
        self.norm2_bias = T.parameter([0.0] * dim, f"{name}.norm2_bias", decay=False)

    def parameters(self):
        out = {}
        for h in range(self.heads):
            out[f"{self.name}.wq{h}"] = self.wq[h]
            out[f"{self.name}.wk{h}"] = self.wk[h]
            out[f"{self.name}.wv{h}"] = self.wv[h]
        for suffix in ("wo", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
                       "norm1_gain", "norm1_bias", "norm2_gain", "norm2_bias"):
            out[f"{self.name}.{suffix}"] = getattr(self, suffix)
        return out

    def forward(self, kv, query=None, additive_mask=None, training=False, rng=None,
                dropout_rate=0.1, return_trace=False):
        """Run the layer; ``query`` defaults to ``kv`` (plain self-attention).

        ``additive_mask`` is added to the scaled scores before the softmax.
        The residual into the first add & norm is ``kv``.
        """
        if query is None:
            query = kv
        if query.shape != kv.shape:
            raise ShapeError(f"query shape {query.shape} != key/value shape {kv.shape}")
        if kv.shape[1] != self.dim:
            raise ShapeError(f"hidden size {kv.shape[1]} != layer size {self.dim}")
        if additive_mask is not None and additive_mask.shape != (kv.shape[0], kv.shape[0]):
            raise ShapeError(
                f"additive mask shape {additive_mask.shape} must be "
                f"({kv.shape[0]}, {kv.shape[0]})"
            )

        inv_sqrt_dk = 1.0 / math.sqrt(self.head_dim)
        heads = []
        traces = []
        for h in range(self.heads):
            q = T.matmul(query, self.wq[h])
            k = T.matmul(kv, self.wk[h])
            v = T.matmul(kv, self.wv[h])
            scores = T.scale(T.matmul(q, T.transpose(k)), inv_sqrt_dk)
            if additive_mask is not None:
                scores = T.add(scores, additive_mask)
            weights = T.softmax_rows(scores)
            dropped = T.dropout(weights, dropout_rate, training, rng)
            head = T.matmul(dropped, v)
            heads.append(head)
            if return_trace:
                traces.append(HeadTrace(q=q, k=k, v=v, att_scores=scores,
                                        weights=weights, head=head))

        att = T.matmul(T.concat_cols(heads), self.wo)
        att = T.dropout(att, dropout_rate, training, rng)
        x = T.layer_norm(T.add(kv, att), self.norm1_gain, self.norm1_bias, eps=self.norm_eps)

        ff = T.gelu(T.affine(x, self.ffn_w1, self.ffn_b1))
        ff = T.dropout(T.affine(ff, self.ffn_w2, self.ffn_b2), dropout_rate, training, rng)
        out = T.layer_norm(T.add(x, ff), self.norm2_gain, self.norm2_bias, eps=self.norm_eps)
        if return_trace:
            return out, traces
        return out
