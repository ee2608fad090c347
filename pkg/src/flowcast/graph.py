"""Adaptive adjacency from temporal features, plus the graph convolution.

Pipeline per forward pass:

1. squeeze the deepest temporal features to a quarter of their channels
   (1x1 channel map);
2. pick one time index per node as its representative state (last by
   default; first/middle are ablation variants);
3. cosine-correlate every representative against every node's feature at
   every remaining time step -> S [b, n, n, l];
4. weight the deep features by those correlations and sum over time ->
   relational edge features R [b, c, n_src, n_tgt];
5. squeeze R's channel axis (max by default), tanh, and rectify into the
   adjacency matrix A and its sign-reversed counterpart A_r - the two are
   elementwise disjoint by construction and live in [0, 1);
6. aggregate R with each adjacency and map through a shared linear layer.

Adjacency matrices are oriented row = target: A[k, i] weights source i in
target k's aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import params as P
from . import tensor as T
from .config import ModelConfig

REP_INDEX = {
    "last": lambda l: l - 1,
    "middle": lambda l: l // 2,
    "first": lambda l: 0,
}


@dataclass
class AdjacencyPair:
    """Exported edge weights for one sample; both matrices are [n, n]."""
    adj: np.ndarray
    adj_reversed: np.ndarray


def representative(f_c: T.Tensor, position: str) -> T.Tensor:
    """One time slice per node standing in for its temporal state."""
    l = f_c.shape[-1]
    return T.take_time(f_c, REP_INDEX[position](l))


def correlate(f_l: T.Tensor, f_c: T.Tensor, eps: float = 1e-8) -> T.Tensor:
    return T.cosine_correlate(f_l, f_c, eps=eps)


def relational_features(s: T.Tensor, f4: T.Tensor) -> T.Tensor:
    return T.relation_sum(s, f4)


def squeeze_base(rel: T.Tensor, op: str, affine_w: T.Tensor | None = None,
                 affine_b: T.Tensor | None = None) -> T.Tensor:
    """Channel-squeeze R into tanh pre-edges, oriented [b, target, source]."""
    if op == "max":
        pre = T.max_over_channel(rel)
    elif op == "avg":
        pre = T.mean_over_channel(rel)
    elif op == "max_learned":
        pre = T.max_over_channel(rel)
        pre = T.add(T.mul(pre, affine_w), affine_b)
    else:
        raise ValueError(f"unknown attention op {op!r}")
    return T.tanh(T.transpose_last2(pre))


def squeeze_attention(rel: T.Tensor, op: str, reversed: bool = False,
                      affine_w: T.Tensor | None = None,
                      affine_b: T.Tensor | None = None) -> T.Tensor:
    base = squeeze_base(rel, op, affine_w, affine_b)
    return T.relu(T.neg(base)) if reversed else T.relu(base)


def gcn(rel: T.Tensor, adj: T.Tensor, weight: T.Tensor, bias: T.Tensor) -> T.Tensor:
    """Per target node: weight @ (R(:,:,k) @ A(k,:)) + bias."""
    return T.channel_linear(T.neighbor_mix(rel, adj), weight, bias, exact=True)


@dataclass
class EdgeState:
    """Intermediates kept for losses, export and tests."""
    s: T.Tensor          # correlations [b, n, n, l]
    rel: T.Tensor        # relational features [b, c, n_src, n_tgt]
    adj: T.Tensor        # [b, n_tgt, n_src]
    adj_reversed: T.Tensor
    f_g: T.Tensor        # [b, c, n]
    f_gr: T.Tensor


class EdgeGraph:
    """Parameters and forward pass of the adjacency-building graph block."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator,
                 store: dict[str, T.Tensor], dtype=np.float32):
        c4 = cfg.channels[3]
        self.cfg = cfg
        self.reduce_w = store["es.reduce.weight"] = P.linear_weight(rng, c4 // 4, c4, dtype)
        self.reduce_b = store["es.reduce.bias"] = P.zeros((c4 // 4,), dtype)
        if cfg.attention_op == "max_learned":
            # scalar affine on the squeezed edges, shared across all entries;
            # identity at init so the variant starts equal to plain max
            self.affine_w = store["es.attn.weight"] = P.ones((), dtype)
            self.affine_b = store["es.attn.bias"] = P.zeros((), dtype)
        else:
            self.affine_w = self.affine_b = None
        self.gcn_w = store["es.gcn.weight"] = P.linear_weight(rng, c4, c4, dtype)
        self.gcn_b = store["es.gcn.bias"] = P.zeros((c4,), dtype)

    def reduce_channels(self, f4: T.Tensor) -> T.Tensor:
        if f4.shape[1] % 4 != 0:
            raise T.ShapeError(f"channel count {f4.shape[1]} not divisible by 4")
        return T.channel_linear(f4, self.reduce_w, self.reduce_b, exact=True)

    def forward(self, f4: T.Tensor) -> EdgeState:
        f_c = self.reduce_channels(f4)
        f_l = representative(f_c, self.cfg.representative)
        s = correlate(f_l, f_c, eps=self.cfg.cosine_eps)
        rel = relational_features(s, f4)
        base = squeeze_base(rel, self.cfg.attention_op, self.affine_w, self.affine_b)
        adj = T.relu(base)
        adj_rev = T.relu(T.neg(base))
        f_g = gcn(rel, adj, self.gcn_w, self.gcn_b)
        f_gr = gcn(rel, adj_rev, self.gcn_w, self.gcn_b)
        return EdgeState(s, rel, adj, adj_rev, f_g, f_gr)
