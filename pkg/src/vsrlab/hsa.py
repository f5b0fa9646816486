"""Hidden-state attention: filter pool plus selective cross attention.

The incoming hidden state is expanded into N fixed-filtered variants, and
a per-pixel attention over those variants - with the current frame's
shallow features as the query - aggregates a cleaned hidden state. Keys
and values come from one shared 3x3 conv each, applied to every pool
entry; logits are channel dot products scaled by 1/sqrt(C) and softmaxed
over the N entries only (no spatial mixing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .filter_bank import (MODE_BLUR, MODE_SHARP, FilterBank, HiddenStatePool,
                          build_pool)


@dataclass
class SCAWeights:
    """Query/key/value projection weights (3x3 convs, C -> C, with bias)."""

    query_w: np.ndarray
    query_b: np.ndarray
    key_w: np.ndarray
    key_b: np.ndarray
    value_w: np.ndarray
    value_b: np.ndarray

    @staticmethod
    def init(channels: int, rng: np.random.Generator) -> "SCAWeights":
        """Near-pass-through start: tiny query/key, exact-identity value.

        Values identical across pool entries collapse attention to the value
        projection, so an identity value conv makes the whole module leave
        constant hidden states untouched at step 0 of fine-tuning.
        """
        c = channels
        small = 1e-2
        ident = np.zeros((c, c, 3, 3), dtype=np.float32)
        ident[np.arange(c), np.arange(c), 1, 1] = 1.0
        zeros = np.zeros((c, 1, 1), dtype=np.float32)
        return SCAWeights(
            query_w=(small * rng.standard_normal((c, c, 3, 3))).astype(np.float32),
            query_b=zeros.copy(),
            key_w=(small * rng.standard_normal((c, c, 3, 3))).astype(np.float32),
            key_b=zeros.copy(),
            value_w=ident,
            value_b=zeros.copy(),
        )


@dataclass
class AttentionMaps:
    """Per-pixel weights over pool entries: (N, H, W), rows sum to 1."""

    weights: np.ndarray
    bank: FilterBank

    @property
    def n_entries(self) -> int:
        return self.weights.shape[0]


def make_query(f_s, w: SCAWeights):
    """Project shallow features to the attention query (one 3x3 conv)."""
    if ad.value_of(f_s).shape[0] != ad.value_of(w.query_w).shape[1]:
        raise ValueError(
            f"make_query: feature channels {ad.value_of(f_s).shape} do not "
            f"match query conv {ad.value_of(w.query_w).shape}")
    return ad.add(ad.conv2d(f_s, w.query_w, padding=1), w.query_b)


def project_pool(pool: HiddenStatePool, w: SCAWeights):
    """Shared key/value convs applied to every pool entry."""
    if len(pool) == 0:
        raise ValueError("project_pool: empty pool")
    keys = [ad.add(ad.conv2d(e, w.key_w, padding=1), w.key_b)
            for e in pool.entries]
    values = [ad.add(ad.conv2d(e, w.value_w, padding=1), w.value_b)
              for e in pool.entries]
    return keys, values


def sca_aggregate(query, keys, values):
    """N-way pixel-wise cross attention.

    Per pixel p: logit_i = <Q(:,p), K_i(:,p)> / sqrt(C), weights = softmax
    over the N entries, output = sum_i weight_i * V_i. Returns the
    aggregated hidden state and the (N, H, W) weight maps.
    """
    if len(keys) != len(values) or not keys:
        raise ValueError(f"sca_aggregate: got {len(keys)} keys for "
                         f"{len(values)} values")
    q_shape = ad.value_of(query).shape
    for t in list(keys) + list(values):
        if ad.value_of(t).shape != q_shape:
            raise ValueError(f"sca_aggregate: shape {ad.value_of(t).shape} "
                             f"does not match query {q_shape}")
    c = q_shape[0]
    inv_temp = 1.0 / math.sqrt(c)
    logits = [ad.scale(ad.sum_axis(ad.mul(query, k), axis=0, keepdims=True),
                       inv_temp)
              for k in keys]
    maps = ad.softmax_over_axis(ad.concat(logits), axis=0)
    out = None
    for i, v in enumerate(values):
        term = ad.mul(ad.slice_channels(maps, i, i + 1), v)
        out = term if out is None else ad.add(out, term)
    return out, maps


def hsa_transform(h, f_s, bank: FilterBank, w: SCAWeights,
                  pool: HiddenStatePool | None = None):
    """Full hidden-state attention: pool -> projections -> query -> attention.

    An externally built pool (e.g. a single-variant override) may be passed
    in; by default the bank's standard pool is constructed.
    """
    if ad.value_of(h).shape != ad.value_of(f_s).shape:
        raise ValueError(f"hsa_transform: hidden {ad.value_of(h).shape} and "
                         f"features {ad.value_of(f_s).shape} must match")
    if pool is None:
        pool = build_pool(h, bank)
    keys, values = project_pool(pool, w)
    query = make_query(f_s, w)
    return sca_aggregate(query, keys, values)


def summarize_attention(maps: AttentionMaps, bank: FilterBank):
    """Per-mode attention sums and the blur-dominance binary map.

    Returns (blurry_sum, sharp_sum, binary) as (H, W) arrays; binary(p) is
    1 where the summed blur attention exceeds the summed sharp attention.
    """
    weights = np.asarray(maps.weights)
    if weights.shape[0] != len(bank):
        raise ValueError(f"summarize_attention: {weights.shape[0]} maps for "
                         f"bank of size {len(bank)}")
    blur_idx = [i for i, k in enumerate(bank) if k.mode == MODE_BLUR]
    sharp_idx = [i for i, k in enumerate(bank) if k.mode == MODE_SHARP]
    if not blur_idx or not sharp_idx:
        raise ValueError("summarize_attention: bank must contain both blur "
                         "and sharp kernels")
    blurry_sum = weights[blur_idx].sum(axis=0)
    sharp_sum = weights[sharp_idx].sum(axis=0)
    binary = (blurry_sum > sharp_sum).astype(np.float32)
    return blurry_sum, sharp_sum, binary
