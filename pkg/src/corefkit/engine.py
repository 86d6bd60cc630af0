"""Span enumeration, span scoring, and constant-memory incremental clustering.

A document is processed one segment at a time. Within a segment, candidate
spans get an embedding [first token; last token; attention-weighted average;
width bucket embedding] and a mention score; the surviving spans are walked in
document order and either merged into the best-scoring existing cluster or
started as a new one, with the dummy option's fixed score of zero acting as
the creation threshold. Between segments the engine keeps only the cluster
embeddings and mention indices, so retained floating-point state is
O(num_clusters x dim) regardless of how much text has been processed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .documents import Document, Segment, Span, segment_document
from .encoder import (
    EncoderConfig,
    embed_tokens_forward,
    encode_forward,
    init_encoder_params,
)
from .numeric import TASK_GROUP, NumericError, ParamStore, sigmoid

PRUNE_ORIGINAL = "original"
PRUNE_REFORMULATED = "reformulated"

# the dummy cluster: choosing it creates a new cluster; its score is fixed
DUMMY_SCORE = 0.0

# widths 1..4 get their own bucket, then 5-7, 8-15, 16-31, 32+
WIDTH_BUCKETS = 8


@dataclass(frozen=True)
class EngineConfig:
    prune_ratio: float = 0.4
    max_span_width: int = 10
    pruning_mode: str = PRUNE_ORIGINAL
    gold_mentions: bool = False
    max_segment_tokens: int = 512
    width_embedding_dim: int = 8
    scorer_hidden_dim: int = 64
    emit_singletons: Optional[bool] = None

    def validate(self) -> "EngineConfig":
        if not (0.0 < self.prune_ratio <= 1.0):
            raise ValueError("prune_ratio must be in (0, 1]")
        if self.max_span_width < 1:
            raise ValueError("max_span_width must be >= 1")
        if self.pruning_mode not in (PRUNE_ORIGINAL, PRUNE_REFORMULATED):
            raise ValueError(f"unknown pruning_mode {self.pruning_mode!r}")
        return self

    @property
    def keeps_singletons(self) -> bool:
        if self.emit_singletons is not None:
            return self.emit_singletons
        return self.pruning_mode == PRUNE_REFORMULATED


def width_bucket(width: int) -> int:
    if width <= 4:
        return width - 1
    if width <= 7:
        return 4
    if width <= 15:
        return 5
    if width <= 31:
        return 6
    return 7


def span_dim(encoder_cfg: EncoderConfig, engine_cfg: EngineConfig) -> int:
    return 3 * encoder_cfg.hidden_dim + engine_cfg.width_embedding_dim


def init_params(
    encoder_cfg: EncoderConfig, engine_cfg: EngineConfig, seed: int = 0
) -> ParamStore:
    """Fresh model parameters: encoder tensors plus the task scorers."""
    encoder_cfg.validate()
    engine_cfg.validate()
    rng = np.random.default_rng(seed)
    params = ParamStore()
    init_encoder_params(params, encoder_cfg, rng)
    d = encoder_cfg.hidden_dim
    sd = span_dim(encoder_cfg, engine_cfg)
    h = engine_cfg.scorer_hidden_dim
    params.add("span.attn_v", rng.normal(0.0, 1.0 / np.sqrt(d), size=d), TASK_GROUP)
    params.add(
        "span.width_emb",
        rng.normal(0.0, 0.5, size=(WIDTH_BUCKETS, engine_cfg.width_embedding_dim)),
        TASK_GROUP,
    )
    for scorer, din in (("mention", sd), ("pair", 3 * sd), ("merge", 3 * sd)):
        params.add(f"score.{scorer}.W1", rng.normal(0.0, 1.0 / np.sqrt(din), size=(h, din)), TASK_GROUP)
        params.add(f"score.{scorer}.b1", np.zeros(h), TASK_GROUP)
        params.add(f"score.{scorer}.w2", rng.normal(0.0, 1.0 / np.sqrt(h), size=h), TASK_GROUP)
        params.add(f"score.{scorer}.b2", np.zeros(1), TASK_GROUP)
    return params


def enumerate_spans(sentence_lengths, max_width: int, offset: int = 0) -> list[Span]:
    """All spans up to max_width tokens, within one sentence, by (start, end)."""
    spans = []
    start = offset
    for length in sentence_lengths:
        for a in range(start, start + length):
            last = min(start + length - 1, a + max_width - 1)
            for b in range(a, last + 1):
                spans.append((a, b))
        start += length
    return sorted(spans)


# ---------------------------------------------------------------------------
# batched span embeddings
# ---------------------------------------------------------------------------


def span_embeddings_forward(params: ParamStore, h: np.ndarray, spans_local):
    """Embed spans given segment-local (start, end) pairs; returns (S, span_dim)."""
    starts = np.array([s for s, _ in spans_local], dtype=np.intp)
    ends = np.array([e for _, e in spans_local], dtype=np.intp)
    widths = ends - starts + 1
    buckets = np.array([width_bucket(int(w)) for w in widths], dtype=np.intp)
    max_w = int(widths.max())
    rel = np.arange(max_w, dtype=np.intp)
    idx = starts[:, None] + rel[None, :]
    mask = rel[None, :] < widths[:, None]
    idx = np.where(mask, idx, 0)

    v = params.value("span.attn_v")
    token_logits = h @ v
    logits = np.where(mask, token_logits[idx], -np.inf)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=1, keepdims=True)

    gathered = h[idx]  # (S, max_w, d)
    pooled = np.einsum("sw,swd->sd", attn, gathered)
    width_vecs = params.value("span.width_emb")[buckets]
    xs = np.concatenate([h[starts], h[ends], pooled, width_vecs], axis=1)
    cache = (starts, ends, idx, mask, attn, gathered, buckets, h)
    return xs, cache


def span_embeddings_backward(params: ParamStore, dxs: np.ndarray, cache) -> np.ndarray:
    starts, ends, idx, mask, attn, gathered, buckets, h = cache
    d = h.shape[1]
    dh = np.zeros_like(h)
    dhs = dxs[:, :d]
    dhe = dxs[:, d : 2 * d]
    dpooled = dxs[:, 2 * d : 3 * d]
    dwidth = dxs[:, 3 * d :]
    np.add.at(dh, starts, dhs)
    np.add.at(dh, ends, dhe)
    np.add.at(params["span.width_emb"].grad, buckets, dwidth)

    # pooled = sum_w attn[s,w] * gathered[s,w,:]
    dattn = np.einsum("sd,swd->sw", dpooled, gathered)
    dgathered = attn[:, :, None] * dpooled[:, None, :]
    # softmax rows backward; masked cells have attn == 0 so they contribute nothing
    dlogits = attn * (dattn - np.sum(attn * dattn, axis=1, keepdims=True))
    dlogits = np.where(mask, dlogits, 0.0)

    v = params.value("span.attn_v")
    flat_idx = idx[mask]
    np.add.at(dh, flat_idx, dgathered[mask])
    dtoken_logits = np.zeros(h.shape[0])
    np.add.at(dtoken_logits, flat_idx, dlogits[mask])
    dh += dtoken_logits[:, None] * v[None, :]
    params["span.attn_v"].grad += h.T @ dtoken_logits
    return dh


# ---------------------------------------------------------------------------
# feedforward scalar scorers (one hidden tanh layer)
# ---------------------------------------------------------------------------


def ffn_forward(params: ParamStore, scorer: str, x: np.ndarray):
    """Scalar score per row of x; x has shape (S, d_in), result (S,)."""
    w1 = params.value(f"score.{scorer}.W1")
    b1 = params.value(f"score.{scorer}.b1")
    w2 = params.value(f"score.{scorer}.w2")
    b2 = params.value(f"score.{scorer}.b2")
    if x.shape[1] != w1.shape[1]:
        raise NumericError(f"{scorer} scorer: input dim {x.shape[1]} != {w1.shape[1]}")
    hidden = np.tanh(x @ w1.T + b1)
    scores = hidden @ w2 + b2[0]
    return scores, (scorer, x, hidden)


def ffn_backward(params: ParamStore, dscores: np.ndarray, cache) -> np.ndarray:
    scorer, x, hidden = cache
    w1 = params.value(f"score.{scorer}.W1")
    w2 = params.value(f"score.{scorer}.w2")
    params[f"score.{scorer}.w2"].grad += hidden.T @ dscores
    params[f"score.{scorer}.b2"].grad += np.array([dscores.sum()])
    dhidden = np.outer(dscores, w2)
    dz = dhidden * (1.0 - hidden * hidden)
    params[f"score.{scorer}.W1"].grad += dz.T @ x
    params[f"score.{scorer}.b1"].grad += dz.sum(axis=0)
    return dz @ w1


def pair_features(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """[span; cluster; span*cluster] featurization shared by s_a and alpha."""
    return np.concatenate([x, c, x * c])


def pair_features_backward(dfeat: np.ndarray, x: np.ndarray, c: np.ndarray):
    n = x.shape[0]
    dx = dfeat[:n] + dfeat[2 * n :] * c
    dc = dfeat[n : 2 * n] + dfeat[2 * n :] * x
    return dx, dc


def mention_scores(params: ParamStore, xs: np.ndarray):
    return ffn_forward(params, "mention", xs)


def pair_score(params: ParamStore, x: np.ndarray, c: np.ndarray):
    scores, cache = ffn_forward(params, "pair", pair_features(x, c)[None, :])
    return float(scores[0]), cache


def pair_scores_batch(params: ParamStore, x: np.ndarray, cmat: np.ndarray) -> np.ndarray:
    """s_a of one span against a (C, span_dim) matrix of cluster embeddings."""
    feats = np.concatenate(
        [np.broadcast_to(x, cmat.shape), cmat, x[None, :] * cmat], axis=1
    )
    scores, _ = ffn_forward(params, "pair", feats)
    return scores


def merge_alpha(params: ParamStore, x: np.ndarray, c: np.ndarray):
    logits, cache = ffn_forward(params, "merge", pair_features(x, c)[None, :])
    return float(sigmoid(logits[0])), cache


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------


def prune_cap(prune_ratio: float, n_tokens: int) -> int:
    return int(math.ceil(prune_ratio * n_tokens))


def prune_spans(spans, scores, prune_ratio: float, n_tokens: int, mode: str) -> list[int]:
    """Indices of surviving spans, restored to document order.

    Ties on the score prefer the earlier start, then the shorter span.
    """
    cap = prune_cap(prune_ratio, n_tokens)
    order = sorted(
        range(len(spans)),
        key=lambda i: (-scores[i], spans[i][0], spans[i][1] - spans[i][0]),
    )
    if mode == PRUNE_REFORMULATED:
        order = [i for i in order if scores[i] > 0.0]
    elif mode != PRUNE_ORIGINAL:
        raise ValueError(f"unknown pruning mode {mode!r}")
    kept = order[:cap]
    return sorted(kept, key=lambda i: spans[i])


# ---------------------------------------------------------------------------
# incremental resolution
# ---------------------------------------------------------------------------


@dataclass
class SpanCandidate:
    span: Span
    embedding: np.ndarray
    mention_score: float


@dataclass
class EntityCluster:
    cluster_id: int
    embedding: np.ndarray
    mentions: list[Span] = field(default_factory=list)


class EngineState:
    """Per-document cluster list; this is everything kept across segments."""

    def __init__(self):
        self.clusters: list[EntityCluster] = []
        self._next_id = 0

    def create(self, embedding: np.ndarray, span: Span) -> EntityCluster:
        cluster = EntityCluster(self._next_id, embedding.copy(), [span])
        self._next_id += 1
        self.clusters.append(cluster)
        return cluster

    def float_state_size(self) -> int:
        """Retained floating-point scalars: the cluster embeddings."""
        return sum(c.embedding.size for c in self.clusters)

    def mention_count(self) -> int:
        return sum(len(c.mentions) for c in self.clusters)


def _segment_candidates(doc: Document, segment: Segment, params, engine_cfg, h) -> list[SpanCandidate]:
    """Surviving candidate spans for one segment, in document coordinates."""
    offset = segment.token_offset
    end_excl = offset + len(segment)
    if engine_cfg.gold_mentions:
        spans = sorted(m for m in doc.mentions() if offset <= m[0] and m[1] < end_excl)
        if not spans:
            return []
        local = [(s - offset, e - offset) for s, e in spans]
        xs, _ = span_embeddings_forward(params, h, local)
        # gold boundaries skip the mention scorer
        return [SpanCandidate(span, xs[i], 0.0) for i, span in enumerate(spans)]
    spans = enumerate_spans(segment.sentence_lengths, engine_cfg.max_span_width, offset)
    if not spans:
        return []
    local = [(s - offset, e - offset) for s, e in spans]
    xs, _ = span_embeddings_forward(params, h, local)
    sm, _ = mention_scores(params, xs)
    kept = prune_spans(spans, sm, engine_cfg.prune_ratio, len(segment), engine_cfg.pruning_mode)
    return [SpanCandidate(spans[i], xs[i], float(sm[i])) for i in kept]


def resolve_document(
    doc: Document,
    params: ParamStore,
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
    pair_score_fn: Optional[Callable[[Span, np.ndarray, EntityCluster], float]] = None,
    alpha_fn: Optional[Callable[[Span, np.ndarray, EntityCluster], float]] = None,
    on_segment: Optional[Callable[[int, EngineState], None]] = None,
) -> list[tuple[Span, ...]]:
    """Predict clusters for one document with the incremental create/merge rule.

    ``pair_score_fn`` / ``alpha_fn`` replace the learned pair and merge scorers
    when given (used by oracles and probes). ``on_segment`` is called after
    each segment with the retained engine state.
    """
    engine_cfg.validate()
    state = EngineState()
    for seg_index, segment in enumerate(segment_document(doc, engine_cfg.max_segment_tokens)):
        x0, _ = embed_tokens_forward(params, encoder_cfg, segment.tokens)
        h, _ = encode_forward(params, encoder_cfg, x0)
        for candidate in _segment_candidates(doc, segment, params, engine_cfg, h):
            span, x = candidate.span, candidate.embedding
            if state.clusters:
                if pair_score_fn is None:
                    cmat = np.stack([c.embedding for c in state.clusters])
                    sa = pair_scores_batch(params, x, cmat)
                else:
                    sa = np.array(
                        [pair_score_fn(span, x, c) for c in state.clusters]
                    )
                sc = candidate.mention_score + sa
                best_pos = int(np.argmax(sc))
                best = float(sc[best_pos])
                # ties between clusters go to the lower cluster id
                tied = np.flatnonzero(sc == best)
                if len(tied) > 1:
                    best_pos = min(tied, key=lambda p: state.clusters[p].cluster_id)
            else:
                best = -np.inf
                best_pos = -1
            if best <= DUMMY_SCORE:
                state.create(x, span)
            else:
                cluster = state.clusters[best_pos]
                if alpha_fn is None:
                    alpha, _ = merge_alpha(params, x, cluster.embedding)
                else:
                    alpha = alpha_fn(span, x, cluster)
                cluster.embedding = alpha * x + (1.0 - alpha) * cluster.embedding
                cluster.mentions.append(span)
        if on_segment is not None:
            on_segment(seg_index, state)
    clusters = [tuple(c.mentions) for c in state.clusters]
    if not engine_cfg.keeps_singletons:
        clusters = [c for c in clusters if len(c) > 1]
    return clusters
