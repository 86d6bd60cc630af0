"""Training objectives, the epoch loop with early stopping, continued training.

Both objectives run the engine in teacher-forced mode: candidate spans are
walked in document order and after each gold mention's decision the cluster
state is updated with the gold assignment, so the per-span targets are always
well defined. The antecedent objective softmaxes the combined score s_c over
live clusters plus the dummy; the joint objective factors each span into a
mention-detection term (sigmoid of the mention score) and, for gold mentions,
a cluster-choice term that softmaxes the pair score s_a instead. Gradients are
backpropagated through cluster merges within a segment; cluster embeddings
carried across segments are treated as constants.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .documents import Document, Span, segment_document
from .encoder import (
    EncoderConfig,
    FreezeMask,
    apply_freeze,
    embed_tokens_backward,
    embed_tokens_forward,
    encode_backward,
    encode_forward,
)
from .engine import (
    DUMMY_SCORE,
    EngineConfig,
    enumerate_spans,
    ffn_backward,
    ffn_forward,
    mention_scores,
    pair_features,
    pair_features_backward,
    prune_spans,
    resolve_document,
    span_embeddings_backward,
    span_embeddings_forward,
)
from .metrics import MetricReport, score_corpus
from .numeric import (
    AdamOptimizer,
    NumericError,
    OptimizerConfig,
    ParamStore,
    sigmoid,
    softmax,
)

OBJECTIVE_ANTECEDENT = "antecedent_only"
OBJECTIVE_JOINT = "joint_singleton"


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    patience: int = 10
    lr_task: float = 2e-4
    lr_encoder: float = 1e-5
    clip_norm: float = 10.0
    seed: int = 0
    objective: str = OBJECTIVE_JOINT
    freeze: FreezeMask = field(default_factory=FreezeMask)
    weight_decay_encoder: float = 0.01

    def validate(self) -> "TrainConfig":
        if self.patience > self.max_epochs:
            raise ValueError("patience must be <= max_epochs")
        if self.lr_task <= 0 or self.lr_encoder <= 0:
            raise ValueError("learning rates must be positive")
        if self.objective not in (OBJECTIVE_ANTECEDENT, OBJECTIVE_JOINT):
            raise ValueError(f"unknown objective {self.objective!r}")
        return self

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr_task=self.lr_task,
            lr_encoder=self.lr_encoder,
            clip_norm=self.clip_norm,
            weight_decay_encoder=self.weight_decay_encoder,
        )


def config_hash(*configs) -> str:
    blob = json.dumps([_config_dict(c) for c in configs], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _config_dict(cfg):
    try:
        return asdict(cfg)
    except TypeError:
        return dict(cfg) if isinstance(cfg, dict) else str(cfg)


# ---------------------------------------------------------------------------
# teacher-forced losses
# ---------------------------------------------------------------------------


@dataclass
class _TFCluster:
    cluster_id: int
    entity: int
    embedding: np.ndarray


class _TFState:
    def __init__(self):
        self.clusters: list[_TFCluster] = []
        self.by_entity: dict[int, _TFCluster] = {}
        self.ant_counts: dict[int, dict[int, int]] = {}
        self._next_id = 0

    def create(self, entity: int, embedding: np.ndarray) -> _TFCluster:
        cluster = _TFCluster(self._next_id, entity, embedding.copy())
        self._next_id += 1
        self.clusters.append(cluster)
        self.by_entity[entity] = cluster
        return cluster

    def record_antecedent(self, entity: int, cluster_id: int) -> None:
        self.ant_counts.setdefault(entity, {})
        self.ant_counts[entity][cluster_id] = self.ant_counts[entity].get(cluster_id, 0) + 1


def _gold_entity_map(doc: Document) -> dict[Span, int]:
    mapping = {}
    for entity, cluster in enumerate(doc.clusters):
        for span in cluster:
            mapping[span] = entity
    return mapping


def document_loss(
    doc: Document,
    params: ParamStore,
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
    objective: str,
    backward: bool = True,
) -> float:
    """Total negative log likelihood of the document under teacher forcing.

    When ``backward`` is true, analytic gradients are accumulated into the
    parameter store (for every tensor, frozen or not).
    """
    if objective not in (OBJECTIVE_ANTECEDENT, OBJECTIVE_JOINT):
        raise ValueError(f"unknown objective {objective!r}")
    gold = _gold_entity_map(doc)
    state = _TFState()
    total = 0.0
    for segment in segment_document(doc, engine_cfg.max_segment_tokens):
        total += _segment_loss(
            doc, segment, gold, state, params, encoder_cfg, engine_cfg, objective, backward
        )
    return total


def antecedent_loss(doc, params, encoder_cfg, engine_cfg, backward: bool = True) -> float:
    """Negative log likelihood of antecedent clusters under the s_c softmax."""
    return document_loss(doc, params, encoder_cfg, engine_cfg, OBJECTIVE_ANTECEDENT, backward)


def joint_loss(doc, params, encoder_cfg, engine_cfg, backward: bool = True) -> float:
    """Joint mention-detection and cluster-choice objective (handles singletons)."""
    return document_loss(doc, params, encoder_cfg, engine_cfg, OBJECTIVE_JOINT, backward)


def _segment_loss(
    doc, segment, gold, state, params, encoder_cfg, engine_cfg, objective, backward
) -> float:
    offset = segment.token_offset
    end_excl = offset + len(segment)

    x0, ids = embed_tokens_forward(params, encoder_cfg, segment.tokens)
    h, enc_caches = encode_forward(params, encoder_cfg, x0)

    if engine_cfg.gold_mentions:
        spans = sorted(m for m in gold if offset <= m[0] and m[1] < end_excl)
        if not spans:
            return 0.0
        local = [(s - offset, e - offset) for s, e in spans]
        xs, span_cache = span_embeddings_forward(params, h, local)
        sm = np.zeros(len(spans))
        sm_cache = None
        survivors = list(range(len(spans)))
        missed_gold: list[int] = []
    else:
        spans = enumerate_spans(segment.sentence_lengths, engine_cfg.max_span_width, offset)
        if not spans:
            return 0.0
        local = [(s - offset, e - offset) for s, e in spans]
        xs, span_cache = span_embeddings_forward(params, h, local)
        sm, sm_cache = mention_scores(params, xs)
        survivors = prune_spans(
            spans, sm, engine_cfg.prune_ratio, len(segment), engine_cfg.pruning_mode
        )
        survivor_set = set(survivors)
        missed_gold = [
            i for i, span in enumerate(spans) if span in gold and i not in survivor_set
        ]

    steps = []
    mention_terms = []  # (row, target_is_mention, sigmoid_value)
    total = 0.0

    joint = objective == OBJECTIVE_JOINT
    use_mention_terms = joint and not engine_cfg.gold_mentions

    for row in survivors:
        span = spans[row]
        entity = gold.get(span)
        x = xs[row]

        score_caches = []
        scores = []
        cluster_snapshot = list(state.clusters)
        for cluster in cluster_snapshot:
            feats = pair_features(x, cluster.embedding)
            sa, cache = ffn_forward(params, "pair", feats[None, :])
            score_caches.append((cluster, cluster.embedding.copy(), cache))
            scores.append(float(sa[0]))
        sa_vec = np.array(scores + [DUMMY_SCORE])  # dummy option last
        if joint:
            logits = sa_vec
        else:
            # s_c = s_m + s_a against real clusters; the dummy cell stays fixed
            logits = sa_vec + np.concatenate([np.full(len(scores), sm[row]), [0.0]])
        p = softmax(logits)
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise NumericError(f"softmax not normalized at span {span}")

        weights = np.zeros(len(p))
        if entity is not None and entity in state.ant_counts and state.ant_counts[entity]:
            counts = state.ant_counts[entity]
            n_ant = sum(counts.values())
            pos_by_id = {c.cluster_id: k for k, c in enumerate(cluster_snapshot)}
            for cid, count in counts.items():
                weights[pos_by_id[cid]] = count / n_ant
        else:
            weights[-1] = 1.0

        q = float(weights @ p)
        step_loss = -np.log(q)
        if not np.isfinite(step_loss):
            raise NumericError(f"non-finite loss at span {span}")
        total += step_loss

        if use_mention_terms:
            s = sigmoid(sm[row])
            is_mention = entity is not None
            term = -np.log(s) if is_mention else -np.log(1.0 - s)
            if not np.isfinite(term):
                raise NumericError(f"non-finite mention loss at span {span}")
            total += term
            mention_terms.append((row, is_mention, s))

        merge_cache = None
        created = None
        if entity is not None:
            existing = state.by_entity.get(entity)
            if existing is None:
                created = state.create(entity, x)
            else:
                feats = pair_features(x, existing.embedding)
                logit, cache = ffn_forward(params, "merge", feats[None, :])
                alpha = float(sigmoid(logit[0]))
                merge_cache = (existing, existing.embedding.copy(), alpha, cache)
                existing.embedding = alpha * x + (1.0 - alpha) * existing.embedding
            state.record_antecedent(
                entity, (created or state.by_entity[entity]).cluster_id
            )
        steps.append((row, p, weights, q, score_caches, merge_cache, created))

    if use_mention_terms:
        for row in missed_gold:
            s = sigmoid(sm[row])
            term = -np.log(s)
            if not np.isfinite(term):
                raise NumericError(f"non-finite mention loss at span {spans[row]}")
            total += term
            mention_terms.append((row, True, s))

    if backward:
        _segment_backward(
            params, xs, sm, steps, mention_terms, joint,
            span_cache, sm_cache, enc_caches, ids,
        )
    return float(total)


def _segment_backward(
    params, xs, sm, steps, mention_terms, joint, span_cache, sm_cache, enc_caches, ids
):
    dxs = np.zeros_like(xs)
    dsm = np.zeros_like(sm)
    slots: dict[int, np.ndarray] = {}

    for (row, p, weights, q, score_caches, merge_cache, created) in reversed(steps):
        x = xs[row]
        if merge_cache is not None:
            cluster, c_before, alpha, cache = merge_cache
            dc_after = slots.pop(cluster.cluster_id, None)
            if dc_after is not None:
                dalpha = float(dc_after @ (x - c_before))
                dxs[row] += alpha * dc_after
                dc_before = (1.0 - alpha) * dc_after
                dlogit = dalpha * alpha * (1.0 - alpha)
                dfeat = ffn_backward(params, np.array([dlogit]), cache)[0]
                dx_f, dc_f = pair_features_backward(dfeat, x, c_before)
                dxs[row] += dx_f
                dc_before = dc_before + dc_f
                slots[cluster.cluster_id] = dc_before
        if created is not None:
            dc = slots.pop(created.cluster_id, None)
            if dc is not None:
                dxs[row] += dc

        # softmax cross-entropy over clusters + dummy: d s_k = p_k - w_k p_k / q
        dscores = p - weights * p / q
        for k, (cluster, c_snap, cache) in enumerate(score_caches):
            ds = float(dscores[k])
            if not joint:
                dsm[row] += ds
            dfeat = ffn_backward(params, np.array([ds]), cache)[0]
            dx_f, dc_f = pair_features_backward(dfeat, x, c_snap)
            dxs[row] += dx_f
            slots[cluster.cluster_id] = slots.get(cluster.cluster_id, 0.0) + dc_f

    for (row, is_mention, s) in mention_terms:
        dsm[row] += (s - 1.0) if is_mention else s

    if sm_cache is not None:
        dxs += ffn_backward(params, dsm, sm_cache)
    dh = span_embeddings_backward(params, dxs, span_cache)
    dx0 = encode_backward(params, dh, enc_caches)
    embed_tokens_backward(params, dx0, ids)


# ---------------------------------------------------------------------------
# epoch loop, early stopping, continued training
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    params: ParamStore
    epoch: int
    dev_avg_f1: float
    config_hash: str


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_avg_f1: float
    dev_predictions: Optional[dict] = None
    extra_predictions: Optional[dict] = None


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochRecord]

    def dev_scores(self) -> list[float]:
        return [r.dev_avg_f1 for r in self.history]


def select_checkpoint(scores: Sequence[float], patience: int) -> tuple[int, int]:
    """Early-stopping selection over a per-epoch score sequence.

    Returns (best_index, stop_index): the first index achieving the best score
    seen before stopping, and the index at which training would stop (the
    epoch after `patience` consecutive non-improving epochs, or the last one).
    """
    if not scores:
        raise ValueError("empty score sequence")
    best_i = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best_i]:
            best_i = i
        elif i - best_i >= patience:
            return best_i, i
    return best_i, len(scores) - 1


def evaluate_docs(
    docs: Sequence[Document],
    params: ParamStore,
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
) -> tuple[MetricReport, dict]:
    """Corpus-level metric report plus per-document predicted clusters."""
    predictions = {}
    for doc in docs:
        predictions[doc.doc_id] = resolve_document(doc, params, encoder_cfg, engine_cfg)
    report = score_corpus((doc.clusters, predictions[doc.doc_id]) for doc in docs)
    return report, predictions


def train(
    train_docs: Sequence[Document],
    dev_docs: Sequence[Document],
    init_params: ParamStore,
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
    config: TrainConfig,
    *,
    extra_eval_docs: Optional[Sequence[Document]] = None,
    cache_predictions: bool = False,
    early_stop: bool = True,
) -> TrainResult:
    """Train to convergence on dev average F1 with patience-based stopping.

    One optimizer step per document. The returned checkpoint holds the best
    parameters; the history holds every epoch (with per-document predictions
    when ``cache_predictions`` is set, as post-hoc selection experiments need).
    """
    config.validate()
    if not train_docs:
        raise ValueError("empty training set")
    params = init_params.copy()
    apply_freeze(params, encoder_cfg, config.freeze)
    optimizer = AdamOptimizer(params, config.optimizer_config())
    rng = np.random.default_rng(config.seed)
    chash = config_hash(encoder_cfg, engine_cfg, config)

    history: list[EpochRecord] = []
    best: Optional[Checkpoint] = None
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_docs))
        epoch_loss = 0.0
        for doc_i in order:
            doc = train_docs[doc_i]
            params.zero_grads()
            epoch_loss += document_loss(
                doc, params, encoder_cfg, engine_cfg, config.objective, backward=True
            )
            optimizer.step(params)
        epoch_loss /= len(train_docs)

        dev_report, dev_preds = evaluate_docs(dev_docs, params, encoder_cfg, engine_cfg)
        record = EpochRecord(epoch=epoch, train_loss=epoch_loss, dev_avg_f1=dev_report.avg_f1)
        if cache_predictions:
            record.dev_predictions = dev_preds
            if extra_eval_docs is not None:
                _, extra_preds = evaluate_docs(extra_eval_docs, params, encoder_cfg, engine_cfg)
                record.extra_predictions = extra_preds
        history.append(record)

        if best is None or dev_report.avg_f1 > best.dev_avg_f1:
            best = Checkpoint(params.copy(), epoch, dev_report.avg_f1, chash)
        if early_stop and epoch - best.epoch >= config.patience:
            break
    assert best is not None
    return TrainResult(checkpoint=best, history=history)


class ShapeMismatchError(ValueError):
    pass


def check_compatible(source: ParamStore, target: ParamStore) -> None:
    problems = []
    source_names = set(source.names())
    target_names = set(target.names())
    for name in sorted(source_names - target_names):
        problems.append(f"{name}: missing from target")
    for name in sorted(target_names - source_names):
        problems.append(f"{name}: missing from source")
    for name in sorted(source_names & target_names):
        if source.value(name).shape != target.value(name).shape:
            problems.append(
                f"{name}: {source.value(name).shape} vs {target.value(name).shape}"
            )
    if problems:
        raise ShapeMismatchError("incompatible tensors: " + "; ".join(problems))


def continued_train(
    source_params: ParamStore,
    target_train: Sequence[Document],
    target_dev: Sequence[Document],
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
    config: TrainConfig,
    **train_kwargs,
) -> TrainResult:
    """Initialize every tensor from a source model, then train on the target.

    With an empty target training set, the source model is evaluated on the
    target dev set as-is (the zero-document transfer point).
    """
    from .engine import init_params as _init_params

    check_compatible(source_params, _init_params(encoder_cfg, engine_cfg, seed=0))
    if not target_train:
        report, _ = evaluate_docs(target_dev, source_params, encoder_cfg, engine_cfg)
        checkpoint = Checkpoint(
            source_params.copy(), 0, report.avg_f1, config_hash(encoder_cfg, engine_cfg, config)
        )
        return TrainResult(checkpoint=checkpoint, history=[])
    return train(
        target_train, target_dev, source_params, encoder_cfg, engine_cfg, config, **train_kwargs
    )
