"""Experiment protocols: learning curves, dev-set allocation, forgetting, freezing.

Every experiment is deterministic under its seed and returns plain row dicts
ready for CSV. Training subsets are nested: the corpus is shuffled once and
size-s runs take the first s documents, so larger training sets are always
supersets of smaller ones.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .documents import Document
from .encoder import EncoderConfig, FreezeMask
from .engine import EngineConfig, init_params
from .metrics import score_corpus
from .numeric import ParamStore
from .training import (
    EpochRecord,
    TrainConfig,
    continued_train,
    evaluate_docs,
    select_checkpoint,
    train,
)

INIT_SCRATCH = "scratch"
INIT_SOURCE = "source_checkpoint"


@dataclass(frozen=True)
class CorpusSplit:
    train: list[Document]
    dev: list[Document]
    test: list[Document]


@dataclass(frozen=True)
class CurveSpec:
    train_sizes: tuple[int, ...]
    init: str = INIT_SCRATCH
    objective: str = "joint_singleton"
    seed: int = 0

    def validate(self, pool_size: int) -> "CurveSpec":
        if list(self.train_sizes) != sorted(self.train_sizes):
            raise ValueError("train_sizes must be ascending")
        if self.train_sizes and self.train_sizes[-1] > pool_size:
            raise ValueError(
                f"train size {self.train_sizes[-1]} exceeds pool of {pool_size}"
            )
        if self.init not in (INIT_SCRATCH, INIT_SOURCE):
            raise ValueError(f"unknown init {self.init!r}")
        return self


@dataclass(frozen=True)
class DevAllocSpec:
    dev_subset_sizes: tuple[int, ...]
    num_subsets: int = 20
    seed: int = 0


def nested_subsets(docs: Sequence[Document], sizes: Sequence[int], seed: int) -> dict[int, list[Document]]:
    """Size -> document prefix after one seeded shuffle (supersets by construction)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(docs))
    shuffled = [docs[i] for i in order]
    return {int(s): shuffled[: int(s)] for s in sizes}


def _run_map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _train_one(
    train_docs, split, encoder_cfg, engine_cfg, config, init, source_params, init_seed
):
    if init == INIT_SOURCE:
        if source_params is None:
            raise ValueError("source_checkpoint init requires source parameters")
        return continued_train(
            source_params, train_docs, split.dev, encoder_cfg, engine_cfg, config
        )
    if not train_docs:
        raise ValueError("scratch training needs at least one document")
    params = init_params(encoder_cfg, engine_cfg, seed=init_seed)
    return train(train_docs, split.dev, params, encoder_cfg, engine_cfg, config)


def learning_curve(
    split: CorpusSplit,
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
    spec: CurveSpec,
    base_config: Optional[TrainConfig] = None,
    source_params: Optional[ParamStore] = None,
    jobs: int = 1,
) -> list[dict]:
    """One model per training-set size; test scores per size.

    The size-s training set is a prefix of every larger one. With the
    source-checkpoint init, size 0 evaluates the source model zero-shot.
    """
    spec.validate(len(split.train))
    config = dataclasses.replace(
        base_config or TrainConfig(), objective=spec.objective, seed=spec.seed
    )
    subsets = nested_subsets(split.train, spec.train_sizes, spec.seed)

    def run(size: int) -> dict:
        result = _train_one(
            subsets[size], split, encoder_cfg, engine_cfg, config,
            spec.init, source_params, init_seed=spec.seed,
        )
        report, _ = evaluate_docs(split.test, result.checkpoint.params, encoder_cfg, engine_cfg)
        return {
            "train_size": size,
            "avg_f1": report.avg_f1,
            "mention_f1": report.mention.f1,
            "best_epoch": result.checkpoint.epoch,
            "dev_avg_f1": result.checkpoint.dev_avg_f1,
        }

    return _run_map(run, list(spec.train_sizes), jobs)


class MissingPredictionsError(ValueError):
    pass


def _scores_from_cached(history: Sequence[EpochRecord], docs: Sequence[Document], which: str) -> list[list]:
    by_id = {d.doc_id: d for d in docs}
    per_epoch = []
    for record in history:
        cached = record.dev_predictions if which == "dev" else record.extra_predictions
        if cached is None:
            raise MissingPredictionsError(
                f"epoch {record.epoch} has no cached {which} predictions; "
                "train with cache_predictions=True"
            )
        missing = set(by_id) - set(cached)
        if missing:
            raise MissingPredictionsError(f"missing cached predictions for {sorted(missing)}")
        per_epoch.append(cached)
    return per_epoch


def _subset_score(cached_epoch: dict, docs: Sequence[Document]) -> float:
    return score_corpus((doc.clusters, cached_epoch[doc.doc_id]) for doc in docs).avg_f1


def dev_allocation_experiment(
    history: Sequence[EpochRecord],
    dev_docs: Sequence[Document],
    test_docs: Sequence[Document],
    spec: DevAllocSpec,
    patience: int,
) -> list[dict]:
    """Post-hoc checkpoint selection with sampled dev subsets.

    For each subset size, ``num_subsets`` subsets are sampled independently
    (overlap across samples allowed, no replacement within a subset). Early
    stopping is replayed on the subset's per-epoch scores; the table reports
    the mean/std of the test score at the selected checkpoints and how many
    subsets agreed with the full-dev selection.
    """
    if any(size > len(dev_docs) for size in spec.dev_subset_sizes):
        raise ValueError("subset size exceeds dev set size")
    dev_cached = _scores_from_cached(history, dev_docs, "dev")
    test_cached = _scores_from_cached(history, test_docs, "extra")

    full_scores = [_subset_score(epoch, dev_docs) for epoch in dev_cached]
    full_best, _ = select_checkpoint(full_scores, patience)

    rng = np.random.default_rng(spec.seed)
    rows = []
    for size in spec.dev_subset_sizes:
        selected_test = []
        agreement = 0
        for _ in range(spec.num_subsets):
            chosen = rng.choice(len(dev_docs), size=int(size), replace=False)
            subset = [dev_docs[i] for i in chosen]
            scores = [_subset_score(epoch, subset) for epoch in dev_cached]
            best, _ = select_checkpoint(scores, patience)
            selected_test.append(_subset_score(test_cached[best], test_docs))
            agreement += int(best == full_best)
        rows.append(
            {
                "subset_size": int(size),
                "expected_test_f1": float(np.mean(selected_test)),
                "std_test_f1": float(np.std(selected_test)),
                "agreement": agreement,
                "num_subsets": spec.num_subsets,
                "full_dev_epoch": full_best + 1,
                "full_dev_test_f1": _subset_score(test_cached[full_best], test_docs),
            }
        )
    return rows


def forgetting_eval(
    source_params: ParamStore,
    source_test: Sequence[Document],
    target_split: CorpusSplit,
    sizes: Sequence[int],
    encoder_cfg: EncoderConfig,
    source_engine_cfg: EngineConfig,
    target_engine_cfg: EngineConfig,
    config: TrainConfig,
    jobs: int = 1,
) -> list[dict]:
    """Continued training per target size, scoring both target and source tests.

    Size 0 is the untouched source model. Target training subsets are nested
    under ``config.seed``, matching learning_curve with the same seed.
    """
    subsets = nested_subsets(target_split.train, [s for s in sizes if s > 0], config.seed)

    def run(size: int) -> dict:
        if size == 0:
            params = source_params
        else:
            result = continued_train(
                source_params, subsets[size], target_split.dev,
                encoder_cfg, target_engine_cfg, config,
            )
            params = result.checkpoint.params
        target_report, _ = evaluate_docs(target_split.test, params, encoder_cfg, target_engine_cfg)
        source_report, _ = evaluate_docs(source_test, params, encoder_cfg, source_engine_cfg)
        return {
            "target_size": int(size),
            "target_avg_f1": target_report.avg_f1,
            "source_avg_f1": source_report.avg_f1,
        }

    return _run_map(run, [int(s) for s in sizes], jobs)


def layer_freezing_sweep(
    init: ParamStore,
    split: CorpusSplit,
    top_k_values: Sequence[int],
    encoder_cfg: EncoderConfig,
    engine_cfg: EngineConfig,
    config: TrainConfig,
    continued: bool = True,
    jobs: int = 1,
) -> list[dict]:
    """One training run per number of trainable top layers; scorers always train."""
    for k in top_k_values:
        if not (0 <= k <= encoder_cfg.num_layers):
            raise ValueError(f"top_k {k} outside [0, {encoder_cfg.num_layers}]")

    def run(top_k: int) -> dict:
        run_config = dataclasses.replace(config, freeze=FreezeMask(int(top_k)))
        if continued:
            result = continued_train(
                init, split.train, split.dev, encoder_cfg, engine_cfg, run_config
            )
        else:
            result = train(split.train, split.dev, init, encoder_cfg, engine_cfg, run_config)
        report, _ = evaluate_docs(split.test, result.checkpoint.params, encoder_cfg, engine_cfg)
        return {
            "top_k": int(top_k),
            "avg_f1": report.avg_f1,
            "mention_f1": report.mention.f1,
            "best_epoch": result.checkpoint.epoch,
        }

    return _run_map(run, [int(k) for k in top_k_values], jobs)
