import dataclasses

import numpy as np
import pytest

from corefkit import (
    EncoderConfig,
    EngineConfig,
    SchemeConfig,
    TrainConfig,
    init_params,
    synth_corpus,
    train,
)
from corefkit.encoder import FreezeMask, encoder_param_names
from corefkit.harness import (
    CorpusSplit,
    CurveSpec,
    DevAllocSpec,
    MissingPredictionsError,
    dev_allocation_experiment,
    forgetting_eval,
    layer_freezing_sweep,
    learning_curve,
    nested_subsets,
)
from corefkit.training import EpochRecord, evaluate_docs

ENC = EncoderConfig(num_layers=2, hidden_dim=8, hash_vocab_size=64, max_position=48)
ENG = EngineConfig(max_span_width=3, scorer_hidden_dim=8, width_embedding_dim=4,
                   pruning_mode="reformulated", max_segment_tokens=48)
FAST = TrainConfig(max_epochs=2, patience=2, seed=0)


def corpus(n=12, seed=31):
    return synth_corpus(
        SchemeConfig(num_docs=n, seed=seed, sentences_per_doc=(2, 3),
                     entities_per_doc=(2, 2), mentions_per_entity=(2, 3))
    )


def split_of(docs, n_train, n_dev, n_test):
    return CorpusSplit(
        train=docs[:n_train],
        dev=docs[n_train : n_train + n_dev],
        test=docs[n_train + n_dev : n_train + n_dev + n_test],
    )


class TestNestedSubsets:
    def test_prefix_inclusion(self):
        docs = corpus(10)
        subsets = nested_subsets(docs, [2, 5, 8], seed=3)
        ids = {s: {d.doc_id for d in v} for s, v in subsets.items()}
        assert ids[2] <= ids[5] <= ids[8]
        assert [len(subsets[s]) for s in (2, 5, 8)] == [2, 5, 8]

    def test_deterministic(self):
        docs = corpus(10)
        a = nested_subsets(docs, [3, 6], seed=1)
        b = nested_subsets(docs, [3, 6], seed=1)
        assert {s: [d.doc_id for d in v] for s, v in a.items()} == {
            s: [d.doc_id for d in v] for s, v in b.items()
        }


class TestLearningCurve:
    def test_rows_and_sizes(self):
        split = split_of(corpus(12), 6, 3, 3)
        rows = learning_curve(
            split, ENC, ENG, CurveSpec(train_sizes=(2, 4, 6), seed=0), base_config=FAST
        )
        assert [r["train_size"] for r in rows] == [2, 4, 6]
        assert all(0.0 <= r["avg_f1"] <= 1.0 for r in rows)

    def test_size_zero_requires_source(self):
        split = split_of(corpus(12), 6, 3, 3)
        with pytest.raises(ValueError, match="at least one"):
            learning_curve(split, ENC, ENG, CurveSpec(train_sizes=(0,), seed=0), base_config=FAST)

    def test_size_zero_with_source_is_zero_shot(self):
        split = split_of(corpus(12), 6, 3, 3)
        source = init_params(ENC, ENG, seed=5)
        rows = learning_curve(
            split, ENC, ENG,
            CurveSpec(train_sizes=(0,), init="source_checkpoint", seed=0),
            base_config=FAST, source_params=source,
        )
        report, _ = evaluate_docs(split.test, source, ENC, ENG)
        assert rows[0]["avg_f1"] == pytest.approx(report.avg_f1)

    def test_oversized_request_rejected(self):
        split = split_of(corpus(12), 6, 3, 3)
        with pytest.raises(ValueError, match="exceeds"):
            learning_curve(split, ENC, ENG, CurveSpec(train_sizes=(2, 99)), base_config=FAST)

    def test_non_ascending_rejected(self):
        with pytest.raises(ValueError, match="ascending"):
            CurveSpec(train_sizes=(5, 2)).validate(10)

    def test_deterministic_rows(self):
        split = split_of(corpus(12), 6, 3, 3)
        spec = CurveSpec(train_sizes=(2, 4), seed=7)
        a = learning_curve(split, ENC, ENG, spec, base_config=FAST)
        b = learning_curve(split, ENC, ENG, spec, base_config=FAST)
        assert a == b

    def test_jobs_parallel_same_result(self):
        split = split_of(corpus(12), 6, 3, 3)
        spec = CurveSpec(train_sizes=(2, 4), seed=7)
        assert learning_curve(split, ENC, ENG, spec, base_config=FAST) == learning_curve(
            split, ENC, ENG, spec, base_config=FAST, jobs=2
        )


def fake_history(dev_docs, test_docs, per_epoch_quality):
    """Histories where epoch e predicts gold for the first q_e dev docs."""
    history = []
    for epoch, quality in enumerate(per_epoch_quality, start=1):
        dev_preds = {
            d.doc_id: list(d.clusters) if i < quality else []
            for i, d in enumerate(dev_docs)
        }
        test_preds = {
            d.doc_id: list(d.clusters) if quality > 0 else [] for d in test_docs
        }
        history.append(
            EpochRecord(
                epoch=epoch, train_loss=0.0, dev_avg_f1=0.0,
                dev_predictions=dev_preds, extra_predictions=test_preds,
            )
        )
    return history


class TestDevAllocation:
    def setup_method(self):
        docs = corpus(8, seed=33)
        self.dev = docs[:4]
        self.test = docs[4:6]

    def test_full_subset_reproduces_selection(self):
        history = fake_history(self.dev, self.test, [1, 3, 2, 2, 2])
        rows = dev_allocation_experiment(
            history, self.dev, self.test,
            DevAllocSpec(dev_subset_sizes=(4,), num_subsets=20, seed=0), patience=2,
        )
        (row,) = rows
        assert row["agreement"] == 20
        assert row["std_test_f1"] == 0.0
        assert row["full_dev_epoch"] == 2

    def test_singleton_subsets_constant_scores_zero_std(self):
        history = fake_history(self.dev, self.test, [4, 4, 4])
        rows = dev_allocation_experiment(
            history, self.dev, self.test,
            DevAllocSpec(dev_subset_sizes=(1,), num_subsets=10, seed=0), patience=2,
        )
        assert rows[0]["std_test_f1"] == 0.0

    def test_missing_cache_rejected(self):
        history = [EpochRecord(epoch=1, train_loss=0.0, dev_avg_f1=0.0)]
        with pytest.raises(MissingPredictionsError):
            dev_allocation_experiment(
                history, self.dev, self.test, DevAllocSpec(dev_subset_sizes=(1,)), patience=2
            )

    def test_oversized_subset_rejected(self):
        history = fake_history(self.dev, self.test, [1])
        with pytest.raises(ValueError, match="exceeds"):
            dev_allocation_experiment(
                history, self.dev, self.test, DevAllocSpec(dev_subset_sizes=(9,)), patience=2
            )

    def test_end_to_end_with_real_training(self):
        docs = corpus(10, seed=34)
        split = split_of(docs, 4, 3, 3)
        params = init_params(ENC, ENG, seed=2)
        result = train(
            split.train, split.dev, params, ENC, ENG,
            TrainConfig(max_epochs=3, patience=3, seed=0),
            extra_eval_docs=split.test, cache_predictions=True, early_stop=False,
        )
        rows = dev_allocation_experiment(
            result.history, split.dev, split.test,
            DevAllocSpec(dev_subset_sizes=(2, 3), num_subsets=5, seed=1), patience=3,
        )
        assert len(rows) == 2
        full_scores = [r.dev_avg_f1 for r in result.history]
        from corefkit import select_checkpoint

        best, _ = select_checkpoint(full_scores, 3)
        assert rows[0]["full_dev_epoch"] == best + 1


class TestForgetting:
    def test_size_zero_is_source_score(self):
        docs = corpus(14, seed=35)
        source_params = init_params(ENC, ENG, seed=3)
        source_test = docs[:3]
        target = split_of(docs[3:], 6, 2, 3)
        rows = forgetting_eval(
            source_params, source_test, target, [0, 2], ENC, ENG, ENG, FAST
        )
        base, _ = evaluate_docs(source_test, source_params, ENC, ENG)
        assert rows[0]["target_size"] == 0
        assert rows[0]["source_avg_f1"] == pytest.approx(base.avg_f1)

    def test_target_column_matches_learning_curve(self):
        docs = corpus(14, seed=36)
        source_params = init_params(ENC, ENG, seed=3)
        source_test = docs[:3]
        target = split_of(docs[3:], 6, 2, 3)
        rows = forgetting_eval(
            source_params, source_test, target, [2, 4], ENC, ENG, ENG, FAST
        )
        curve = learning_curve(
            target, ENC, ENG,
            CurveSpec(train_sizes=(2, 4), init="source_checkpoint", seed=FAST.seed),
            base_config=FAST, source_params=source_params,
        )
        assert [r["target_avg_f1"] for r in rows] == [r["avg_f1"] for r in curve]


class TestFreezingSweep:
    def test_frozen_encoder_trains_scorers_only(self):
        docs = corpus(10, seed=37)
        split = split_of(docs, 5, 2, 3)
        init = init_params(ENC, ENG, seed=4)
        cfg = TrainConfig(max_epochs=3, patience=3, seed=0)
        run_cfg = dataclasses.replace(cfg, freeze=FreezeMask(0))
        result = train(split.train, split.dev, init, ENC, ENG, run_cfg)
        for name in encoder_param_names(ENC):
            assert np.array_equal(result.checkpoint.params.value(name), init.value(name))
        assert any(
            not np.array_equal(result.checkpoint.params.value(n), init.value(n))
            for n in init.names() if n.startswith("score.")
        )
        losses = [r.train_loss for r in result.history]
        assert losses[-1] < losses[0]

    def test_full_mask_identical_to_unfrozen(self):
        docs = corpus(10, seed=38)
        split = split_of(docs, 5, 2, 3)
        init = init_params(ENC, ENG, seed=4)
        cfg = TrainConfig(max_epochs=2, patience=2, seed=0)
        unfrozen = train(split.train, split.dev, init, ENC, ENG, cfg)
        masked = train(
            split.train, split.dev, init, ENC, ENG,
            dataclasses.replace(cfg, freeze=FreezeMask(ENC.num_layers)),
        )
        assert [(r.train_loss, r.dev_avg_f1) for r in unfrozen.history] == [
            (r.train_loss, r.dev_avg_f1) for r in masked.history
        ]
        for name in init.names():
            assert np.array_equal(
                unfrozen.checkpoint.params.value(name), masked.checkpoint.params.value(name)
            )

    def test_sweep_rows(self):
        docs = corpus(10, seed=39)
        split = split_of(docs, 4, 3, 3)
        init = init_params(ENC, ENG, seed=4)
        rows = layer_freezing_sweep(init, split, [0, 1, 2], ENC, ENG, FAST)
        assert [r["top_k"] for r in rows] == [0, 1, 2]
        assert all(0.0 <= r["avg_f1"] <= 1.0 for r in rows)

    def test_out_of_range_top_k(self):
        docs = corpus(10, seed=39)
        split = split_of(docs, 4, 3, 3)
        init = init_params(ENC, ENG, seed=4)
        with pytest.raises(ValueError, match="outside"):
            layer_freezing_sweep(init, split, [5], ENC, ENG, FAST)
