import pytest

from corefkit import Document, EncoderConfig, EngineConfig


@pytest.fixture
def tiny_doc():
    return Document(
        "tiny",
        [["Anna", "saw", "the", "dog"], ["Anna", "fed", "it", "happily"]],
        [((0, 0), (4, 4)), ((2, 3), (6, 6))],
    )


@pytest.fixture
def small_encoder_cfg():
    return EncoderConfig(num_layers=2, hidden_dim=8, hash_vocab_size=128, max_position=64)


@pytest.fixture
def small_engine_cfg():
    return EngineConfig(
        max_span_width=3,
        pruning_mode="reformulated",
        scorer_hidden_dim=6,
        width_embedding_dim=4,
    )
