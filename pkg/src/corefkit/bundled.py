"""A tiny bundled document for gradient checks and smoke tests."""

from .documents import Document
from .jsonl import parse_jsonl

BUNDLED_DOC_JSONL = (
    '{"doc_id": "bundled-tiny", '
    '"sentences": [["Anna", "saw", "the", "dog", "today"], '
    '["Anna", "fed", "it", "happily"]], '
    '"clusters": [[[0, 0], [5, 5]], [[2, 3], [7, 7]], [[4, 4]]]}'
)


def load_bundled_doc() -> Document:
    (doc,) = parse_jsonl(BUNDLED_DOC_JSONL)
    return doc
