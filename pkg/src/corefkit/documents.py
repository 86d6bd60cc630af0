"""Core document model: tokenized sentences plus entity clusters over token spans.

Spans are (start, end) pairs, inclusive, 0-based over the flat token sequence
of a document. This is the single coordinate system used everywhere: parsers,
the resolution engine, and the metrics.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

Span = tuple[int, int]


class DocumentError(ValueError):
    """A document violates the span/cluster invariants."""


def canonical_clusters(clusters: Iterable[Iterable[Span]]) -> list[tuple[Span, ...]]:
    """Sort mentions within each cluster and clusters by their first mention."""
    canon = [tuple(sorted((int(s), int(e)) for (s, e) in cluster)) for cluster in clusters]
    canon = [c for c in canon if c]
    return sorted(canon)


@dataclass
class Document:
    doc_id: str
    sentences: list[list[str]]
    clusters: list[tuple[Span, ...]] = field(default_factory=list)
    metadata: Optional[dict] = None

    def __post_init__(self):
        self.clusters = canonical_clusters(self.clusters)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def tokens(self) -> list[str]:
        return [t for sent in self.sentences for t in sent]

    def sentence_starts(self) -> list[int]:
        """Flat-token index of the first token of each sentence."""
        starts = []
        offset = 0
        for sent in self.sentences:
            starts.append(offset)
            offset += len(sent)
        return starts

    def sentence_of_token(self, index: int) -> int:
        starts = self.sentence_starts()
        for i in range(len(starts) - 1, -1, -1):
            if index >= starts[i]:
                return i
        raise IndexError(index)

    def mentions(self) -> set[Span]:
        return {span for cluster in self.clusters for span in cluster}

    def validate(self) -> "Document":
        """Check all span/cluster invariants; raise DocumentError on violation."""
        n = self.num_tokens
        starts = self.sentence_starts()
        seen: set[Span] = set()
        for cluster in self.clusters:
            if not cluster:
                raise DocumentError(f"{self.doc_id}: empty cluster")
            for (s, e) in cluster:
                if not (0 <= s <= e < n):
                    raise DocumentError(
                        f"{self.doc_id}: span ({s}, {e}) out of range for {n} tokens"
                    )
                if _sentence_index(starts, s) != _sentence_index(starts, e):
                    raise DocumentError(
                        f"{self.doc_id}: span ({s}, {e}) crosses a sentence boundary"
                    )
                if (s, e) in seen:
                    raise DocumentError(
                        f"{self.doc_id}: mention ({s}, {e}) appears in more than one place"
                    )
                seen.add((s, e))
        return self

    def structurally_equal(self, other: "Document") -> bool:
        """Identity of doc_id, token content and clusters; metadata is ignored."""
        return (
            self.doc_id == other.doc_id
            and self.sentences == other.sentences
            and canonical_clusters(self.clusters) == canonical_clusters(other.clusters)
        )

    def replace_clusters(self, clusters: Iterable[Iterable[Span]]) -> "Document":
        return dataclasses.replace(self, clusters=canonical_clusters(clusters))


def _sentence_index(starts: Sequence[int], token: int) -> int:
    lo, hi = 0, len(starts) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if starts[mid] <= token:
            lo = mid
        else:
            hi = mid - 1
    return lo


@dataclass(frozen=True)
class Segment:
    doc_id: str
    sentence_range: tuple[int, int]  # (first, last) sentence indices, inclusive
    token_offset: int  # flat index of the segment's first token
    tokens: list[str]
    sentence_lengths: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)


class SegmentationError(ValueError):
    pass


def segment_document(doc: Document, max_len: int) -> list[Segment]:
    """Greedy sentence packing: append sentences while the segment stays <= max_len.

    Sentences are never split, so a single sentence longer than max_len is an error.
    Concatenating the returned segments reproduces the document token stream.
    """
    if max_len < 1:
        raise SegmentationError(f"max_len must be >= 1, got {max_len}")
    segments: list[Segment] = []
    cur_tokens: list[str] = []
    cur_lengths: list[int] = []
    cur_first = 0
    offset = 0
    for i, sent in enumerate(doc.sentences):
        if len(sent) > max_len:
            raise SegmentationError(
                f"{doc.doc_id}: sentence {i} has {len(sent)} tokens, exceeds max_len {max_len}"
            )
        if cur_tokens and len(cur_tokens) + len(sent) > max_len:
            segments.append(
                Segment(
                    doc_id=doc.doc_id,
                    sentence_range=(cur_first, cur_first + len(cur_lengths) - 1),
                    token_offset=offset,
                    tokens=cur_tokens,
                    sentence_lengths=tuple(cur_lengths),
                )
            )
            offset += len(cur_tokens)
            cur_tokens, cur_lengths, cur_first = [], [], i
        cur_tokens = cur_tokens + list(sent)
        cur_lengths.append(len(sent))
    if cur_tokens:
        segments.append(
            Segment(
                doc_id=doc.doc_id,
                sentence_range=(cur_first, cur_first + len(cur_lengths) - 1),
                token_offset=offset,
                tokens=cur_tokens,
                sentence_lengths=tuple(cur_lengths),
            )
        )
    return segments


def strip_singletons(doc: Document) -> Document:
    """Drop size-1 clusters, keeping multi-mention clusters untouched."""
    return doc.replace_clusters([c for c in doc.clusters if len(c) > 1])


@dataclass(frozen=True)
class FoldSpec:
    fold_index: int
    train_ids: list[str]
    dev_ids: list[str]
    test_ids: list[str]


def make_folds(docs: Sequence[Document], k: int, seed: int) -> list[FoldSpec]:
    """Cross-validation folds from one seeded shuffle.

    Fold i's test block is the i-th contiguous slice of the shuffled ids, dev is
    the next slice (wrapping), train is the remainder. Test blocks across folds
    partition the corpus.
    """
    import numpy as np

    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    ids = [d.doc_id for d in docs]
    if k > len(ids):
        raise ValueError(f"k={k} exceeds corpus size {len(ids)}")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(ids)))
    shuffled = [ids[i] for i in order]

    n = len(shuffled)
    base, extra = divmod(n, k)
    blocks: list[list[str]] = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        blocks.append(shuffled[pos : pos + size])
        pos += size

    folds = []
    for i in range(k):
        test = blocks[i]
        dev = blocks[(i + 1) % k]
        used = set(test) | set(dev)
        train = [d for d in shuffled if d not in used]
        folds.append(FoldSpec(fold_index=i, train_ids=train, dev_ids=dev, test_ids=test))
    return folds
