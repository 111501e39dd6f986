"""Language atom selection by tf-idf over activity collections.

Each activity collection is treated as one large document: the subtitle
tokens of all its videos pooled together.  Words that are frequent inside
the target collection but rare across collections score high and become
the language atoms for that activity.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import STOP_WORDS, ValidationError, VideoRecord, iter_subtitle_tokens


@dataclass(frozen=True)
class LanguageAtom:
    """A selected word with its tf-idf score."""

    word: str
    score: float


def collection_document(
    videos: Sequence[VideoRecord],
    stop_words: frozenset[str] | None = STOP_WORDS,
) -> Counter:
    """Pool the subtitle tokens of a collection into one word multiset."""
    counts: Counter = Counter()
    for video in videos:
        for tok in iter_subtitle_tokens(video):
            if stop_words is not None and tok in stop_words:
                continue
            counts[tok] += 1
    return counts


def compute_tfidf(documents: Sequence[Counter], target: int) -> dict[str, float]:
    """Score every word of ``documents[target]`` against the other documents.

    The score is ``f * log(1 + N / n_w)`` where ``f`` is the word's count in
    the target document, ``N`` the number of documents, and ``n_w`` the
    number of documents containing the word (always >= 1 for words in the
    target, so the ratio is finite).  Natural log.
    """
    if not documents:
        raise ValidationError("no documents given")
    if not 0 <= target < len(documents):
        raise ValidationError(
            f"target index {target} out of range for {len(documents)} documents"
        )
    doc = documents[target]
    if not doc:
        raise ValidationError("target document has no tokens")
    n_docs = len(documents)
    scores: dict[str, float] = {}
    for word, freq in doc.items():
        n_with = sum(1 for d in documents if word in d)
        scores[word] = freq * math.log(1.0 + n_docs / n_with)
    return scores


def select_language_atoms(
    scores: dict[str, float], k: int = 100
) -> list[LanguageAtom]:
    """Top *k* words by score, ties broken alphabetically.

    Returns fewer than *k* atoms when the vocabulary is smaller.
    """
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [LanguageAtom(word=w, score=s) for w, s in ranked[:k]]


def discover_language_atoms(
    collection: Sequence[VideoRecord],
    other_collections: Sequence[Sequence[VideoRecord]] = (),
    k: int = 100,
    stop_words: frozenset[str] | None = STOP_WORDS,
) -> list[LanguageAtom]:
    """End-to-end atom selection for one collection.

    *other_collections* supplies the idf denominator; with none given the
    score degenerates to ``f * log 2`` and the ranking is by raw frequency.
    """
    docs = [collection_document(collection, stop_words)]
    docs.extend(collection_document(c, stop_words) for c in other_collections)
    scores = compute_tfidf(docs, target=0)
    return select_language_atoms(scores, k=k)
