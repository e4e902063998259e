"""Item retrieval for a clicked query, plus the query-category predictor.

Deliberately transparent lexical scoring: a token-overlap cosine against item
titles, a category-match bonus, and a personalization bonus from the user's
historical category affinity. Pure functions over an immutable corpus.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import BehaviorEvent, Corpus, Query


class RetrievalError(Exception):
    pass


class UnknownQuery(RetrievalError):
    pass


@dataclass(frozen=True)
class RetrievalConfig:
    w_text: float = 1.0
    w_cat: float = 0.5
    w_pers: float = 0.5


def _overlap_cosine(a: Sequence[int], b: Sequence[int]) -> float:
    sa, sb = set(a), set(b)
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / (len(sa) * len(sb)) ** 0.5


def category_affinity(history: Sequence[BehaviorEvent], corpus: Corpus
                      ) -> dict[int, float]:
    """Fraction of history events landing in each item category."""
    if not history:
        return {}
    counts = Counter(corpus.items[ev.item].category for ev in history)
    total = len(history)
    return {c: n / total for c, n in counts.items()}


def retrieve_items(query: int, user_history: Sequence[BehaviorEvent],
                   corpus: Corpus, k: int,
                   config: RetrievalConfig = RetrievalConfig()
                   ) -> list[tuple[int, float]]:
    """Top-k items for a clicked query: descending score, ties by ascending
    item id; score = w_text * title cosine + w_cat * top-category match
    + w_pers * history affinity to the item's category."""
    if not 0 <= query < corpus.n_queries:
        raise UnknownQuery(f"query {query} not in corpus of {corpus.n_queries}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = corpus.queries[query]
    top_cats = set(q.top_categories) if q.top_categories is not None else set()
    affinity = category_affinity(user_history, corpus)
    scored = []
    for item in corpus.items:
        score = (config.w_text * _overlap_cosine(q.text_tokens, item.title_tokens)
                 + config.w_cat * (1.0 if item.category in top_cats else 0.0)
                 + config.w_pers * affinity.get(item.category, 0.0))
        scored.append((item.id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def global_category_ranking(corpus: Corpus) -> list[int]:
    """Categories by item count descending, ties by ascending id; categories
    with no items come last in id order so the ranking is always complete."""
    counts = Counter(item.category for item in corpus.items)
    return sorted(range(corpus.n_categories),
                  key=lambda c: (-counts.get(c, 0), c))


def predict_query_categories(query_text: Sequence[int], corpus: Corpus
                             ) -> tuple[int, int, int]:
    """Top 3 categories by token-overlap-weighted vote of item titles; padded
    from the global ranking (cycling it if the corpus has under 3 categories)."""
    votes: Counter[int] = Counter()
    q_tokens = set(query_text)
    for item in corpus.items:
        overlap = len(q_tokens & set(item.title_tokens))
        if overlap:
            votes[item.category] += overlap
    chosen = [c for c, _ in sorted(votes.items(), key=lambda cv: (-cv[1], cv[0]))]
    chosen = chosen[:3]
    backfill = global_category_ranking(corpus)
    for c in backfill:
        if len(chosen) == 3:
            break
        if c not in chosen:
            chosen.append(c)
    while len(chosen) < 3:  # corpus with fewer than 3 categories
        chosen.append(chosen[-1] if chosen else 0)
    return (chosen[0], chosen[1], chosen[2])


def fill_missing_query_categories(corpus: Corpus) -> Corpus:
    """Predict top_categories for queries missing them; other queries are
    returned untouched."""
    patched = []
    changed = False
    for q in corpus.queries:
        if q.top_categories is None:
            patched.append(Query(id=q.id, text_tokens=q.text_tokens,
                                 top_categories=predict_query_categories(
                                     q.text_tokens, corpus),
                                 discrete_feats=q.discrete_feats,
                                 continuous_feats=q.continuous_feats))
            changed = True
        else:
            patched.append(q)
    if not changed:
        return corpus
    return replace(corpus, queries=tuple(patched))
