"""Synthetic corpus generator with planted, recoverable preferences.

Each user gets a latent category-affinity vector; behavior events sample
items by affinity with a recency drift toward the dominant category; search
records co-occur queries with items of the query's home category; impression
labels are Bernoulli draws whose log-odds increase with (a) the
affinity/query-category match, (b) the recency of matching history actions,
(c) action-type weight (purchase > cart > favor > click), and optionally
(d) word-level overlap between the query text and recently acted-on item
titles (``w_lex``). The recency/action mass over matching events is either
summed (``mass_pool="sum"``, the default: graded volume matters) or
max-pooled (``"max"``: only the strongest single action matters). Recency
enters through ``decay_kernel``: ``"exp"`` (default) halves an event's
weight every ``half_life_hours``; ``"window"`` counts events at full weight
inside ``half_life_hours`` and not at all beyond it.

``PlantedTruth`` records every generative parameter, the impression
instances, and a Bayes scorer that evaluates the exact generative click
probability — the reference any learned ranker is measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import (
    BehaviorEvent,
    ContextFeatures,
    Corpus,
    Instance,
    InvalidConfig,
    Item,
    Query,
    SearchLogRecord,
    context_from_timestamp,
)

# sampling probabilities for action codes 1..4 (click, purchase, favor, cart)
ACTION_SAMPLE_PROBS = (0.60, 0.15, 0.10, 0.15)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 200
    n_items: int = 400
    n_queries: int = 240
    n_categories: int = 10
    n_scenarios: int = 4
    words_per_category: int = 30
    n_shared_words: int = 60
    title_len: tuple[int, int] = (3, 6)
    query_len: tuple[int, int] = (2, 4)
    events_per_user: tuple[int, int] = (20, 40)
    searches_per_query: tuple[int, int] = (4, 12)
    items_per_search: tuple[int, int] = (5, 15)
    impressions_per_user: int = 6
    queries_per_impression: int = 4
    horizon_days: float = 30.0
    start_time: int = 1_700_000_000
    # user affinity and sampling mixture knobs
    affinity_concentration: float = 0.12
    search_home_prob: float = 0.8
    event_affinity_prob: float = 0.85
    recency_drift: float = 0.5
    shown_match_prob: float = 0.5
    # label model:
    #   p = sigmoid(bias + signal * (w_match*match + w_mass*mass + w_lex*lex))
    signal: float = 1.0
    bias: float = -3.0
    w_match: float = 5.0
    w_mass: float = 2.5
    w_lex: float = 0.0
    mass_pool: str = "sum"          # "sum" | "max" over matching events
    decay_kernel: str = "exp"       # "exp" | "window" (cutoff at half_life_hours)
    half_life_hours: float = 72.0
    # indexed by action code - 1: click, purchase, favor, cart
    action_weights: tuple[float, float, float, float] = (0.25, 1.0, 0.5, 0.75)
    neg_pos_ratio: float | None = None
    n_discrete_values: int = 12
    n_continuous: int = 2

    def validate(self) -> None:
        counts = {"n_users": self.n_users, "n_items": self.n_items,
                  "n_queries": self.n_queries, "n_categories": self.n_categories,
                  "n_scenarios": self.n_scenarios}
        for name, v in counts.items():
            if v < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {v}")
        if self.n_items < self.n_categories:
            raise InvalidConfig("need at least one item per category")
        if self.n_scenarios > self.n_categories:
            raise InvalidConfig("more scenarios than categories")
        click, purchase, favor, cart = self.action_weights
        if not purchase > cart > favor > click >= 0:
            raise InvalidConfig("action weights must satisfy purchase > cart > favor > click >= 0")
        if self.half_life_hours <= 0:
            raise InvalidConfig("half_life_hours must be positive")
        if self.signal < 0:
            raise InvalidConfig("signal must be non-negative")
        if self.w_lex < 0:
            raise InvalidConfig("w_lex must be non-negative")
        if self.mass_pool not in ("sum", "max"):
            raise InvalidConfig(f"mass_pool must be 'sum' or 'max', got {self.mass_pool!r}")
        if self.decay_kernel not in ("exp", "window"):
            raise InvalidConfig(
                f"decay_kernel must be 'exp' or 'window', got {self.decay_kernel!r}")
        if self.neg_pos_ratio is not None and self.neg_pos_ratio <= 0:
            raise InvalidConfig("neg_pos_ratio must be positive when set")
        for name in ("title_len", "query_len", "events_per_user",
                     "searches_per_query", "items_per_search"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise InvalidConfig(f"{name} range ({lo},{hi}) invalid")


@dataclass
class PlantedTruth:
    """Generative parameters plus the impressions drawn from them."""

    affinity: np.ndarray            # (n_users, n_categories)
    query_home: np.ndarray          # (n_queries,)
    item_category: np.ndarray       # (n_items,)
    scenario_categories: dict[int, tuple[int, ...]]
    signal: float
    bias: float
    w_match: float
    w_mass: float
    half_life_hours: float
    action_weights: np.ndarray      # (5,), index 0 unused
    w_lex: float = 0.0
    mass_pool: str = "sum"
    decay_kernel: str = "exp"
    item_tokens: tuple = ()         # frozenset of title tokens per item
    query_tokens: tuple = ()        # frozenset of text tokens per query
    instances: list[Instance] = field(default_factory=list)

    def match_term(self, user: int, query: int) -> float:
        return float(self.affinity[user, self.query_home[query]])

    def decay(self, dt_hours: float) -> float:
        if self.decay_kernel == "window":
            return 1.0 if dt_hours <= self.half_life_hours else 0.0
        return 0.5 ** (dt_hours / self.half_life_hours)

    def mass_term(self, query: int, history: Sequence[BehaviorEvent],
                  decision_time: int) -> float:
        home = self.query_home[query]
        mass = 0.0
        for ev in history:
            if self.item_category[ev.item] != home:
                continue
            dt_hours = (decision_time - ev.timestamp) / 3600.0
            contrib = self.action_weights[ev.action] * self.decay(dt_hours)
            mass = max(mass, contrib) if self.mass_pool == "max" else mass + contrib
        return mass

    def lex_mass_term(self, query: int, history: Sequence[BehaviorEvent],
                      decision_time: int) -> float:
        """Action-weighted, time-decayed count of title tokens shared with the
        query — word-level relevance, finer than the category mass."""
        q_toks = self.query_tokens[query]
        mass = 0.0
        for ev in history:
            shared = len(q_toks & self.item_tokens[ev.item])
            if not shared:
                continue
            dt_hours = (decision_time - ev.timestamp) / 3600.0
            mass += (shared * self.action_weights[ev.action]
                     * self.decay(dt_hours))
        return mass

    def click_logit(self, user: int, query: int, history: Sequence[BehaviorEvent],
                    decision_time: int) -> float:
        logit = self.bias + self.signal * (
            self.w_match * self.match_term(user, query)
            + self.w_mass * self.mass_term(query, history, decision_time))
        if self.w_lex:
            logit += self.signal * self.w_lex * self.lex_mass_term(
                query, history, decision_time)
        return logit

    def click_probability(self, user: int, query: int,
                          history: Sequence[BehaviorEvent],
                          decision_time: int) -> float:
        return 1.0 / (1.0 + math.exp(-self.click_logit(user, query, history, decision_time)))

    def bayes_scores(self, instances: Sequence[Instance]) -> np.ndarray:
        """Exact generative click probability per instance (uses the attached
        history, which at <= 100 events equals the history used at draw time)."""
        return np.array([
            self.click_probability(i.user, i.query, i.history, i.decision_time)
            for i in instances
        ])


def _sample_tokens(rng, lo, hi, home_pool, shared_pool, home_prob=0.8):
    n = int(rng.integers(lo, hi + 1))
    toks = []
    for _ in range(n):
        pool = home_pool if rng.random() < home_prob else shared_pool
        toks.append(int(pool[rng.integers(len(pool))]))
    return tuple(toks)


def generate_synthetic(config: SynthConfig, seed: int) -> tuple[Corpus, PlantedTruth]:
    config.validate()
    rng = np.random.default_rng(seed)
    C = config.n_categories

    word_pools = [np.arange(c * config.words_per_category,
                            (c + 1) * config.words_per_category)
                  for c in range(C)]
    shared_pool = np.arange(C * config.words_per_category,
                            C * config.words_per_category + config.n_shared_words)

    scenario_categories = {s: tuple(c for c in range(C) if c % config.n_scenarios == s)
                           for s in range(config.n_scenarios)}

    affinity = rng.dirichlet(np.full(C, config.affinity_concentration),
                             size=config.n_users)

    # first C items pin one item per category so every category is populated
    item_category = np.concatenate([
        np.arange(C), rng.integers(0, C, size=config.n_items - C)])
    items = []
    for i in range(config.n_items):
        c = int(item_category[i])
        items.append(Item(
            id=i,
            title_tokens=_sample_tokens(rng, *config.title_len,
                                        word_pools[c], shared_pool),
            category=c,
            discrete_feats=((0, int(rng.integers(config.n_discrete_values))),),
            continuous_feats=tuple(round(float(x), 6)
                                   for x in rng.normal(size=config.n_continuous)),
        ))
    items_by_cat = [np.nonzero(item_category == c)[0] for c in range(C)]

    query_home = rng.integers(0, C, size=config.n_queries)
    queries = []
    for q in range(config.n_queries):
        home = int(query_home[q])
        others = rng.choice(C, size=2, replace=True)
        queries.append(Query(
            id=q,
            text_tokens=_sample_tokens(rng, *config.query_len,
                                       word_pools[home], shared_pool),
            top_categories=(home, int(others[0]), int(others[1])),
            discrete_feats=((0, int(rng.integers(config.n_discrete_values))),),
            continuous_feats=tuple(round(float(x), 6)
                                   for x in rng.normal(size=config.n_continuous)),
        ))
    queries_by_cat = [np.nonzero(query_home == c)[0] for c in range(C)]

    horizon_s = int(config.horizon_days * 86400)
    dominant = affinity.argmax(axis=1)
    events: list[BehaviorEvent] = []
    events_by_user: list[list[BehaviorEvent]] = []
    action_codes = np.array([1, 2, 3, 4])
    for u in range(config.n_users):
        n_e = int(rng.integers(config.events_per_user[0], config.events_per_user[1] + 1))
        stamps = np.sort(rng.integers(config.start_time,
                                      config.start_time + horizon_s, size=n_e))
        mine = []
        for j, ts in enumerate(stamps):
            frac = j / max(n_e - 1, 1)
            drift = config.recency_drift * frac
            probs = (1.0 - drift) * affinity[u]
            probs[dominant[u]] += drift
            if rng.random() < config.event_affinity_prob:
                c = int(rng.choice(C, p=probs / probs.sum()))
                item = int(rng.choice(items_by_cat[c]))
            else:
                item = int(rng.integers(config.n_items))
            action = int(rng.choice(action_codes, p=ACTION_SAMPLE_PROBS))
            mine.append(BehaviorEvent(user=u, item=item, action=action,
                                      timestamp=int(ts)))
        events.extend(mine)
        events_by_user.append(mine)

    search_log = []
    base_w = np.ones(config.n_items)
    for q in range(config.n_queries):
        home = int(query_home[q])
        weights = base_w.copy()
        n_home = len(items_by_cat[home])
        n_other = config.n_items - n_home
        if 0 < n_home < config.n_items:
            weights[items_by_cat[home]] = (
                config.search_home_prob / n_home * n_other / (1 - config.search_home_prob))
        weights /= weights.sum()
        n_rec = int(rng.integers(config.searches_per_query[0],
                                 config.searches_per_query[1] + 1))
        for _ in range(n_rec):
            k = int(rng.integers(config.items_per_search[0],
                                 config.items_per_search[1] + 1))
            k = min(k, config.n_items)
            picked = rng.choice(config.n_items, size=k, replace=False, p=weights)
            search_log.append(SearchLogRecord(
                query=q, retrieved_items=tuple(int(i) for i in picked)))

    corpus = Corpus(
        n_users=config.n_users, items=tuple(items), queries=tuple(queries),
        n_categories=C, n_scenarios=config.n_scenarios,
        events=tuple(events), search_log=tuple(search_log),
    )

    truth = PlantedTruth(
        affinity=affinity, query_home=query_home, item_category=item_category,
        scenario_categories=scenario_categories,
        signal=config.signal, bias=config.bias,
        w_match=config.w_match, w_mass=config.w_mass, w_lex=config.w_lex,
        mass_pool=config.mass_pool, decay_kernel=config.decay_kernel,
        half_life_hours=config.half_life_hours,
        action_weights=np.array([0.0, *config.action_weights]),
        item_tokens=tuple(frozenset(it.title_tokens) for it in items),
        query_tokens=tuple(frozenset(q.text_tokens) for q in queries),
        instances=[],
    )

    # impressions: queries shown together share one decision time and history
    top2 = np.argsort(affinity, axis=1)[:, -2:]
    lo_t = config.start_time + int(0.35 * horizon_s)
    hi_t = config.start_time + int(1.02 * horizon_s)
    instances: list[Instance] = []
    for u in range(config.n_users):
        times = sorted(int(t) for t in rng.integers(lo_t, hi_t,
                                                    size=config.impressions_per_user))
        for dt_ in times:
            history = tuple(ev for ev in events_by_user[u] if ev.timestamp < dt_)[-100:]
            shown: list[int] = []
            guard = 0
            while len(shown) < config.queries_per_impression and guard < 200:
                guard += 1
                if rng.random() < config.shown_match_prob:
                    cat = int(top2[u][int(rng.integers(2))])
                    pool = queries_by_cat[cat]
                    if len(pool) == 0:
                        continue
                    q = int(rng.choice(pool))
                else:
                    q = int(rng.integers(config.n_queries))
                if q not in shown:
                    shown.append(q)
            ctx = context_from_timestamp(dt_, special_day=bool(rng.random() < 0.1))
            for q in shown:
                p = truth.click_probability(u, q, history, dt_)
                label = int(rng.random() < p)
                instances.append(Instance(user=u, query=q, label=label,
                                          context=ctx, decision_time=dt_,
                                          history=history))

    if config.neg_pos_ratio is not None:
        pos = [i for i in instances if i.label == 1]
        neg = [i for i in instances if i.label == 0]
        target = int(round(config.neg_pos_ratio * len(pos)))
        if len(neg) > target:
            keep = rng.choice(len(neg), size=target, replace=False)
            neg = [neg[int(i)] for i in sorted(keep)]
        instances = sorted(pos + neg, key=lambda i: (i.user, i.decision_time, i.query))

    truth.instances = instances
    return corpus, truth
