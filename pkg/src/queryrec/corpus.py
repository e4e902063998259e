"""Canonical data model, log ingestion, serialization, and splitting.

A corpus is three files: an entities file (JSON-lines, one object per entity
with a ``kind`` field), a behavior log (TSV: user, item, action, timestamp),
and a search log (TSV: query, comma-separated retrieved item ids). Ids are
dense 0-based integers per kind; ingestion validates density and every
cross-reference. Instances (one impression of a query to a user) live in a
separate JSON-lines file and get their behavior history attached at load
time, so one corpus serves many decision times.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ENTITIES_FILE = "entities.jsonl"
BEHAVIOR_FILE = "behavior.tsv"
SEARCH_FILE = "search.tsv"
KNOWLEDGE_FILE = "knowledge.json"
INSTANCES_FILE = "instances.jsonl"

HISTORY_CAP = 100

SEASONS = ("spring", "summer", "autumn", "winter")


class CorpusError(Exception):
    """Base class for data-layer failures."""


class MalformedLine(CorpusError):
    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class UnknownId(CorpusError):
    def __init__(self, kind: str, id: int):
        self.kind = kind
        self.id = id
        super().__init__(f"unknown {kind} id {id}")


class EmptyFile(CorpusError):
    pass


class EmptyInput(CorpusError):
    pass


class InvalidConfig(CorpusError):
    pass


class ActionType(IntEnum):
    CLICK = 1
    PURCHASE = 2
    FAVOR = 3
    CART = 4


@dataclass(frozen=True)
class BehaviorEvent:
    user: int
    item: int
    action: int
    timestamp: int

    def __post_init__(self):
        if self.action not in (1, 2, 3, 4):
            raise ValueError(f"action {self.action} not in 1..4")
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")


@dataclass(frozen=True)
class SearchLogRecord:
    query: int
    retrieved_items: tuple[int, ...]

    def __post_init__(self):
        if not self.retrieved_items:
            raise ValueError("search record with no retrieved items")
        if len(set(self.retrieved_items)) != len(self.retrieved_items):
            raise ValueError("duplicate items within one search record")


@dataclass(frozen=True)
class Item:
    id: int
    title_tokens: tuple[int, ...]
    category: int
    discrete_feats: tuple[tuple[int, int], ...] = ()
    continuous_feats: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.title_tokens:
            raise ValueError(f"item {self.id} has an empty title")


@dataclass(frozen=True)
class Query:
    id: int
    text_tokens: tuple[int, ...]
    # None = not yet predicted; filled before instance assembly
    top_categories: tuple[int, int, int] | None = None
    discrete_feats: tuple[tuple[int, int], ...] = ()
    continuous_feats: tuple[float, ...] = ()

    def __post_init__(self):
        if self.top_categories is not None and len(self.top_categories) != 3:
            raise ValueError(f"query {self.id}: top_categories must have exactly 3 entries")


@dataclass(frozen=True)
class ContextFeatures:
    season: str
    special_day: bool
    hour_of_day: int

    def __post_init__(self):
        if self.season not in SEASONS:
            raise ValueError(f"unknown season {self.season!r}")
        if not 0 <= self.hour_of_day <= 23:
            raise ValueError(f"hour_of_day {self.hour_of_day} out of range")

    def to_json_obj(self) -> dict:
        return {"hour_of_day": self.hour_of_day, "season": self.season,
                "special_day": self.special_day}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ContextFeatures":
        return cls(season=obj["season"], special_day=bool(obj["special_day"]),
                   hour_of_day=int(obj["hour_of_day"]))


def context_from_timestamp(ts: int, special_day: bool = False) -> ContextFeatures:
    """Derive season/hour from a unix timestamp (UTC)."""
    days = ts / 86400.0
    day_of_year = int(days % 365.25)
    season = SEASONS[(day_of_year // 91) % 4]
    hour = int(days % 1.0 * 24)
    return ContextFeatures(season=season, special_day=special_day, hour_of_day=hour)


@dataclass(frozen=True)
class Instance:
    """One impression: query shown to user at decision_time, clicked or not.

    ``history`` holds the user's most recent events strictly before
    decision_time (at most HISTORY_CAP, oldest first) and is attached at
    assembly time, not stored in the instance file.
    """

    user: int
    query: int
    label: int
    context: ContextFeatures
    decision_time: int
    history: tuple[BehaviorEvent, ...] = ()

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label {self.label} not in {{0,1}}")
        if len(self.history) > HISTORY_CAP:
            raise ValueError(f"history exceeds cap of {HISTORY_CAP}")
        for ev in self.history:
            if ev.timestamp >= self.decision_time:
                raise ValueError("history event at or after decision_time")


@dataclass
class Corpus:
    """Immutable after construction; all id spaces dense and 0-based."""

    n_users: int
    items: tuple[Item, ...]
    queries: tuple[Query, ...]
    n_categories: int
    n_scenarios: int
    events: tuple[BehaviorEvent, ...]
    search_log: tuple[SearchLogRecord, ...]

    _events_by_user: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_user: dict[int, list[BehaviorEvent]] = {}
        for ev in self.events:
            by_user.setdefault(ev.user, []).append(ev)
        for evs in by_user.values():
            evs.sort(key=lambda e: e.timestamp)
        self._events_by_user = by_user

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_queries(self) -> int:
        return len(self.queries)

    @property
    def n_words(self) -> int:
        top = -1
        for it in self.items:
            if it.title_tokens:
                top = max(top, max(it.title_tokens))
        for q in self.queries:
            if q.text_tokens:
                top = max(top, max(q.text_tokens))
        return top + 1

    @property
    def n_discrete_values(self) -> int:
        top = -1
        for ent in (*self.items, *self.queries):
            for _, value in ent.discrete_feats:
                top = max(top, value)
        return top + 1

    def user_events(self, user: int) -> list[BehaviorEvent]:
        if not 0 <= user < self.n_users:
            raise UnknownId("user", user)
        return self._events_by_user.get(user, [])

    def history_before(self, user: int, decision_time: int,
                       cap: int = HISTORY_CAP) -> tuple[BehaviorEvent, ...]:
        """Most recent <= cap events strictly before decision_time, oldest first."""
        evs = self.user_events(user)
        cut = bisect.bisect_left([e.timestamp for e in evs], decision_time)
        return tuple(evs[max(0, cut - cap):cut])

    def attach_history(self, inst: Instance, cap: int = HISTORY_CAP) -> Instance:
        hist = self.history_before(inst.user, inst.decision_time, cap)
        return Instance(user=inst.user, query=inst.query, label=inst.label,
                        context=inst.context, decision_time=inst.decision_time,
                        history=hist)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _read_lines(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise EmptyFile(f"{path} has no records")
    return lines


def _parse_int(raw: str, path, ln: int, what: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise MalformedLine(path, ln, f"{what} is not an integer: {raw!r}") from None


def _check_dense(kind: str, ids: list[int], path) -> int:
    if sorted(ids) != list(range(len(ids))):
        raise MalformedLine(path, 0, f"{kind} ids are not dense 0-based")
    return len(ids)


def _parse_entities(path: Path):
    users: list[int] = []
    categories: list[int] = []
    scenarios: list[int] = []
    items: dict[int, Item] = {}
    queries: dict[int, Query] = {}
    for ln, raw in enumerate(_read_lines(path), start=1):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise MalformedLine(path, ln, f"invalid JSON: {e.msg}") from None
        if not isinstance(obj, dict) or "kind" not in obj or "id" not in obj:
            raise MalformedLine(path, ln, "entity object needs 'kind' and 'id'")
        kind = obj["kind"]
        eid = obj["id"]
        if not isinstance(eid, int) or eid < 0:
            raise MalformedLine(path, ln, f"id must be a non-negative integer: {eid!r}")
        try:
            if kind == "user":
                users.append(eid)
            elif kind == "category":
                categories.append(eid)
            elif kind == "scenario":
                scenarios.append(eid)
            elif kind == "item":
                items[eid] = Item(
                    id=eid,
                    title_tokens=tuple(obj["title_tokens"]),
                    category=obj["category"],
                    discrete_feats=tuple((f, v) for f, v in obj.get("discrete_feats", [])),
                    continuous_feats=tuple(float(x) for x in obj.get("continuous_feats", [])),
                )
            elif kind == "query":
                cats = obj.get("top_categories")
                queries[eid] = Query(
                    id=eid,
                    text_tokens=tuple(obj["text_tokens"]),
                    top_categories=None if cats is None else tuple(cats),
                    discrete_feats=tuple((f, v) for f, v in obj.get("discrete_feats", [])),
                    continuous_feats=tuple(float(x) for x in obj.get("continuous_feats", [])),
                )
            else:
                raise MalformedLine(path, ln, f"unknown entity kind {kind!r}")
        except MalformedLine:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedLine(path, ln, f"bad {kind} record: {e}") from None
    n_users = _check_dense("user", users, path)
    n_categories = _check_dense("category", categories, path)
    n_scenarios = _check_dense("scenario", scenarios, path)
    _check_dense("item", list(items), path)
    _check_dense("query", list(queries), path)
    item_list = tuple(items[i] for i in range(len(items)))
    query_list = tuple(queries[i] for i in range(len(queries)))
    for it in item_list:
        if not 0 <= it.category < n_categories:
            raise UnknownId("category", it.category)
    for q in query_list:
        if q.top_categories is not None:
            for c in q.top_categories:
                if not 0 <= c < n_categories:
                    raise UnknownId("category", c)
    widths = {len(it.continuous_feats) for it in item_list}
    if len(widths) > 1:
        raise MalformedLine(path, 0, "items disagree on continuous feature width")
    widths = {len(q.continuous_feats) for q in query_list}
    if len(widths) > 1:
        raise MalformedLine(path, 0, "queries disagree on continuous feature width")
    return n_users, n_categories, n_scenarios, item_list, query_list


def _parse_behavior(path: Path, n_users: int, n_items: int) -> tuple[BehaviorEvent, ...]:
    events = []
    for ln, raw in enumerate(_read_lines(path), start=1):
        parts = raw.split("\t")
        if len(parts) != 4:
            raise MalformedLine(path, ln, f"expected 4 tab-separated fields, got {len(parts)}")
        user = _parse_int(parts[0], path, ln, "user")
        item = _parse_int(parts[1], path, ln, "item")
        action = _parse_int(parts[2], path, ln, "action")
        ts = _parse_int(parts[3], path, ln, "timestamp")
        if action not in (1, 2, 3, 4):
            raise MalformedLine(path, ln, f"action {action} not in 1..4")
        if ts <= 0:
            raise MalformedLine(path, ln, f"timestamp {ts} not positive")
        if not 0 <= user < n_users:
            raise UnknownId("user", user)
        if not 0 <= item < n_items:
            raise UnknownId("item", item)
        events.append(BehaviorEvent(user=user, item=item, action=action, timestamp=ts))
    return tuple(events)


def _parse_search(path: Path, n_queries: int, n_items: int) -> tuple[SearchLogRecord, ...]:
    records = []
    for ln, raw in enumerate(_read_lines(path), start=1):
        parts = raw.split("\t")
        if len(parts) != 2:
            raise MalformedLine(path, ln, f"expected 2 tab-separated fields, got {len(parts)}")
        query = _parse_int(parts[0], path, ln, "query")
        if not parts[1]:
            raise MalformedLine(path, ln, "empty retrieved-item list")
        items = tuple(_parse_int(tok, path, ln, "item") for tok in parts[1].split(","))
        if len(set(items)) != len(items):
            raise MalformedLine(path, ln, "duplicate items within one record")
        if not 0 <= query < n_queries:
            raise UnknownId("query", query)
        for it in items:
            if not 0 <= it < n_items:
                raise UnknownId("item", it)
        records.append(SearchLogRecord(query=query, retrieved_items=items))
    return tuple(records)


def ingest(search_log_path, behavior_log_path, entities_path) -> Corpus:
    """Parse and cross-validate the three corpus files."""
    n_users, n_categories, n_scenarios, items, queries = _parse_entities(Path(entities_path))
    events = _parse_behavior(Path(behavior_log_path), n_users, len(items))
    search = _parse_search(Path(search_log_path), len(queries), len(items))
    return Corpus(n_users=n_users, items=items, queries=queries,
                  n_categories=n_categories, n_scenarios=n_scenarios,
                  events=events, search_log=search)


def ingest_dir(corpus_dir) -> Corpus:
    d = Path(corpus_dir)
    return ingest(d / SEARCH_FILE, d / BEHAVIOR_FILE, d / ENTITIES_FILE)


# ---------------------------------------------------------------------------
# serialization (canonical form; save -> ingest -> save is byte-stable)
# ---------------------------------------------------------------------------

def _item_obj(it: Item) -> dict:
    return {"kind": "item", "id": it.id, "title_tokens": list(it.title_tokens),
            "category": it.category,
            "discrete_feats": [list(p) for p in it.discrete_feats],
            "continuous_feats": list(it.continuous_feats)}


def _query_obj(q: Query) -> dict:
    return {"kind": "query", "id": q.id, "text_tokens": list(q.text_tokens),
            "top_categories": None if q.top_categories is None else list(q.top_categories),
            "discrete_feats": [list(p) for p in q.discrete_feats],
            "continuous_feats": list(q.continuous_feats)}


def save_corpus(corpus: Corpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for u in range(corpus.n_users):
        lines.append(_canon({"kind": "user", "id": u}))
    for c in range(corpus.n_categories):
        lines.append(_canon({"kind": "category", "id": c}))
    for s in range(corpus.n_scenarios):
        lines.append(_canon({"kind": "scenario", "id": s}))
    for it in corpus.items:
        lines.append(_canon(_item_obj(it)))
    for q in corpus.queries:
        lines.append(_canon(_query_obj(q)))
    (out / ENTITIES_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")

    rows = [f"{e.user}\t{e.item}\t{e.action}\t{e.timestamp}" for e in corpus.events]
    (out / BEHAVIOR_FILE).write_text("\n".join(rows) + "\n", encoding="utf-8")

    rows = [f"{r.query}\t{','.join(str(i) for i in r.retrieved_items)}"
            for r in corpus.search_log]
    (out / SEARCH_FILE).write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

def save_instances(instances: Sequence[Instance], path) -> None:
    lines = []
    for inst in instances:
        lines.append(_canon({
            "uid": inst.user, "qid": inst.query, "label": inst.label,
            "context": inst.context.to_json_obj(),
            "decision_time": inst.decision_time,
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_instances(path, corpus: Corpus | None = None,
                   history_cap: int = HISTORY_CAP) -> list[Instance]:
    """Read an instance file; attach history from ``corpus`` when given."""
    path = Path(path)
    out = []
    for ln, raw in enumerate(_read_lines(path), start=1):
        try:
            obj = json.loads(raw)
            inst = Instance(
                user=int(obj["uid"]), query=int(obj["qid"]), label=int(obj["label"]),
                context=ContextFeatures.from_json_obj(obj["context"]),
                decision_time=int(obj["decision_time"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise MalformedLine(path, ln, f"bad instance record: {e}") from None
        if corpus is not None:
            if not 0 <= inst.user < corpus.n_users:
                raise UnknownId("user", inst.user)
            if not 0 <= inst.query < corpus.n_queries:
                raise UnknownId("query", inst.query)
            inst = corpus.attach_history(inst, cap=history_cap)
        out.append(inst)
    return out


def split_instances(instances: Sequence[Instance], train_frac: float,
                    seed: int) -> tuple[list[Instance], list[Instance]]:
    """Deterministic shuffled partition into floor(n*frac) train + rest test."""
    if not instances:
        raise EmptyInput("no instances to split")
    if not 0.0 < train_frac < 1.0:
        raise InvalidConfig(f"train_frac must lie strictly between 0 and 1, got {train_frac}")
    order = np.random.default_rng(seed).permutation(len(instances))
    n_train = int(len(instances) * train_frac)
    train = [instances[i] for i in order[:n_train]]
    test = [instances[i] for i in order[n_train:]]
    return train, test


# ---------------------------------------------------------------------------
# scenario knowledge
# ---------------------------------------------------------------------------

def save_knowledge(scenario_categories: Mapping, path) -> None:
    obj = {"scenario_categories": {str(s): sorted(cats)
                                   for s, cats in scenario_categories.items()}}
    Path(path).write_text(_canon(obj) + "\n", encoding="utf-8")


def load_knowledge(path) -> dict[int, tuple[int, ...]]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        raw = obj["scenario_categories"]
        return {int(s): tuple(cats) for s, cats in raw.items()}
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise MalformedLine(path, 0, f"bad knowledge file: {e}") from None
