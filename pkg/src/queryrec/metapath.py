"""Candidate generation over the heterogeneous behavior graph.

Conditional-probability edges (item→query from search co-retrieval counts,
item→scenario/scenario→query/item→category/category→query from the category
knowledge config) compose along three path shapes — user→item→query,
user→item→scenario→query, user→item→category→query. Offline, each path type
becomes an index keyed by item holding its top-k queries with path scores;
online, a user's recently consumed items vote: per path type,
MetaScore(q) = Σ over the user's items of the indexed score, the per-path
top lists are capped, and the three lists merge into one candidate set of at
most ``total_cap`` queries, each carrying the 6-dimensional
[type1, score1, type2, score2, type3, score3] feature vector.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Corpus, SearchLogRecord

TABLE_K_DEFAULT = 2000
INDEX_K_DEFAULT = 1000
PER_PATH_CAP_DEFAULT = 200
TOTAL_CAP_DEFAULT = 600

EDGE_KINDS = ("I2Q", "I2S", "S2Q", "I2C", "C2Q")
PATH_TYPES = ("U2I2Q", "U2I2S2Q", "U2I2C2Q")


class MetapathError(Exception):
    pass


class EmptyLog(MetapathError):
    pass


class MissingScenarioConfig(MetapathError):
    pass


class MissingTable(MetapathError):
    def __init__(self, edge_kind: str):
        self.edge_kind = edge_kind
        super().__init__(f"required edge table {edge_kind} not supplied")


class SnapshotError(MetapathError):
    pass


@dataclass(frozen=True)
class CondProbTable:
    """Edges of one kind: source id → ((target id, prob), ...) sorted by prob
    descending (ties by ascending target id), truncated to table_k."""

    edge_kind: str
    rows: Mapping[int, tuple[tuple[int, float], ...]]

    def __post_init__(self):
        if self.edge_kind not in EDGE_KINDS:
            raise MetapathError(f"unknown edge kind {self.edge_kind!r}")

    def prob(self, source: int, target: int) -> float:
        for t, p in self.rows.get(source, ()):
            if t == target:
                return p
        return 0.0


@dataclass(frozen=True)
class MetaPathIndex:
    path_type: str
    index_k: int
    rows: Mapping[int, tuple[tuple[int, float], ...]]

    def __post_init__(self):
        if self.path_type not in PATH_TYPES:
            raise MetapathError(f"unknown path type {self.path_type!r}")


@dataclass(frozen=True)
class CandidateFeatures:
    type1: int
    score1: float
    type2: int
    score2: float
    type3: int
    score3: float

    def vector(self) -> tuple[float, ...]:
        return (float(self.type1), self.score1, float(self.type2), self.score2,
                float(self.type3), self.score3)

    @property
    def total(self) -> float:
        return self.score1 + self.score2 + self.score3


@dataclass(frozen=True)
class CandidateSet:
    entries: tuple[tuple[int, CandidateFeatures], ...]
    user: int | None = None

    def __len__(self):
        return len(self.entries)

    def query_ids(self) -> list[int]:
        return [q for q, _ in self.entries]


def _sorted_row(pairs: Mapping[int, float], k: int) -> tuple[tuple[int, float], ...]:
    items = [(t, p) for t, p in pairs.items() if p > 0.0]
    items.sort(key=lambda tp: (-tp[1], tp[0]))
    return tuple(items[:k])


# ---------------------------------------------------------------------------
# edge estimation
# ---------------------------------------------------------------------------

def estimate_i2q(search_log: Sequence[SearchLogRecord],
                 table_k: int = TABLE_K_DEFAULT) -> CondProbTable:
    """P(q/i) = Count(q,i) / Count(i) over search records: Count(i) counts
    every record retrieving i, Count(q,i) those issued for q."""
    if not search_log:
        raise EmptyLog("cannot estimate item->query edges from an empty search log")
    count_i: dict[int, int] = {}
    count_qi: dict[int, dict[int, int]] = {}
    for rec in search_log:
        for item in rec.retrieved_items:
            count_i[item] = count_i.get(item, 0) + 1
            per_q = count_qi.setdefault(item, {})
            per_q[rec.query] = per_q.get(rec.query, 0) + 1
    rows = {}
    for item, per_q in count_qi.items():
        denom = count_i[item]
        rows[item] = _sorted_row({q: c / denom for q, c in per_q.items()}, table_k)
    return CondProbTable(edge_kind="I2Q", rows=rows)


def estimate_aux_tables(corpus: Corpus,
                        scenario_categories: Mapping[int, Sequence[int]] | None,
                        table_k: int = TABLE_K_DEFAULT) -> dict[str, CondProbTable]:
    """The I2S, S2Q, I2C, C2Q tables.

    I2C is the indicator row {(category(i), 1.0)}. I2S spreads an item
    uniformly over the scenarios whose category sets contain its category.
    S2Q is the membership-weighted mixture of the members' P(q/i) rows.
    C2Q mirrors the item->query estimator at category granularity, counting
    each (record, retrieved item) incidence against the item's category.
    """
    if corpus.n_scenarios > 0:
        if scenario_categories is None:
            raise MissingScenarioConfig("scenario definitions required")
        missing = [s for s in range(corpus.n_scenarios) if s not in scenario_categories]
        if missing:
            raise MissingScenarioConfig(f"no category set for scenario(s) {missing}")

    i2c_rows = {it.id: ((it.category, 1.0),) for it in corpus.items}

    cat_to_scenarios: dict[int, list[int]] = {}
    members: dict[int, list[int]] = {s: [] for s in range(corpus.n_scenarios)}
    if scenario_categories:
        for s in range(corpus.n_scenarios):
            for c in scenario_categories[s]:
                cat_to_scenarios.setdefault(c, []).append(s)
        for it in corpus.items:
            for s in cat_to_scenarios.get(it.category, ()):
                members[s].append(it.id)

    i2s_rows = {}
    for it in corpus.items:
        scen = cat_to_scenarios.get(it.category, ())
        if scen:
            p = 1.0 / len(scen)
            i2s_rows[it.id] = _sorted_row({s: p for s in scen}, table_k)

    if not corpus.search_log:
        raise EmptyLog("cannot estimate query edges from an empty search log")
    i2q = estimate_i2q(corpus.search_log, table_k=max(table_k, corpus.n_queries))

    s2q_rows = {}
    for s in range(corpus.n_scenarios):
        mem = members[s]
        if not mem:
            continue
        weight = 1.0 / len(mem)
        mix: dict[int, float] = {}
        for item in sorted(mem):
            for q, p in i2q.rows.get(item, ()):
                mix[q] = mix.get(q, 0.0) + weight * p
        if mix:
            s2q_rows[s] = _sorted_row(mix, table_k)

    count_c: dict[int, int] = {}
    count_qc: dict[int, dict[int, int]] = {}
    for rec in corpus.search_log:
        for item in rec.retrieved_items:
            c = corpus.items[item].category
            count_c[c] = count_c.get(c, 0) + 1
            per_q = count_qc.setdefault(c, {})
            per_q[rec.query] = per_q.get(rec.query, 0) + 1
    c2q_rows = {}
    for c, per_q in count_qc.items():
        denom = count_c[c]
        c2q_rows[c] = _sorted_row({q: n / denom for q, n in per_q.items()}, table_k)

    return {
        "I2S": CondProbTable(edge_kind="I2S", rows=i2s_rows),
        "S2Q": CondProbTable(edge_kind="S2Q", rows=s2q_rows),
        "I2C": CondProbTable(edge_kind="I2C", rows=i2c_rows),
        "C2Q": CondProbTable(edge_kind="C2Q", rows=c2q_rows),
    }


def estimate_all_tables(corpus: Corpus,
                        scenario_categories: Mapping[int, Sequence[int]] | None,
                        table_k: int = TABLE_K_DEFAULT) -> dict[str, CondProbTable]:
    tables = {"I2Q": estimate_i2q(corpus.search_log, table_k)}
    tables.update(estimate_aux_tables(corpus, scenario_categories, table_k))
    return tables


# ---------------------------------------------------------------------------
# index building
# ---------------------------------------------------------------------------

PATH_REQUIREMENTS = {
    "U2I2Q": ("I2Q",),
    "U2I2S2Q": ("I2S", "S2Q"),
    "U2I2C2Q": ("I2C", "C2Q"),
}


def build_index(path_type: str, tables: Mapping[str, CondProbTable],
                index_k: int = INDEX_K_DEFAULT) -> MetaPathIndex:
    """Top-k queries per item along one path type. Two-hop scores take the
    max over intermediate nodes of the edge-probability product, so every
    stored entry remains the weight of one concrete path."""
    if path_type not in PATH_TYPES:
        raise MetapathError(f"unknown path type {path_type!r}")
    for kind in PATH_REQUIREMENTS[path_type]:
        if kind not in tables:
            raise MissingTable(kind)

    rows: dict[int, tuple[tuple[int, float], ...]] = {}
    if path_type == "U2I2Q":
        for item, pairs in tables["I2Q"].rows.items():
            rows[item] = tuple(pairs[:index_k])
    else:
        first, second = (("I2S", "S2Q") if path_type == "U2I2S2Q" else ("I2C", "C2Q"))
        hop2 = tables[second].rows
        for item, mids in tables[first].rows.items():
            best: dict[int, float] = {}
            for mid, p1 in mids:
                for q, p2 in hop2.get(mid, ()):
                    score = p1 * p2
                    if score > best.get(q, 0.0):
                        best[q] = score
            if best:
                rows[item] = _sorted_row(best, index_k)
    return MetaPathIndex(path_type=path_type, index_k=index_k, rows=rows)


def build_all_indexes(tables: Mapping[str, CondProbTable],
                      index_k: int = INDEX_K_DEFAULT) -> dict[str, MetaPathIndex]:
    return {p: build_index(p, tables, index_k) for p in PATH_TYPES}


# ---------------------------------------------------------------------------
# candidate generation
# ---------------------------------------------------------------------------

def accumulate_path_scores(recent_items: Sequence[int],
                           index: MetaPathIndex) -> dict[int, float]:
    """MetaScore per query: sum the indexed path score over the user's
    distinct recent items (first-seen order)."""
    seen = []
    seen_set = set()
    for item in recent_items:
        if item not in seen_set:
            seen.append(item)
            seen_set.add(item)
    scores: dict[int, float] = {}
    for item in seen:
        for q, s in index.rows.get(item, ()):
            scores[q] = scores.get(q, 0.0) + s
    return scores


def generate_candidates(recent_items: Sequence[int],
                        indexes: Mapping[str, MetaPathIndex],
                        per_path_cap: int = PER_PATH_CAP_DEFAULT,
                        total_cap: int = TOTAL_CAP_DEFAULT,
                        user: int | None = None) -> CandidateSet:
    """Merge the per-path top lists into one capped candidate set."""
    for p in PATH_TYPES:
        if p not in indexes:
            raise MissingTable(p)
    per_path: list[list[tuple[int, float]]] = []
    for p in PATH_TYPES:
        scores = accumulate_path_scores(recent_items, indexes[p])
        top = sorted(scores.items(), key=lambda qs: (-qs[1], qs[0]))[:per_path_cap]
        per_path.append(top)

    merged: dict[int, list[float]] = {}
    for j, top in enumerate(per_path):
        for q, s in top:
            merged.setdefault(q, [0.0, 0.0, 0.0])[j] = s

    entries = []
    for q, (s1, s2, s3) in merged.items():
        feats = CandidateFeatures(
            type1=int(s1 > 0.0), score1=s1,
            type2=int(s2 > 0.0), score2=s2,
            type3=int(s3 > 0.0), score3=s3,
        )
        entries.append((q, feats))
    entries.sort(key=lambda qf: (-qf[1].total, qf[0]))
    return CandidateSet(entries=tuple(entries[:total_cap]), user=user)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def table_checksum(table: CondProbTable) -> str:
    payload = _canon({"edge_kind": table.edge_kind,
                      "rows": {str(s): [[t, p] for t, p in row]
                               for s, row in sorted(table.rows.items())}})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _row_lines(index: MetaPathIndex) -> list[str]:
    return [_canon({"item": item, "queries": [[q, s] for q, s in index.rows[item]]})
            for item in sorted(index.rows)]


def save_index(index: MetaPathIndex, source_tables: Mapping[str, CondProbTable],
               path) -> None:
    """JSON-lines snapshot: a header line carrying path type, k, source-table
    checksums and a body checksum, then one line per item row."""
    body = _row_lines(index)
    body_blob = "\n".join(body).encode("utf-8")
    header = _canon({
        "kind": "metapath_index",
        "path_type": index.path_type,
        "index_k": index.index_k,
        "source_checksums": {k: table_checksum(source_tables[k])
                             for k in PATH_REQUIREMENTS[index.path_type]},
        "rows": len(body),
        "body_checksum": hashlib.sha256(body_blob).hexdigest(),
    })
    Path(path).write_text(header + "\n" + "\n".join(body) + ("\n" if body else ""),
                          encoding="utf-8")


def load_index(path, source_tables: Mapping[str, CondProbTable] | None = None
               ) -> MetaPathIndex:
    """Load and verify a snapshot. The body checksum is always verified;
    source-table checksums are verified when current tables are supplied."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise SnapshotError(f"{path}: empty snapshot")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SnapshotError(f"{path}: bad header: {e.msg}") from None
    if header.get("kind") != "metapath_index":
        raise SnapshotError(f"{path}: not an index snapshot")
    path_type = header.get("path_type")
    if path_type not in PATH_TYPES:
        raise SnapshotError(f"{path}: unknown path type {path_type!r}")
    body = lines[1:]
    if len(body) != header.get("rows"):
        raise SnapshotError(f"{path}: row count mismatch "
                            f"(header {header.get('rows')}, body {len(body)})")
    blob = "\n".join(body).encode("utf-8")
    if hashlib.sha256(blob).hexdigest() != header.get("body_checksum"):
        raise SnapshotError(f"{path}: body checksum mismatch")
    if source_tables is not None:
        for kind, expected in header.get("source_checksums", {}).items():
            if kind not in source_tables:
                raise MissingTable(kind)
            actual = table_checksum(source_tables[kind])
            if actual != expected:
                raise SnapshotError(f"{path}: source table {kind} changed "
                                    f"since the index was built")
    rows = {}
    for ln, raw in enumerate(body, start=2):
        try:
            obj = json.loads(raw)
            rows[int(obj["item"])] = tuple((int(q), float(s)) for q, s in obj["queries"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise SnapshotError(f"{path}:{ln}: bad row: {e}") from None
    return MetaPathIndex(path_type=path_type, index_k=int(header["index_k"]), rows=rows)
