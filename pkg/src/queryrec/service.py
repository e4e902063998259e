"""HTTP service for the single-round suggestion loop.

Record behavior events, suggest up to four queries (candidate generation then
ranking), accept click/ignore feedback as labeled instances, and recommend
items for the clicked query. Sessions are in-memory; the feedback instance
log is JSON-lines in the same format the ingestion pipeline reads back.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .corpus import (HISTORY_CAP, BehaviorEvent, Corpus, Instance,
                     context_from_timestamp)
from .metapath import MetaPathIndex, generate_candidates
from .ranker import RankingModel, recent_items_of
from .retrieval import RetrievalConfig, retrieve_items

SUGGEST_COUNT = 4
DEFAULT_RECOMMEND_K = 10


@dataclass
class SessionState:
    """Per-user loop state: a bounded recent-event buffer plus the most
    recent (and only redeemable) suggestion."""

    user: int
    events: list[BehaviorEvent] = field(default_factory=list)
    last_suggestion: dict | None = None

    def add_event(self, event: BehaviorEvent) -> bool:
        """Insert keeping timestamp order and the buffer bound; exact
        duplicates are dropped. Returns whether the buffer changed."""
        if event in self.events:
            return False
        self.events.append(event)
        self.events.sort(key=lambda e: e.timestamp)
        if len(self.events) > HISTORY_CAP:
            del self.events[:len(self.events) - HISTORY_CAP]
        return True


def token_text(tokens) -> str:
    """Display form of a token-id sequence (the corpus carries no string
    vocabulary)."""
    return " ".join(f"w{t}" for t in tokens)


class LoopService:
    """Request-handler core behind the FastAPI routes; one mutex serializes
    session mutation (desk-scale traffic, immutable model/index snapshots)."""

    def __init__(self, corpus: Corpus,
                 indexes: dict[str, MetaPathIndex] | None = None,
                 model: RankingModel | None = None,
                 instance_log: Path | str | None = None,
                 retrieval_config: RetrievalConfig = RetrievalConfig()):
        self.corpus = corpus
        self.indexes = indexes
        self.model = model
        self.instance_log = Path(instance_log) if instance_log else None
        self.retrieval_config = retrieval_config
        self.sessions: dict[int, SessionState] = {}
        self.lock = threading.Lock()
        counts: dict[int, int] = {}
        for rec in corpus.search_log:
            counts[rec.query] = counts.get(rec.query, 0) + 1
        total = max(sum(counts.values()), 1)
        ranked = sorted(counts.items(), key=lambda qc: (-qc[1], qc[0]))
        self.popular_queries = [(q, c / total) for q, c in ranked]

    def session(self, user: int) -> SessionState:
        state = self.sessions.get(user)
        if state is None:
            state = self.sessions[user] = SessionState(user=user)
        return state

    def valid_user(self, user: int) -> bool:
        return 0 <= user < self.corpus.n_users

    # -- handlers (status code, payload) ------------------------------------

    def post_event(self, obj: dict) -> tuple[int, dict | None]:
        try:
            user = int(obj["user"])
            item = int(obj["item"])
            action = int(obj["action"])
            timestamp = int(obj["timestamp"])
        except (KeyError, TypeError, ValueError):
            return 400, {"error": "event needs integer user/item/action/timestamp"}
        if not 1 <= action <= 4:
            return 400, {"error": f"action {action} not in 1..4"}
        if not self.valid_user(user):
            return 404, {"error": f"unknown user {user}"}
        if not 0 <= item < self.corpus.n_items:
            return 404, {"error": f"unknown item {item}"}
        event = BehaviorEvent(user=user, item=item, action=action,
                              timestamp=timestamp)
        with self.lock:
            self.session(user).add_event(event)
        return 204, None

    def get_suggest(self, user: int) -> tuple[int, dict | None]:
        if not self.valid_user(user):
            return 404, {"error": f"unknown user {user}"}
        if self.model is None or self.indexes is None:
            return 409, {"error": "model or indexes not loaded"}
        with self.lock:
            events = tuple(self.session(user).events)
        decision_time = (events[-1].timestamp + 1) if events else 1
        context = context_from_timestamp(decision_time)
        candidates = generate_candidates(recent_items_of(events), self.indexes,
                                         user=user)
        fallback = not candidates.entries
        if fallback:
            ranked = self.popular_queries[:SUGGEST_COUNT]
        else:
            ranked = self.model.rank_candidates(user, events, decision_time,
                                                context, candidates,
                                                top_n=SUGGEST_COUNT)
        shown = [q for q, _ in ranked]
        # deterministic on frozen session state: repeating the request with no
        # intervening events repeats the whole response, id included
        digest = hashlib.sha1(
            f"{user}|{decision_time}|{','.join(map(str, shown))}".encode()
        ).hexdigest()[:10]
        suggestion_id = f"u{user}-{digest}"
        with self.lock:
            self.session(user).last_suggestion = {
                "id": suggestion_id, "shown": shown,
                "decision_time": decision_time, "context": context,
                "events": events,
            }
        return 200, {
            "suggestion_id": suggestion_id,
            "fallback": fallback,
            "queries": [{"query_id": q,
                         "text": token_text(self.corpus.queries[q].text_tokens),
                         "score": s} for q, s in ranked],
        }

    def post_feedback(self, obj: dict) -> tuple[int, dict | None]:
        try:
            user = int(obj["user"])
            suggestion_id = str(obj["suggestion_id"])
        except (KeyError, TypeError, ValueError):
            return 400, {"error": "feedback needs user and suggestion_id"}
        clicked = obj.get("clicked_query")
        ignored = bool(obj.get("ignored", False))
        if (clicked is None) == (not ignored):
            return 400, {"error": "exactly one of clicked_query / ignored:true"}
        if not self.valid_user(user):
            return 404, {"error": f"unknown user {user}"}
        with self.lock:
            state = self.session(user)
            pending = state.last_suggestion
            if pending is None or pending["id"] != suggestion_id:
                return 404, {"error": f"stale suggestion_id {suggestion_id}"}
            if clicked is not None:
                clicked = int(clicked)
                if clicked not in pending["shown"]:
                    return 400, {"error": f"query {clicked} was not shown"}
            state.last_suggestion = None  # single round: one redemption
        instances = [
            Instance(user=user, query=q,
                     label=1 if (clicked is not None and q == clicked) else 0,
                     context=pending["context"],
                     decision_time=pending["decision_time"])
            for q in pending["shown"]
        ]
        if self.instance_log is not None and instances:
            lines = [json.dumps({
                "uid": i.user, "qid": i.query, "label": i.label,
                "context": i.context.to_json_obj(),
                "decision_time": i.decision_time,
            }, sort_keys=True, separators=(",", ":")) for i in instances]
            with self.lock:
                with self.instance_log.open("a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")
        return 204, None

    def get_recommend(self, user: int, query: int, k: int
                      ) -> tuple[int, dict | None]:
        if k < 1:
            return 400, {"error": f"k must be >= 1, got {k}"}
        if not self.valid_user(user):
            return 404, {"error": f"unknown user {user}"}
        if not 0 <= query < self.corpus.n_queries:
            return 404, {"error": f"unknown query {query}"}
        with self.lock:
            events = tuple(self.session(user).events)
        ranked = retrieve_items(query, events, self.corpus, k,
                                config=self.retrieval_config)
        return 200, {
            "query_id": query,
            "items": [{"item_id": i,
                       "title": token_text(self.corpus.items[i].title_tokens),
                       "category": self.corpus.items[i].category,
                       "score": s} for i, s in ranked],
        }

    def get_catalog(self, limit: int) -> dict:
        items = self.corpus.items[:max(limit, 0)]
        return {"items": [{"item_id": it.id,
                           "title": token_text(it.title_tokens),
                           "category": it.category} for it in items],
                "n_users": self.corpus.n_users}


def create_app(corpus: Corpus, indexes: dict[str, MetaPathIndex] | None = None,
               model: RankingModel | None = None,
               instance_log: Path | str | None = None,
               retrieval_config: RetrievalConfig = RetrievalConfig(),
               static_dir: Path | str | None = None) -> FastAPI:
    core = LoopService(corpus, indexes=indexes, model=model,
                       instance_log=instance_log,
                       retrieval_config=retrieval_config)
    app = FastAPI(title="query suggestion loop", docs_url=None, redoc_url=None)
    app.state.core = core

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        print(json.dumps({
            "method": request.method, "path": request.url.path,
            "status": response.status_code,
            "ms": round((time.perf_counter() - start) * 1000, 2),
        }), flush=True)
        return response

    def reply(status: int, payload: dict | None):
        if payload is None:
            return Response(status_code=status)
        return JSONResponse(payload, status_code=status)

    async def parse_body(request: Request) -> dict | None:
        try:
            obj = await request.json()
        except json.JSONDecodeError:
            return None
        return obj if isinstance(obj, dict) else None

    @app.post("/events")
    async def events(request: Request):
        obj = await parse_body(request)
        if obj is None:
            return reply(400, {"error": "body must be a JSON object"})
        return reply(*core.post_event(obj))

    @app.get("/suggest")
    async def suggest(user: int):
        return reply(*core.get_suggest(user))

    @app.post("/feedback")
    async def feedback(request: Request):
        obj = await parse_body(request)
        if obj is None:
            return reply(400, {"error": "body must be a JSON object"})
        return reply(*core.post_feedback(obj))

    @app.get("/recommend")
    async def recommend(user: int, query: int, k: int = DEFAULT_RECOMMEND_K):
        return reply(*core.get_recommend(user, query, k))

    @app.get("/catalog")
    async def catalog(limit: int = 60):
        return JSONResponse(core.get_catalog(limit))

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app
