"""Service tests: endpoint contracts, session bounds, feedback instance
logging, and determinism of the suggest response on frozen state."""

import json

import pytest
from fastapi.testclient import TestClient

from queryrec import ranker as R
from queryrec.corpus import HISTORY_CAP, load_instances
from queryrec.metapath import build_all_indexes, estimate_all_tables
from queryrec.retrieval import retrieve_items
from queryrec.service import create_app, token_text
from queryrec.synth import SynthConfig, generate_synthetic

MODEL_CONFIG = R.ModelConfig(word_dim=6, category_dim=4, user_dim=4, value_dim=3,
                             hour_dim=3, x_dim=10, hidden=6, head_hidden=(12, 6))


@pytest.fixture(scope="module")
def world():
    cfg = SynthConfig(n_users=30, n_items=50, n_queries=30, n_categories=5,
                      n_scenarios=2, impressions_per_user=2)
    corpus, truth = generate_synthetic(cfg, seed=11)
    tables = estimate_all_tables(corpus, truth.scenario_categories)
    indexes = build_all_indexes(tables)
    model = R.RankingModel(MODEL_CONFIG, corpus, seed=0)
    return corpus, indexes, model


@pytest.fixture()
def client(world, tmp_path):
    corpus, indexes, model = world
    app = create_app(corpus, indexes=indexes, model=model,
                     instance_log=tmp_path / "instances.jsonl")
    with TestClient(app) as c:
        c.log_path = tmp_path / "instances.jsonl"
        yield c


def post_event(client, user=0, item=0, action=1, timestamp=1000, **extra):
    body = {"user": user, "item": item, "action": action,
            "timestamp": timestamp, **extra}
    return client.post("/events", json=body)


def warm_user(client, world, user=0, n=5):
    corpus, _, _ = world
    # items the search log actually retrieves, so candidates exist
    covered = sorted({i for rec in corpus.search_log for i in rec.retrieved_items})
    for k in range(n):
        r = post_event(client, user=user, item=covered[k % len(covered)],
                       action=1 + k % 4, timestamp=1000 + 60 * k)
        assert r.status_code == 204
    return covered[:n]


# -- /events ------------------------------------------------------------------


def test_event_appends_and_is_idempotent(client):
    app_core = client.app.state.core
    assert post_event(client).status_code == 204
    assert len(app_core.sessions[0].events) == 1
    assert post_event(client).status_code == 204  # exact duplicate
    assert len(app_core.sessions[0].events) == 1
    assert post_event(client, timestamp=1001).status_code == 204
    assert len(app_core.sessions[0].events) == 2


def test_event_validation(client):
    assert post_event(client, action=9).status_code == 400
    assert post_event(client, action=0).status_code == 400
    assert post_event(client, user=999).status_code == 404
    assert post_event(client, item=999).status_code == 404
    assert client.post("/events", json={"user": 0}).status_code == 400
    assert client.post("/events", json=[1, 2]).status_code == 400
    r = client.post("/events", content=b"not json",
                    headers={"content-type": "application/json"})
    assert r.status_code == 400


def test_ring_buffer_evicts_oldest(client):
    core = client.app.state.core
    for k in range(HISTORY_CAP + 1):
        assert post_event(client, item=k % 50, timestamp=2000 + k).status_code == 204
    events = core.sessions[0].events
    assert len(events) == HISTORY_CAP
    assert events[0].timestamp == 2001  # the 2000 event fell off
    assert [e.timestamp for e in events] == sorted(e.timestamp for e in events)


# -- /suggest -----------------------------------------------------------------


def test_suggest_unknown_user_and_unloaded_model(world, tmp_path):
    corpus, indexes, model = world
    with TestClient(create_app(corpus)) as bare:
        assert bare.get("/suggest", params={"user": 0}).status_code == 409
    with TestClient(create_app(corpus, indexes=indexes, model=model)) as ok:
        assert ok.get("/suggest", params={"user": 10**6}).status_code == 404


def test_suggest_cold_user_falls_back_to_popular(client, world):
    corpus, _, _ = world
    r = client.get("/suggest", params={"user": 3})
    assert r.status_code == 200
    body = r.json()
    assert body["fallback"] is True
    assert 1 <= len(body["queries"]) <= 4
    scores = [q["score"] for q in body["queries"]]
    assert scores == sorted(scores, reverse=True)
    assert body["queries"][0]["text"] == token_text(
        corpus.queries[body["queries"][0]["query_id"]].text_tokens)


def test_suggest_with_history_ranks_four(client, world):
    warm_user(client, world, user=0)
    r = client.get("/suggest", params={"user": 0})
    assert r.status_code == 200
    body = r.json()
    assert body["fallback"] is False
    assert len(body["queries"]) == 4
    scores = [q["score"] for q in body["queries"]]
    assert scores == sorted(scores, reverse=True)
    qids = [q["query_id"] for q in body["queries"]]
    assert len(set(qids)) == 4


def test_suggest_is_deterministic_on_frozen_state(client, world):
    warm_user(client, world, user=1)
    a = client.get("/suggest", params={"user": 1})
    b = client.get("/suggest", params={"user": 1})
    assert a.status_code == b.status_code == 200
    assert a.json() == b.json()
    # an intervening event changes the decision point
    post_event(client, user=1, item=7, timestamp=99999)
    c = client.get("/suggest", params={"user": 1})
    assert c.json()["suggestion_id"] != a.json()["suggestion_id"]


# -- /feedback ----------------------------------------------------------------


def test_click_feedback_logs_one_positive_three_negatives(client, world):
    corpus, _, _ = world
    warm_user(client, world, user=2)
    body = client.get("/suggest", params={"user": 2}).json()
    shown = [q["query_id"] for q in body["queries"]]
    clicked = shown[1]
    r = client.post("/feedback", json={"user": 2,
                                       "suggestion_id": body["suggestion_id"],
                                       "clicked_query": clicked})
    assert r.status_code == 204
    logged = load_instances(client.log_path, corpus)
    assert len(logged) == 4
    assert sorted(i.query for i in logged) == sorted(shown)
    assert {i.query: i.label for i in logged}[clicked] == 1
    assert sum(i.label for i in logged) == 1
    assert all(i.user == 2 for i in logged)


def test_ignore_feedback_logs_all_negatives(client, world):
    corpus, _, _ = world
    warm_user(client, world, user=4)
    body = client.get("/suggest", params={"user": 4}).json()
    r = client.post("/feedback", json={"user": 4,
                                       "suggestion_id": body["suggestion_id"],
                                       "ignored": True})
    assert r.status_code == 204
    logged = load_instances(client.log_path, corpus)
    assert len(logged) == 4
    assert all(i.label == 0 for i in logged)


def test_feedback_staleness_and_validation(client, world):
    warm_user(client, world, user=5)
    body = client.get("/suggest", params={"user": 5}).json()
    sid = body["suggestion_id"]
    shown = [q["query_id"] for q in body["queries"]]
    not_shown = next(q for q in range(1000) if q not in shown)

    assert client.post("/feedback", json={
        "user": 5, "suggestion_id": "bogus", "ignored": True}).status_code == 404
    assert client.post("/feedback", json={
        "user": 5, "suggestion_id": sid,
        "clicked_query": not_shown}).status_code == 400
    assert client.post("/feedback", json={
        "user": 5, "suggestion_id": sid}).status_code == 400
    assert client.post("/feedback", json={
        "user": 5, "suggestion_id": sid, "clicked_query": shown[0],
        "ignored": True}).status_code == 400
    assert not client.log_path.exists()  # nothing logged by rejected calls

    assert client.post("/feedback", json={
        "user": 5, "suggestion_id": sid,
        "clicked_query": shown[0]}).status_code == 204
    # single redemption: the same id is now stale
    assert client.post("/feedback", json={
        "user": 5, "suggestion_id": sid, "ignored": True}).status_code == 404
    assert client.post("/feedback", json={
        "user": 10**6, "suggestion_id": sid, "ignored": True}).status_code == 404


# -- /recommend ---------------------------------------------------------------


def test_recommend_delegates_to_retrieval(client, world):
    corpus, _, _ = world
    warm_user(client, world, user=6)
    core = client.app.state.core
    history = tuple(core.sessions[6].events)
    r = client.get("/recommend", params={"user": 6, "query": 2, "k": 7})
    assert r.status_code == 200
    body = r.json()
    direct = retrieve_items(2, history, corpus, 7)
    assert [(it["item_id"], it["score"]) for it in body["items"]] == direct
    assert body["items"][0]["title"] == token_text(
        corpus.items[direct[0][0]].title_tokens)


def test_recommend_empty_history_matches_plain_retrieval(client, world):
    corpus, _, _ = world
    r = client.get("/recommend", params={"user": 8, "query": 1, "k": 5})
    assert r.status_code == 200
    assert [(it["item_id"], it["score"]) for it in r.json()["items"]] == \
        retrieve_items(1, (), corpus, 5)


def test_recommend_validation(client):
    assert client.get("/recommend",
                      params={"user": 0, "query": 0, "k": 0}).status_code == 400
    assert client.get("/recommend",
                      params={"user": 0, "query": 10**6}).status_code == 404
    assert client.get("/recommend",
                      params={"user": 10**6, "query": 0}).status_code == 404


# -- cross-cutting --------------------------------------------------------------


def test_instance_log_replays_through_ingestion(client, world):
    corpus, _, _ = world
    for user in (12, 13):
        warm_user(client, world, user=user)
        body = client.get("/suggest", params={"user": user}).json()
        client.post("/feedback", json={
            "user": user, "suggestion_id": body["suggestion_id"],
            "clicked_query": body["queries"][0]["query_id"]})
    replayed = load_instances(client.log_path, corpus)
    assert len(replayed) == 8
    assert all(0 <= i.query < corpus.n_queries for i in replayed)
    assert all(i.history == () or i.history[-1].timestamp < i.decision_time
               for i in replayed)


def test_requests_are_logged_to_stdout(client, capfd):
    client.get("/catalog", params={"limit": 3})
    captured = capfd.readouterr().out
    line = next(ln for ln in captured.splitlines() if '"path": "/catalog"' in ln)
    record = json.loads(line)
    assert record["method"] == "GET"
    assert record["status"] == 200
    assert record["ms"] >= 0


def test_catalog_lists_items(client, world):
    corpus, _, _ = world
    body = client.get("/catalog", params={"limit": 5}).json()
    assert len(body["items"]) == 5
    assert body["items"][0]["title"] == token_text(corpus.items[0].title_tokens)
    assert body["n_users"] == corpus.n_users
