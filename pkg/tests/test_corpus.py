"""Data-layer tests: ingestion validation, canonical round-trips, history
assembly, and the split partition property."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from queryrec import corpus as cp
from queryrec.synth import SynthConfig, generate_synthetic


def write_corpus_files(tmp_path, entities, behavior, search):
    (tmp_path / cp.ENTITIES_FILE).write_text(entities, encoding="utf-8")
    (tmp_path / cp.BEHAVIOR_FILE).write_text(behavior, encoding="utf-8")
    (tmp_path / cp.SEARCH_FILE).write_text(search, encoding="utf-8")
    return tmp_path


MINI_ENTITIES = "\n".join([
    '{"kind":"user","id":0}',
    '{"kind":"user","id":1}',
    '{"kind":"category","id":0}',
    '{"kind":"category","id":1}',
    '{"kind":"scenario","id":0}',
    '{"kind":"item","id":0,"title_tokens":[1,2],"category":0}',
    '{"kind":"item","id":1,"title_tokens":[3],"category":1}',
    '{"kind":"query","id":0,"text_tokens":[1],"top_categories":[0,0,1]}',
]) + "\n"

MINI_BEHAVIOR = "0\t0\t1\t1000\n0\t1\t2\t2000\n1\t0\t4\t1500\n"
MINI_SEARCH = "0\t0,1\n0\t1\n"


class TestIngest:
    def test_valid_files_round_to_counts(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES, MINI_BEHAVIOR, MINI_SEARCH)
        c = cp.ingest_dir(tmp_path)
        assert c.n_users == 2
        assert c.n_items == 2
        assert c.n_queries == 1
        assert len(c.events) == 3
        assert len(c.search_log) == 2
        assert c.items[1].category == 1

    def test_bad_action_is_malformed(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES, "0\t0\t7\t1000\n", MINI_SEARCH)
        with pytest.raises(cp.MalformedLine) as exc:
            cp.ingest_dir(tmp_path)
        assert exc.value.line_no == 1

    def test_unknown_item_in_search_log(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES, MINI_BEHAVIOR, "0\t0,5\n")
        with pytest.raises(cp.UnknownId) as exc:
            cp.ingest_dir(tmp_path)
        assert exc.value.kind == "item"
        assert exc.value.id == 5

    def test_unknown_user_in_behavior_log(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES, "9\t0\t1\t1000\n", MINI_SEARCH)
        with pytest.raises(cp.UnknownId):
            cp.ingest_dir(tmp_path)

    def test_empty_file_rejected(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES, "", MINI_SEARCH)
        with pytest.raises(cp.EmptyFile):
            cp.ingest_dir(tmp_path)

    def test_duplicate_item_in_search_record(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES, MINI_BEHAVIOR, "0\t1,1\n")
        with pytest.raises(cp.MalformedLine):
            cp.ingest_dir(tmp_path)

    def test_non_dense_ids_rejected(self, tmp_path):
        ents = MINI_ENTITIES.replace('{"kind":"user","id":1}', '{"kind":"user","id":5}')
        write_corpus_files(tmp_path, ents, MINI_BEHAVIOR, MINI_SEARCH)
        with pytest.raises(cp.MalformedLine):
            cp.ingest_dir(tmp_path)

    def test_garbage_json_line_reports_line_number(self, tmp_path):
        write_corpus_files(tmp_path, MINI_ENTITIES + "not json\n",
                           MINI_BEHAVIOR, MINI_SEARCH)
        with pytest.raises(cp.MalformedLine) as exc:
            cp.ingest_dir(tmp_path)
        assert exc.value.line_no == 9

    def test_query_without_categories_loads_as_unfilled(self, tmp_path):
        ents = MINI_ENTITIES.replace(',"top_categories":[0,0,1]', "")
        write_corpus_files(tmp_path, ents, MINI_BEHAVIOR, MINI_SEARCH)
        c = cp.ingest_dir(tmp_path)
        assert c.queries[0].top_categories is None


class TestRoundTrip:
    def test_synthetic_corpus_serializes_byte_stably(self, tmp_path):
        c, _ = generate_synthetic(SynthConfig(n_users=20, n_items=40, n_queries=25,
                                              impressions_per_user=2), seed=3)
        first = tmp_path / "first"
        second = tmp_path / "second"
        cp.save_corpus(c, first)
        reloaded = cp.ingest_dir(first)
        cp.save_corpus(reloaded, second)
        for name in (cp.ENTITIES_FILE, cp.BEHAVIOR_FILE, cp.SEARCH_FILE):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_instances_round_trip(self, tmp_path):
        c, truth = generate_synthetic(SynthConfig(n_users=10, n_items=30, n_queries=20,
                                                  impressions_per_user=2), seed=4)
        path = tmp_path / "inst.jsonl"
        cp.save_instances(truth.instances, path)
        loaded = cp.load_instances(path, c)
        assert len(loaded) == len(truth.instances)
        for a, b in zip(loaded, truth.instances):
            assert (a.user, a.query, a.label, a.decision_time) == \
                   (b.user, b.query, b.label, b.decision_time)
            assert a.context == b.context
            assert a.history == b.history

    def test_knowledge_round_trip(self, tmp_path):
        mapping = {0: (0, 2), 1: (1,)}
        path = tmp_path / cp.KNOWLEDGE_FILE
        cp.save_knowledge(mapping, path)
        assert cp.load_knowledge(path) == {0: (0, 2), 1: (1,)}


class TestHistoryAssembly:
    def make_corpus(self, stamps):
        events = tuple(cp.BehaviorEvent(user=0, item=0, action=1, timestamp=t)
                       for t in stamps)
        item = cp.Item(id=0, title_tokens=(0,), category=0)
        query = cp.Query(id=0, text_tokens=(0,), top_categories=(0, 0, 0))
        return cp.Corpus(n_users=1, items=(item,), queries=(query,), n_categories=1,
                         n_scenarios=1, events=events, search_log=())

    def test_strictly_before_decision_time(self):
        c = self.make_corpus([100, 200, 300])
        hist = c.history_before(0, 200)
        assert [e.timestamp for e in hist] == [100]

    def test_cap_keeps_most_recent_oldest_first(self):
        c = self.make_corpus(range(1, 301))
        hist = c.history_before(0, 1000)
        assert len(hist) == cp.HISTORY_CAP
        assert hist[0].timestamp == 201
        assert hist[-1].timestamp == 300
        assert list(hist) == sorted(hist, key=lambda e: e.timestamp)

    def test_unknown_user_rejected(self):
        c = self.make_corpus([100])
        with pytest.raises(cp.UnknownId):
            c.history_before(3, 200)

    def test_instance_validation(self):
        ctx = cp.ContextFeatures(season="winter", special_day=False, hour_of_day=3)
        ev = cp.BehaviorEvent(user=0, item=0, action=1, timestamp=500)
        with pytest.raises(ValueError):
            cp.Instance(user=0, query=0, label=2, context=ctx, decision_time=600)
        with pytest.raises(ValueError):
            cp.Instance(user=0, query=0, label=1, context=ctx, decision_time=400,
                        history=(ev,))


class TestSplit:
    def make_instances(self, n):
        ctx = cp.ContextFeatures(season="summer", special_day=False, hour_of_day=12)
        return [cp.Instance(user=i, query=0, label=i % 2, context=ctx,
                            decision_time=1000 + i) for i in range(n)]

    def test_eighty_twenty(self):
        train, test = cp.split_instances(self.make_instances(10), 0.8, seed=0)
        assert len(train) == 8
        assert len(test) == 2

    def test_deterministic(self):
        insts = self.make_instances(50)
        a = cp.split_instances(insts, 0.7, seed=9)
        b = cp.split_instances(insts, 0.7, seed=9)
        assert a == b

    def test_bad_fraction_rejected(self):
        with pytest.raises(cp.InvalidConfig):
            cp.split_instances(self.make_instances(5), 1.0, seed=0)
        with pytest.raises(cp.EmptyInput):
            cp.split_instances([], 0.5, seed=0)

    @given(st.integers(1, 200), st.floats(0.05, 0.95), st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_is_a_partition(self, n, frac, seed):
        insts = self.make_instances(n)
        try:
            train, test = cp.split_instances(insts, frac, seed)
        except cp.InvalidConfig:
            return
        assert len(train) == int(n * frac)
        assert len(train) + len(test) == n
        key = lambda i: (i.user, i.decision_time)
        assert sorted(map(key, train + test)) == sorted(map(key, insts))
        assert set(map(key, train)).isdisjoint(set(map(key, test)))


def test_context_from_timestamp_is_deterministic_and_valid():
    for ts in (1_700_000_000, 1_700_000_000 + 86400 * 123, 12345):
        a = cp.context_from_timestamp(ts)
        b = cp.context_from_timestamp(ts)
        assert a == b
        assert a.season in cp.SEASONS
        assert 0 <= a.hour_of_day <= 23
