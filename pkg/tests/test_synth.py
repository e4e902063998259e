"""Generator tests: determinism, planted-signal strength (the Bayes scorer
built from the truth must separate labels strongly; zero signal must not),
and the empirical click-rate gap between affinity-matched and mismatched
impressions."""

import numpy as np
import pytest

from queryrec.corpus import ActionType, InvalidConfig
from queryrec.metrics import rank_sum_auc
from queryrec.synth import ACTION_SAMPLE_PROBS, PlantedTruth, SynthConfig, generate_synthetic


SMALL = SynthConfig(n_users=60, n_items=120, n_queries=80, impressions_per_user=4)


class TestDeterminismAndShape:
    def test_same_seed_same_corpus(self):
        c1, t1 = generate_synthetic(SMALL, seed=7)
        c2, t2 = generate_synthetic(SMALL, seed=7)
        assert c1.events == c2.events
        assert c1.search_log == c2.search_log
        assert c1.items == c2.items
        assert c1.queries == c2.queries
        assert [i.label for i in t1.instances] == [i.label for i in t2.instances]

    def test_different_seed_differs(self):
        c1, _ = generate_synthetic(SMALL, seed=7)
        c2, _ = generate_synthetic(SMALL, seed=8)
        assert c1.events != c2.events

    def test_every_category_has_items_and_scenarios_cover_categories(self):
        c, truth = generate_synthetic(SMALL, seed=1)
        cats_with_items = {it.category for it in c.items}
        assert cats_with_items == set(range(c.n_categories))
        covered = sorted(cat for cats in truth.scenario_categories.values() for cat in cats)
        assert covered == list(range(c.n_categories))

    def test_instances_respect_invariants(self):
        _, truth = generate_synthetic(SMALL, seed=2)
        assert len(truth.instances) >= SMALL.n_users * SMALL.impressions_per_user
        for inst in truth.instances[:500]:
            assert inst.label in (0, 1)
            assert all(ev.timestamp < inst.decision_time for ev in inst.history)
            assert len(inst.history) <= 100

    def test_invalid_configs_rejected(self):
        with pytest.raises(InvalidConfig):
            generate_synthetic(SynthConfig(n_users=0), seed=0)
        with pytest.raises(InvalidConfig):
            generate_synthetic(SynthConfig(n_items=3, n_categories=10), seed=0)
        with pytest.raises(InvalidConfig):
            # purchase must outweigh cart
            generate_synthetic(SynthConfig(action_weights=(0.25, 0.5, 0.4, 0.9)), seed=0)
        with pytest.raises(InvalidConfig):
            generate_synthetic(SynthConfig(neg_pos_ratio=0.0), seed=0)


class TestPlantedSignal:
    def test_bayes_scorer_reaches_high_auc_at_full_signal(self):
        """The generative probabilities themselves must rank the sampled
        labels almost perfectly — the ceiling any learned model chases."""
        _, truth = generate_synthetic(SynthConfig(n_users=300, n_items=300,
                                                  n_queries=200,
                                                  impressions_per_user=6), seed=11)
        scores = truth.bayes_scores(truth.instances)
        labels = np.array([i.label for i in truth.instances])
        assert rank_sum_auc(scores, labels) >= 0.9

    def test_zero_signal_probability_is_constant(self):
        _, truth = generate_synthetic(
            SynthConfig(n_users=100, n_items=150, n_queries=100, signal=0.0), seed=5)
        scores = truth.bayes_scores(truth.instances)
        assert np.allclose(scores, scores[0])

    def test_zero_signal_labels_are_uninformative(self):
        """Any scorer, including the Bayes one with the true signal restored,
        sits near 0.5 AUC on labels drawn with signal 0."""
        _, truth = generate_synthetic(
            SynthConfig(n_users=400, n_items=200, n_queries=150, signal=0.0,
                        impressions_per_user=6), seed=6)
        probe = PlantedTruth(
            affinity=truth.affinity, query_home=truth.query_home,
            item_category=truth.item_category,
            scenario_categories=truth.scenario_categories,
            signal=1.0, bias=truth.bias, w_match=truth.w_match,
            w_mass=truth.w_mass, half_life_hours=truth.half_life_hours,
            action_weights=truth.action_weights)
        scores = probe.bayes_scores(truth.instances)
        labels = np.array([i.label for i in truth.instances])
        auc = rank_sum_auc(scores, labels)
        assert 0.45 <= auc <= 0.55, auc

    def test_matched_impressions_click_more(self):
        """Empirical P(click | home category is the user's top affinity)
        exceeds P(click | mismatch) over >= 10^4 labels at full signal."""
        _, truth = generate_synthetic(SynthConfig(n_users=500, n_items=300,
                                                  n_queries=200,
                                                  impressions_per_user=6), seed=12)
        assert len(truth.instances) >= 10_000
        dominant = truth.affinity.argmax(axis=1)
        matched, mismatched = [], []
        for inst in truth.instances:
            side = matched if truth.query_home[inst.query] == dominant[inst.user] \
                else mismatched
            side.append(inst.label)
        assert len(matched) > 100 and len(mismatched) > 100
        assert np.mean(matched) > np.mean(mismatched)

    def test_mass_term_rises_with_action_weight_and_recency(self):
        _, truth = generate_synthetic(SMALL, seed=3)
        q = 0
        home = int(truth.query_home[q])
        item = int(np.nonzero(truth.item_category == home)[0][0])
        t = 1_700_100_000

        def mass(action, age_hours):
            from queryrec.corpus import BehaviorEvent
            ev = BehaviorEvent(user=0, item=item, action=action,
                               timestamp=int(t - age_hours * 3600))
            return truth.mass_term(q, [ev], t)

        assert mass(ActionType.PURCHASE, 10) > mass(ActionType.CART, 10) > \
            mass(ActionType.FAVOR, 10) > mass(ActionType.CLICK, 10)
        assert mass(ActionType.PURCHASE, 1) > mass(ActionType.PURCHASE, 100)

    def test_lex_mass_counts_shared_tokens_with_decay_and_action_weight(self):
        _, truth = generate_synthetic(SMALL, seed=3)
        t = 1_700_100_000
        # a query and an item with at least one shared title token
        q, item = next((q, i) for q in range(len(truth.query_tokens))
                       for i in range(len(truth.item_tokens))
                       if truth.query_tokens[q] & truth.item_tokens[i])
        shared = len(truth.query_tokens[q] & truth.item_tokens[item])

        from queryrec.corpus import BehaviorEvent

        def lex(action, age_hours):
            ev = BehaviorEvent(user=0, item=item, action=action,
                               timestamp=int(t - age_hours * 3600))
            return truth.lex_mass_term(q, [ev], t)

        expect = shared * truth.action_weights[ActionType.PURCHASE] * 0.5 ** (
            10 / truth.half_life_hours)
        assert lex(ActionType.PURCHASE, 10) == pytest.approx(expect)
        assert lex(ActionType.PURCHASE, 1) > lex(ActionType.PURCHASE, 100)
        assert lex(ActionType.PURCHASE, 10) > lex(ActionType.CLICK, 10)
        # disjoint tokens contribute nothing
        far = next(i for i in range(len(truth.item_tokens))
                   if not truth.query_tokens[q] & truth.item_tokens[i])
        ev = BehaviorEvent(user=0, item=far, action=ActionType.PURCHASE,
                           timestamp=t - 3600)
        assert truth.lex_mass_term(q, [ev], t) == 0.0

    def test_lex_weight_shifts_logits_only_when_set(self):
        """w_lex=0 leaves click_logit at the match+mass value; w_lex>0 adds
        exactly the scaled lexical mass on the same drawn corpus."""
        cfg = SynthConfig(**{**SMALL.__dict__, "w_lex": 4.0})
        _, truth = generate_synthetic(cfg, seed=5)
        _, base = generate_synthetic(SMALL, seed=5)
        assert [i.history for i in truth.instances] == \
            [i.history for i in base.instances]  # same draws, labels aside
        inst = next(i for i in truth.instances if i.history)
        got = truth.click_logit(inst.user, inst.query, inst.history,
                                inst.decision_time)
        want = base.click_logit(inst.user, inst.query, inst.history,
                                inst.decision_time) + 4.0 * truth.signal * \
            truth.lex_mass_term(inst.query, inst.history, inst.decision_time)
        assert got == pytest.approx(want)

    def test_negative_lex_weight_rejected(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(w_lex=-0.5).validate()

    def test_max_pool_keeps_only_strongest_matching_event(self):
        """mass_pool="max" reads the single best decayed action; duplicates
        and weaker stale events stop accumulating."""
        cfg = SynthConfig(**{**SMALL.__dict__, "mass_pool": "max"})
        _, mx = generate_synthetic(cfg, seed=6)
        _, sm = generate_synthetic(SMALL, seed=6)
        assert mx.mass_pool == "max" and sm.mass_pool == "sum"
        assert [i.history for i in mx.instances] == \
            [i.history for i in sm.instances]  # pooling consumes no RNG

        from queryrec.corpus import BehaviorEvent

        t = 1_700_100_000
        home = int(mx.query_home[0])
        item = int(np.nonzero(mx.item_category == home)[0][0])
        fresh = BehaviorEvent(user=0, item=item, action=ActionType.PURCHASE,
                              timestamp=t - 2 * 3600)
        stale = BehaviorEvent(user=0, item=item, action=ActionType.CLICK,
                              timestamp=t - 50 * 3600)
        single = mx.mass_term(0, [fresh], t)
        assert mx.mass_term(0, [stale, fresh], t) == pytest.approx(single)
        assert mx.mass_term(0, [fresh, fresh], t) == pytest.approx(single)
        assert sm.mass_term(0, [stale, fresh], t) > single
        assert sm.mass_term(0, [fresh, fresh], t) == pytest.approx(2 * single)

    def test_bad_mass_pool_rejected(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(mass_pool="avg").validate()

    def test_window_kernel_counts_full_weight_inside_cutoff_only(self):
        cfg = SynthConfig(**{**SMALL.__dict__, "decay_kernel": "window",
                             "half_life_hours": 48.0})
        _, truth = generate_synthetic(cfg, seed=6)
        assert truth.decay_kernel == "window"
        assert truth.decay(47.9) == 1.0
        assert truth.decay(48.0) == 1.0   # boundary is inclusive
        assert truth.decay(48.1) == 0.0

        from queryrec.corpus import BehaviorEvent

        t = 1_700_100_000
        home = int(truth.query_home[0])
        item = int(np.nonzero(truth.item_category == home)[0][0])
        inside = BehaviorEvent(user=0, item=item, action=ActionType.PURCHASE,
                               timestamp=t - 10 * 3600)
        outside = BehaviorEvent(user=0, item=item, action=ActionType.PURCHASE,
                                timestamp=t - 100 * 3600)
        w_purchase = truth.action_weights[ActionType.PURCHASE]
        assert truth.mass_term(0, [inside, outside], t) == pytest.approx(w_purchase)

    def test_bad_decay_kernel_rejected(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(decay_kernel="linear").validate()

    def test_neg_pos_ratio_knob(self):
        """Ratio below the natural one trims negatives down to the target."""
        cfg = SynthConfig(n_users=200, n_items=150, n_queries=100,
                          impressions_per_user=5)
        _, natural = generate_synthetic(cfg, seed=4)
        nat_labels = np.array([i.label for i in natural.instances])
        nat_ratio = (nat_labels == 0).sum() / nat_labels.sum()

        target = nat_ratio / 2
        _, trimmed = generate_synthetic(
            SynthConfig(**{**cfg.__dict__, "neg_pos_ratio": float(target)}), seed=4)
        labels = np.array([i.label for i in trimmed.instances])
        n_pos, n_neg = labels.sum(), (labels == 0).sum()
        assert abs(n_neg - round(target * n_pos)) <= 1
        # positives are never dropped
        assert n_pos == nat_labels.sum()


def test_action_sampling_probabilities_sum_to_one():
    assert abs(sum(ACTION_SAMPLE_PROBS) - 1.0) < 1e-12
