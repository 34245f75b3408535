"""The interval loop: ordering, bookkeeping invariants and cumulative scoring."""

import dataclasses

import numpy as np
import pytest

from decoygame import adversary as adv
from decoygame.domain import (
    AdversaryMode,
    ChallengerMode,
    GameConfig,
    IntervalLedger,
    Origin,
    Post,
)
from decoygame.engine import CSV_COLUMNS, IntervalRecord, _make_adversary, evaluate_cumulative, run_game

ORACLE = GameConfig(T=4, challenger_mode=ChallengerMode.ORACLE)


def user(i, label, t=1):
    origin = Origin.USER_DAMAGING if label else Origin.USER_NONDAMAGING
    return Post(i, np.zeros(2), label, origin, t, t)


def decoy(i, t=2):
    return Post(i, np.zeros(2), 0, Origin.DECOY, t - 1, t)


def flagger(rate):
    state = _make_adversary(GameConfig(adversary_mode=AdversaryMode.RANDOM, random_prior=0.5))
    state.flag_rate = rate
    return state


@pytest.fixture(scope="module")
def oracle_trace():
    return run_game(ORACLE)


@pytest.fixture(scope="module")
def d2_trace():
    return run_game(dataclasses.replace(ORACLE, challenger_mode=ChallengerMode.D2, monitored_flag=True))


class TestSchema:
    def test_record_fields_follow_csv_columns(self):
        assert tuple(f.name for f in dataclasses.fields(IntervalRecord)) == CSV_COLUMNS
        assert CSV_COLUMNS == (
            "run_id", "seed", "scenario", "adversary_mode", "challenger_mode", "k", "interval",
            "tp", "fp", "fn", "tn", "precision", "recall", "f_score", "pool_size", "budget_spent",
            "decoys_injected",
        )

    def test_run_id(self, oracle_trace):
        assert oracle_trace.final.run_id == "PartialOverlap-Adaptive-Oracle-k2-s0"


class TestFrozenTraces:
    """Regression values from fixed small games."""

    def test_oracle(self):
        rows = [(r.tp, r.fp, r.fn, r.tn, r.pool_size, r.budget_spent, r.decoys_injected)
                for r in run_game(dataclasses.replace(ORACLE, T=3)).records]
        assert rows == [(22, 4, 19, 55, 332, 100, 0), (42, 6, 56, 264, 664, 200, 168),
                        (65, 7, 93, 471, 1164, 300, 168)]

    def test_d2(self):
        rows = [(r.tp, r.fp, r.fn, r.tn) for r in
                run_game(dataclasses.replace(ORACLE, T=3, challenger_mode=ChallengerMode.D2)).records]
        assert rows == [(22, 4, 19, 55), (42, 11, 56, 259), (67, 10, 91, 468)]


class TestEvaluate:
    def test_empty_test_set_is_degenerate(self):
        posts = [user(i, i % 2) for i in range(4)]
        ledger = IntervalLedger(t=1, deleted=posts, adversary_train_sample=posts)
        metrics, degenerate = evaluate_cumulative(flagger(1.0), [ledger])
        assert degenerate
        assert metrics.total == 0 and metrics.f_score == 0.0

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_flag_everything_precision(self, k):
        damaging = [user(i, 1, t=2) for i in range(10)]
        decoys = [decoy(100 + i) for i in range(10 * k)]
        ledger = IntervalLedger(t=2, deleted=damaging + decoys, damaging=damaging, decoys_injected=decoys)
        metrics, _ = evaluate_cumulative(flagger(1.0), [ledger])
        assert metrics.precision == pytest.approx(1 / (1 + k))
        assert metrics.recall == 1.0

    def test_flag_nothing_recall(self):
        posts = [user(i, i % 2) for i in range(10)]
        metrics, _ = evaluate_cumulative(flagger(0.0), [IntervalLedger(t=1, deleted=posts)])
        assert metrics.recall == 0.0


class TestGame:
    def test_deterministic(self, oracle_trace):
        again = run_game(ORACLE)
        assert again.records == oracle_trace.records

    def test_user_stream_independent_of_players(self, oracle_trace):
        other = run_game(dataclasses.replace(ORACLE, challenger_mode=ChallengerMode.RANDOM,
                                             adversary_mode=AdversaryMode.STATIC))
        for a, b in zip(oracle_trace.ledgers, other.ledgers):
            users_a = [p for p in a.deleted if p.origin is not Origin.DECOY]
            users_b = [p for p in b.deleted if p.origin is not Origin.DECOY]
            assert [p.id for p in users_a] == [p.id for p in users_b]
            assert all(np.array_equal(x.features, y.features) for x, y in zip(users_a, users_b))

    def test_decoys_are_legal_and_delayed(self, oracle_trace):
        first = oracle_trace.ledgers[0]
        assert first.decoys_injected == []
        for ledger in oracle_trace.ledgers[1:]:
            prev = oracle_trace.ledgers[ledger.t - 2]
            assert len(ledger.decoys_injected) == ORACLE.k * len(prev.damaging)
            for d in ledger.decoys_injected:
                assert d.origin is Origin.DECOY and d.true_label == 0
                assert d.interval_deleted == ledger.t
                assert d.interval_created < ledger.t

    def test_conservation(self, oracle_trace):
        volunteered = {p.id for led in oracle_trace.ledgers for p in led.volunteered_new}
        used = [p.id for led in oracle_trace.ledgers for p in led.decoys_injected]
        residue = {p.id for p in oracle_trace.final_pool}
        assert len(used) == len(set(used))
        assert not set(used) & residue
        assert set(used) | residue == volunteered
        users = {p.id for led in oracle_trace.ledgers for p in led.deleted if p.origin is not Origin.DECOY}
        assert not users & volunteered

    def test_no_training_post_is_scored(self, oracle_trace):
        for t, rec in enumerate(oracle_trace.records, start=1):
            ledgers = oracle_trace.ledgers[:t]
            trained = {p.id for led in ledgers for p in led.adversary_train_sample}
            tested = [p for led in ledgers for p in led.test_posts()]
            assert not trained & {p.id for p in tested}
            assert rec.tp + rec.fp + rec.fn + rec.tn == len(tested)

    def test_adaptive_budget(self, oracle_trace):
        assert [r.budget_spent for r in oracle_trace.records] == [100, 200, 300, 400]

    def test_static_budget_and_freeze(self):
        trace = run_game(GameConfig(T=6, adversary_mode=AdversaryMode.STATIC, B_static=200, p=100, snapshots=True))
        assert trace.final.budget_spent == 200
        assert all(s.same_as(trace.snapshots[1]) for s in trace.snapshots[2:])
        assert not trace.snapshots[0].same_as(trace.snapshots[1])

    def test_static_flat_after_tau(self):
        config = GameConfig(adversary_mode=AdversaryMode.STATIC)
        f = [r.f_score for r in run_game(config).records[config.tau:]]
        assert np.std(f) < 0.05

    def test_random_adversary_flat(self):
        config = GameConfig(adversary_mode=AdversaryMode.RANDOM, random_prior=0.42)
        f = np.array([r.f_score for r in run_game(config).records])
        assert np.std(f) < 0.05
        assert abs(f.mean() - 0.487) < 0.05

    def test_challenger_lowers_adaptive_score(self):
        for seed in (0, 1):
            base = GameConfig(seed=seed)
            none = run_game(base).final.f_score
            oracle = run_game(dataclasses.replace(base, challenger_mode=ChallengerMode.ORACLE)).final.f_score
            assert oracle < none

    def test_no_selection_in_last_interval(self, oracle_trace):
        assert oracle_trace.final.pool_size == len(oracle_trace.final_pool)
        assert oracle_trace.final.pool_size == 500 * 4 - 3 * 168

    def test_monitored_access_under_d2(self, d2_trace):
        assert all(i.queried_decoy_overlap == 0 for i in d2_trace.info)
        assert all(i.countermeasure_hits == 0 for i in d2_trace.info)
        decoys = {p.id for led in d2_trace.ledgers for p in led.decoys_injected}
        assert decoys and not decoys & d2_trace.queried_ids
        assert all(i.queried > 0 for i in d2_trace.info[:-1])

    def test_exhaustion_surfaced(self):
        trace = run_game(GameConfig(T=3, n_volunteered=50, challenger_mode=ChallengerMode.RANDOM))
        assert trace.info[0].pool_exhausted
        assert trace.records[1].decoys_injected == 50

    def test_noisy_labels_still_run(self):
        trace = run_game(GameConfig(T=2, label_noise_eta=0.2))
        assert 0 <= trace.final.f_score <= 1

    def test_higher_dimension(self):
        from decoygame.domain import ScenarioSpec, Scenario

        spec = ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING, d=3, mean0=(0,) * 3, mean1=(0.5,) * 3,
                            mean_a=(0,) * 3, mean_b=(0,) * 3, mean_shared=(0,) * 3)
        trace = run_game(GameConfig(T=2, scenario=spec, challenger_mode=ChallengerMode.D2))
        assert trace.final.decoys_injected == 168

    def test_random_classify_uses_flag_rate(self):
        state = flagger(0.3)
        assert adv.probabilities(state, np.zeros((2, 2))).tolist() == [0.3, 0.3]
