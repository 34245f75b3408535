"""The interval loop tying users, adversary and challenger together."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

from . import adversary as adv
from . import challenger as ch
from .datagen import StreamPlan, build_stream, density_ratio, envelope_constant
from .domain import (
    AdversaryMode,
    ChallengerMode,
    GameConfig,
    IntervalLedger,
    Metrics,
    Origin,
    Post,
    compute_metrics,
    stack_labels,
)
from .model import ClassifierParams, Role, init_params
from .seeding import derive_seed

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "run_id",
    "seed",
    "scenario",
    "adversary_mode",
    "challenger_mode",
    "k",
    "interval",
    "tp",
    "fp",
    "fn",
    "tn",
    "precision",
    "recall",
    "f_score",
    "pool_size",
    "budget_spent",
    "decoys_injected",
)


@dataclass(frozen=True)
class IntervalRecord:
    """One row of a trace; field order is the CSV column order."""

    run_id: str
    seed: int
    scenario: str
    adversary_mode: str
    challenger_mode: str
    k: int
    interval: int
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f_score: float
    pool_size: int
    budget_spent: int
    decoys_injected: int


@dataclass
class IntervalInfo:
    """Per-interval diagnostics that are not part of the CSV schema."""

    test_size: int
    degenerate: bool
    pool_exhausted: bool
    queried: int
    queried_decoy_overlap: int
    countermeasure_hits: int


@dataclass
class GameTrace:
    config: GameConfig
    records: list[IntervalRecord] = field(default_factory=list)
    info: list[IntervalInfo] = field(default_factory=list)
    ledgers: list[IntervalLedger] = field(default_factory=list)
    snapshots: list[ClassifierParams] = field(default_factory=list)
    queried_ids: set[int] = field(default_factory=set)
    final_pool: list[Post] = field(default_factory=list)

    @property
    def final(self) -> IntervalRecord:
        return self.records[-1]


def run_id_for(config: GameConfig) -> str:
    return (
        f"{config.scenario.scenario.value}-{config.adversary_mode.value}-"
        f"{config.challenger_mode.value}-k{config.k}-s{config.seed}"
    )


def evaluate_cumulative(
    state: adv.AdversaryState, ledgers: Sequence[IntervalLedger], seed=None
) -> tuple[Metrics, bool]:
    """Score the current model on every past deletion it did not train on.

    Decoys carry label 0, so flagging one is a false positive. Returns the
    metrics and whether the test set was empty (then all metrics are 0).
    """
    test = [p for ledger in ledgers for p in ledger.test_posts()]
    if not test:
        return Metrics.empty(), True
    preds, _ = adv.classify(state, test, seed)
    return compute_metrics(preds, stack_labels(test)), False


def _make_adversary(config: GameConfig) -> adv.AdversaryState:
    params = init_params(config.scenario.d, config.hidden, Role.ADVERSARY, derive_seed(config.seed, "theta0"))
    mode = config.adversary_mode
    if mode is AdversaryMode.ADAPTIVE:
        size, budget = config.B_adapt, config.B_adapt
    elif mode is AdversaryMode.STATIC:
        size, budget = config.p, config.B_static
    else:
        size = budget = 0 if config.random_prior is not None else config.p
    return adv.AdversaryState(
        params=params,
        mode=mode,
        sample_size=size,
        budget_remaining=budget,
        recurring_budget=config.B_adapt,
        tau=config.tau,
        hyper=config.adversary_train,
        label_noise_eta=config.label_noise_eta,
        decision_threshold=config.decision_threshold,
        prior_positive=config.random_prior,
        warm_start=config.warm_start,
        monitored=config.monitored_flag,
    )


def _make_challenger(config: GameConfig) -> ch.ChallengerState:
    state = ch.ChallengerState(mode=config.challenger_mode, query_budget=config.B_con, hyper=config.challenger_train)
    if config.challenger_mode is ChallengerMode.D2:
        state.phi = init_params(config.scenario.d, config.hidden, Role.CHALLENGER, derive_seed(config.seed, "phi0"))
    if config.challenger_mode is ChallengerMode.REJECTION:
        state.density_ratio = density_ratio(config.scenario)
        state.envelope = envelope_constant(config.scenario)
    return state


def _as_decoy(post: Post, t: int) -> Post:
    return dataclasses.replace(post, origin=Origin.DECOY, interval_deleted=t)


def run_game(config: GameConfig) -> GameTrace:
    """Play ``config.T`` intervals and record cumulative adversary metrics.

    Order within interval ``t``: user deletions plus the decoys chosen at
    ``t-1`` are deleted; the adversary trains if its budget allows; new
    volunteers join the pool; the challenger picks the decoys for ``t+1``;
    the adversary relabels all past non-training deletions.

    The user stream depends only on ``config.seed``, so runs that differ only
    in player settings see the same users.
    """
    plan = StreamPlan(config.n_damaging, config.n_nondamaging, config.n_volunteered, config.T, config.seed)
    stream = build_stream(config.scenario, plan)
    adversary = _make_adversary(config)
    challenger = _make_challenger(config)
    trace = GameTrace(config=config)
    run_id = run_id_for(config)
    pending: list[Post] = []

    for ledger in stream:
        t = ledger.t
        decoys = [_as_decoy(p, t) for p in pending]
        ledger.decoys_injected = decoys
        ledger.deleted = ledger.deleted + decoys
        hits = adv.monitored_hits(adversary, decoys) if config.monitored_flag else 0

        ledger.adversary_train_sample = adv.adversary_step(
            adversary, ledger.deleted, derive_seed(config.seed, "adversary", t)
        )
        ledger.check()

        challenger.add_volunteers(ledger.volunteered_new)
        pending = []
        exhausted = False
        if t < config.T and config.challenger_mode is not ChallengerMode.NONE:
            K = config.k * len(ledger.damaging)
            pending = ch.select(
                challenger,
                K,
                lambda X: adv.probabilities(adversary, X),
                derive_seed(config.seed, "challenger", t),
            )
            exhausted = challenger.exhausted
            if config.monitored_flag:
                adversary.monitored_ids |= {p.id for p in challenger.last_queried}
        overlap = len({p.id for p in pending} & challenger.queried_ids)

        trace.ledgers.append(ledger)
        metrics, degenerate = evaluate_cumulative(adversary, trace.ledgers, derive_seed(config.seed, "classify", t))
        if degenerate:
            log.info("interval %d: empty test set", t)
        trace.records.append(
            IntervalRecord(
                run_id=run_id,
                seed=config.seed,
                scenario=config.scenario.scenario.value,
                adversary_mode=config.adversary_mode.value,
                challenger_mode=config.challenger_mode.value,
                k=config.k,
                interval=t,
                tp=metrics.true_positives,
                fp=metrics.false_positives,
                fn=metrics.false_negatives,
                tn=metrics.true_negatives,
                precision=metrics.precision,
                recall=metrics.recall,
                f_score=metrics.f_score,
                pool_size=len(challenger.pool),
                budget_spent=adversary.budget_spent,
                decoys_injected=len(decoys),
            )
        )
        trace.info.append(
            IntervalInfo(
                test_size=metrics.total,
                degenerate=degenerate,
                pool_exhausted=exhausted,
                queried=len(challenger.last_queried),
                queried_decoy_overlap=overlap,
                countermeasure_hits=hits,
            )
        )
        if config.snapshots:
            trace.snapshots.append(adversary.params.copy())

    trace.queried_ids = set(challenger.queried_ids)
    trace.final_pool = list(challenger.pool)
    return trace
