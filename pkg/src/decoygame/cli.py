"""Command-line entry point: ``decoygame <verb> [options]``.

Exit status is 0 on success, 1 when a check fails, 2 for bad arguments or
configuration and 3 for runtime errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks
from .datagen import EnvelopeError, dump_stream, StreamPlan, build_stream
from .domain import AdversaryMode, ConfigError, TrainHyper, stack_features, stack_labels
from .engine import run_game
from .experiment import (
    _parser,
    aggregate,
    config_from_parser,
    load_experiment,
    run_experiment,
    trace_csv_text,
)
from .model import load_params, save_params

log = logging.getLogger("decoygame")

EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load(args):
    """Game config from ``--config`` (or defaults) with ``--set`` overrides applied."""
    parser = _parser(Path(args.config)) if args.config else _parser("")
    for item in args.set or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())
    return config_from_parser(parser)


def _add_config_args(p):
    p.add_argument("--config", help="INI config file with [game], [scenario], ... sections")
    p.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override one config value, e.g. game.k=5 (repeatable)",
    )


def cmd_run(args) -> int:
    config = _load(args)
    if args.figures:
        config = dataclasses.replace(config, snapshots=True)
    trace = run_game(config)
    text = trace_csv_text(trace)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.dump_stream:
        dump_stream(trace.ledgers, args.dump_stream)
    if args.figures:
        from .plots import emit_boundary_plot, plot_curves

        out = Path(args.figures)
        plot_curves(aggregate(trace.records), "f_mean", out / "f_score.svg", "F-score by interval")
        if config.scenario.d == 2 and config.adversary_mode is not AdversaryMode.RANDOM:
            posts = [p for ledger in trace.ledgers for p in ledger.deleted]
            dataset = (stack_features(posts), stack_labels(posts))
            emit_boundary_plot(trace.snapshots[-1], dataset, out / "boundary.svg")
    print(
        f"final interval {trace.final.interval}: precision={trace.final.precision:.4f} "
        f"recall={trace.final.recall:.4f} f_score={trace.final.f_score:.4f}",
        file=sys.stderr,
    )
    return 0


def cmd_sweep(args) -> int:
    spec = load_experiment(args.spec)
    if args.out:
        spec = dataclasses.replace(spec, output_dir=args.out)
    result = run_experiment(spec, jobs=args.jobs, figures=not args.no_figures)
    final = {}
    for row in result.summary:
        key = (row["adversary_mode"], row["challenger_mode"], row["k"])
        if row["interval"] >= final.get(key, {"interval": -1})["interval"]:
            final[key] = row
    for (adv_mode, chal, k), row in sorted(final.items()):
        print(f"{adv_mode:9s} {chal:9s} k={k}  F={row['f_mean']:.4f} +/- {row['f_ci95']:.4f}")
    print(f"wrote {len(result.files)} files under {spec.output_dir}", file=sys.stderr)
    return 0


def cmd_plot_boundary(args) -> int:
    from .plots import emit_boundary_plot

    config = _load(args)
    upto = args.interval or config.T
    if not 1 <= upto <= config.T:
        raise ConfigError(f"interval must lie in [1, {config.T}]")
    if args.params:
        params = load_params(args.params)
        ledgers = build_stream(
            config.scenario,
            StreamPlan(config.n_damaging, config.n_nondamaging, config.n_volunteered, config.T, config.seed),
        )
    else:
        trace = run_game(dataclasses.replace(config, snapshots=True))
        params, ledgers = trace.snapshots[upto - 1], trace.ledgers
    posts = [p for ledger in ledgers[:upto] for p in ledger.deleted]
    if args.save_params:
        save_params(params, args.save_params)
    path = emit_boundary_plot(params, (stack_features(posts), stack_labels(posts)), args.out, f"interval {upto}")
    print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    res = checks.gradcheck_trials(args.trials, args.epsilon, args.tolerance, args.seed)
    status = "PASS" if res.passed else "FAIL"
    print(f"{status} gradcheck: {res.trials} draws, max relative error {res.max_rel_error:.3e} (< {res.tolerance:g})")
    return 0 if res.passed else EXIT_FAIL


def cmd_prop1(args) -> int:
    hyper = TrainHyper(learning_rate=args.lr, epochs=args.epochs)
    res = checks.selection_equivalence(args.instances, args.seed, hyper)
    status = "PASS" if res.passed else "FAIL"
    print(
        f"{status} selection equivalence: {res.mismatches}/{res.instances} top-K mismatches, "
        f"K=1 max relative error {res.k1_max_rel_error:.2e}, relaxed value vs best single post "
        f"{res.value_max_rel_error:.2e} (<= {res.tolerance:g})"
    )
    if args.mlp:
        hidden = tuple(int(h) for h in args.mlp.split(","))
        mlp = checks.selection_equivalence(
            args.instances, args.seed, TrainHyper(learning_rate=1.0, epochs=args.epochs), mlp_hidden=hidden
        )
        print(
            f"info  MLP scorer {hidden}: {mlp.mismatches}/{mlp.instances} top-K mismatches, "
            f"K=1 max relative error {mlp.k1_max_rel_error:.2e}"
        )
    return 0 if res.passed else EXIT_FAIL


def cmd_prop3(args) -> int:
    ok = True
    res = checks.rejection_fidelity(args.draws, seed=args.seed)
    ok &= res.passed
    print(
        f"{'PASS' if res.passed else 'FAIL'} rejection sampler: acceptance {res.acceptance_rate:.4f} vs 1/M "
        f"{1 / res.envelope:.4f} ({res.rate_error:.2%} off), chi2={res.chi2:.1f} dof={res.dof} p={res.p_value:.3f}"
    )
    for k in args.k or []:
        bound = checks.precision_bound(k, range(args.seeds), args.T)
        ok &= bound.passed
        print(
            f"{'PASS' if bound.passed else 'FAIL'} precision bound k={k}: mean precision "
            f"{bound.mean_precision:.4f} <= {bound.bound:.4f}"
        )
    return 0 if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decoygame", description="Decoy deletion game simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="play one game and emit its per-interval CSV")
    _add_config_args(p)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--figures", help="directory for SVG figures of this run")
    p.add_argument("--dump-stream", help="write the post stream as TSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a k / mode / seed grid with CSV and figure output")
    p.add_argument("--spec", required=True, help="INI file with a [sweep] section")
    p.add_argument("--out", help="output directory (overrides [sweep] output_dir)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-figures", action="store_true", help="skip SVG output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot-boundary", help="SVG of the adversary decision boundary")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output figure (.svg)")
    p.add_argument("--interval", type=int, help="interval snapshot to plot (default: last)")
    p.add_argument("--params", help="plot a saved parameter file instead of playing the game")
    p.add_argument("--save-params", help="also write the plotted parameters")
    p.set_defaults(func=cmd_plot_boundary)

    p = sub.add_parser("gradcheck", help="backprop against finite differences")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("prop1-check", help="relaxed selector top-K against brute force")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--lr", type=float, default=10.0)
    p.add_argument("--epochs", type=int, default=3000)
    p.add_argument("--mlp", metavar="H1,H2", help="also report an MLP scorer with these hidden widths")
    p.set_defaults(func=cmd_prop1)

    p = sub.add_parser("prop3-check", help="rejection sampler fidelity and decoy precision bound")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--k", type=int, action="append", help="also play the precision-bound game for this k")
    p.add_argument("--seeds", type=int, default=5, help="games per k")
    p.add_argument("-T", type=int, default=50, help="intervals per game")
    p.set_defaults(func=cmd_prop3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EnvelopeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FloatingPointError, AssertionError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
