"""Config files, trace CSVs, and seed/k/mode sweeps with confidence-interval aggregation.

Config files are INI-style (``key = value`` under ``[section]`` headers).
Sections: ``[game]``, ``[scenario]``, ``[adversary_train]``,
``[challenger_train]`` and, for sweeps, ``[sweep]``. List values are comma
separated; seed lists also accept ranges such as ``0-9``.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    AdversaryMode,
    ChallengerMode,
    ConfigError,
    GameConfig,
    Scenario,
    ScenarioSpec,
    TrainHyper,
    parse_enum,
)
from .engine import CSV_COLUMNS, GameTrace, IntervalRecord, run_game

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = (
    "scenario",
    "adversary_mode",
    "challenger_mode",
    "k",
    "interval",
    "n_seeds",
    "f_mean",
    "f_std",
    "f_ci95",
    "precision_mean",
    "recall_mean",
)


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _count(text: str):
    values = _ints(text)
    return values[0] if len(values) == 1 else values


def parse_seeds(text: str) -> tuple[int, ...]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            if int(hi) < int(lo):
                raise ConfigError(f"empty seed range {part!r}")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return tuple(seeds)


_GAME_KEYS = {
    "T": int,
    "k": int,
    "p": int,
    "B_static": int,
    "B_adapt": int,
    "B_con": int,
    "n_damaging": _count,
    "n_nondamaging": _count,
    "n_volunteered": _count,
    "label_noise_eta": float,
    "adversary_mode": lambda v: parse_enum(AdversaryMode, v),
    "challenger_mode": lambda v: parse_enum(ChallengerMode, v),
    "monitored_flag": _bool,
    "hidden": _ints,
    "warm_start": _bool,
    "decision_threshold": float,
    "random_prior": lambda v: None if v.strip() in ("", "none", "None") else float(v),
    "seed": int,
    "snapshots": _bool,
}

_SCENARIO_KEYS = {
    "name": lambda v: parse_enum(Scenario, v),
    "d": int,
    "noise": float,
    "mean0": _floats,
    "mean1": _floats,
    "sigma0": float,
    "sigma1": float,
    "mean_a": _floats,
    "mean_b": _floats,
    "mean_shared": _floats,
    "sigma": float,
    "shared_weight": float,
}

_TRAIN_KEYS = {"learning_rate": float, "epochs": int, "batch_size": int, "balance_batches": _bool}


def _section(parser, name, keys) -> dict:
    if not parser.has_section(name):
        return {}
    out = {}
    # configparser lower-cases keys; match case-insensitively
    lookup = {k.lower(): k for k in keys}
    for raw, value in parser.items(name):
        if raw not in lookup:
            raise ConfigError(f"[{name}] unknown key {raw!r}")
        key = lookup[raw]
        try:
            out[key] = keys[key](value)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return out


def _looks_like_path(source) -> bool:
    if isinstance(source, os.PathLike):
        return True
    return isinstance(source, str) and bool(source) and "\n" not in source and "[" not in source


def _parser(source) -> configparser.ConfigParser:
    """Parse INI text, or the file at ``source`` when it looks like a path."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if _looks_like_path(source):
            if not Path(source).exists():
                raise ConfigError(f"config file not found: {source}")
            with open(source, encoding="utf-8") as fh:
                parser.read_file(fh)
        else:
            parser.read_string(str(source))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return parser


def config_from_parser(parser: configparser.ConfigParser) -> GameConfig:
    game = _section(parser, "game", _GAME_KEYS)
    scen = _section(parser, "scenario", _SCENARIO_KEYS)
    if "name" in scen:
        scen["scenario"] = scen.pop("name")
    if "hidden" in game:
        game["hidden"] = tuple(game["hidden"])
    defaults = GameConfig()
    adv = dataclasses.replace(defaults.adversary_train, **_section(parser, "adversary_train", _TRAIN_KEYS))
    chal = dataclasses.replace(defaults.challenger_train, **_section(parser, "challenger_train", _TRAIN_KEYS))
    return GameConfig(scenario=ScenarioSpec(**scen), adversary_train=adv, challenger_train=chal, **game)


def load_config(source) -> GameConfig:
    """Parse a config file path or config text into a :class:`GameConfig`."""
    return config_from_parser(_parser(source))


def _fmt(value) -> str:
    if isinstance(value, (AdversaryMode, ChallengerMode, Scenario)):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def config_to_text(config: GameConfig) -> str:
    """Inverse of :func:`load_config`."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["game"] = {k: _fmt(getattr(config, k)) for k in _GAME_KEYS}
    scen = {k: _fmt(getattr(config.scenario, k)) for k in _SCENARIO_KEYS if k != "name"}
    parser["scenario"] = {"name": config.scenario.scenario.value, **scen}
    parser["adversary_train"] = {k: _fmt(getattr(config.adversary_train, k)) for k in _TRAIN_KEYS}
    parser["challenger_train"] = {k: _fmt(getattr(config.challenger_train, k)) for k in _TRAIN_KEYS}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


@dataclass(frozen=True)
class ExperimentSpec:
    base: GameConfig
    ks: tuple[int, ...] = (2,)
    adversary_modes: tuple[AdversaryMode, ...] = (AdversaryMode.ADAPTIVE,)
    challenger_modes: tuple[ChallengerMode, ...] = (ChallengerMode.NONE,)
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "results"

    def __post_init__(self):
        if not (self.ks and self.adversary_modes and self.challenger_modes and self.seeds):
            raise ConfigError("every sweep axis needs at least one value")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("sweep seeds must be distinct")

    def cells(self) -> list[GameConfig]:
        grid = itertools.product(self.adversary_modes, self.ks, self.challenger_modes, self.seeds)
        return [
            dataclasses.replace(self.base, adversary_mode=a, k=k, challenger_mode=c, seed=s)
            for a, k, c, s in grid
        ]


def load_experiment(source) -> ExperimentSpec:
    parser = _parser(source)
    base = config_from_parser(parser)
    sweep = dict(parser.items("sweep")) if parser.has_section("sweep") else {}
    known = {"k", "adversary_modes", "challenger_modes", "seeds", "output_dir"}
    unknown = set(sweep) - known
    if unknown:
        raise ConfigError(f"[sweep] unknown keys {sorted(unknown)}")
    return ExperimentSpec(
        base=base,
        ks=_ints(sweep["k"]) if "k" in sweep else (base.k,),
        adversary_modes=tuple(parse_enum(AdversaryMode, v) for v in sweep["adversary_modes"].split(","))
        if "adversary_modes" in sweep
        else (base.adversary_mode,),
        challenger_modes=tuple(parse_enum(ChallengerMode, v) for v in sweep["challenger_modes"].split(","))
        if "challenger_modes" in sweep
        else (base.challenger_mode,),
        seeds=parse_seeds(sweep["seeds"]) if "seeds" in sweep else (base.seed,),
        output_dir=sweep.get("output_dir", "results").strip(),
    )


def _cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def trace_to_csv(records, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow([_cell(getattr(rec, c)) for c in CSV_COLUMNS])


def trace_csv_text(trace: GameTrace) -> str:
    buf = io.StringIO()
    trace_to_csv(trace.records, buf)
    return buf.getvalue()


def write_trace_csv(trace: GameTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        trace_to_csv(trace.records, fh)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(IntervalRecord)}
_PARSERS = {"int": int, "float": float, "str": str}


def read_trace_csv(path_or_text) -> list[IntervalRecord]:
    """Parse a trace CSV (path or text) back into records."""
    if _looks_like_path(path_or_text) and "," not in str(path_or_text):
        with open(path_or_text, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(io.StringIO(str(path_or_text))))
    header, body = tuple(rows[0]), rows[1:]
    if header != CSV_COLUMNS:
        raise ConfigError(f"unexpected trace columns {header}")
    return [
        IntervalRecord(**{c: _PARSERS[_FIELD_TYPES[c]](v) for c, v in zip(CSV_COLUMNS, row)}) for row in body
    ]


def ci_halfwidth(values) -> float:
    """95% normal-approximation half-width ``1.96 * s / sqrt(n)`` with sample std ``s``."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return 1.96 * float(np.std(values, ddof=1)) / math.sqrt(len(values))


def aggregate(records) -> list[dict]:
    """Mean F-score with 95% CI across seeds, per grid cell and interval."""
    groups: dict[tuple, list[IntervalRecord]] = {}
    for rec in records:
        key = (rec.scenario, rec.adversary_mode, rec.challenger_mode, rec.k, rec.interval)
        groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        f = np.array([r.f_score for r in recs])
        rows.append(
            dict(
                zip(AGGREGATE_COLUMNS[:5], key),
                n_seeds=len(recs),
                f_mean=float(f.mean()),
                f_std=float(np.std(f, ddof=1)) if len(f) > 1 else 0.0,
                f_ci95=ci_halfwidth(f),
                precision_mean=float(np.mean([r.precision for r in recs])),
                recall_mean=float(np.mean([r.recall for r in recs])),
            )
        )
    return rows


def write_aggregate_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in AGGREGATE_COLUMNS])


def read_aggregate_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            for c in ("k", "interval", "n_seeds"):
                row[c] = int(row[c])
            for c in AGGREGATE_COLUMNS[6:]:
                row[c] = float(row[c])
            out.append(row)
    return out


def _play(config: GameConfig) -> list[IntervalRecord]:
    return run_game(config).records


@dataclass
class ExperimentResult:
    traces: dict[str, list[IntervalRecord]] = field(default_factory=dict)
    summary: list[dict] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


def run_experiment(spec: ExperimentSpec, jobs: int = 1, figures: bool = True) -> ExperimentResult:
    """Play every grid cell, write one CSV per cell plus ``aggregate.csv``.

    Cells are independent and may run in ``jobs`` worker processes; outputs
    are written afterwards in grid order, so results do not depend on ``jobs``.
    """
    out = Path(spec.output_dir)
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    cells = spec.cells()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            all_records = list(pool.map(_play, cells))
    else:
        all_records = [_play(c) for c in cells]

    result = ExperimentResult()
    flat = []
    for records in all_records:
        run_id = records[0].run_id
        path = out / "traces" / f"{run_id}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            trace_to_csv(records, fh)
        result.traces[run_id] = records
        result.files.append(path)
        flat.extend(records)
    result.summary = aggregate(flat)
    agg_path = out / "aggregate.csv"
    write_aggregate_csv(result.summary, agg_path)
    result.files.append(agg_path)
    (out / "config.ini").write_text(config_to_text(spec.base), encoding="utf-8")
    if figures:
        from .plots import plot_sweep

        result.files.extend(plot_sweep(result.summary, out / "figures"))
    return result
