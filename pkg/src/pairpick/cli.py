"""Command-line surface: select, sort-split, simulate, train, eval, drift, report.

Every command prints one machine-readable summary line (key=value fields) to
stdout and writes its full artifacts as files. Warnings and skip diagnostics
go to stderr. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from . import corpus, selection
from .errors import DataError, NumericError
from .trainer import (
    TrainConfig,
    evaluate,
    init_policy,
    load_policy,
    save_policy,
    train,
    write_history_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; this CLI uses 1."""

    def error(self, message):
        raise UsageError(message)


def _summary(command: str, **fields) -> None:
    parts = [command] + [f"{k}={v}" for k, v in fields.items()]
    print(" ".join(parts))


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _check_distinct(inputs, outputs):
    ins = {str(Path(p)) for p in inputs if p}
    outs = {str(Path(p)) for p in outputs if p}
    clash = ins & outs
    if clash:
        raise UsageError(f"input and output paths must differ: {sorted(clash)}")


def cmd_select(args) -> int:
    _check_distinct([args.groups, args.embeddings], [args.out])
    groups = corpus.load_response_groups(args.groups)
    store = corpus.load_embeddings(args.embeddings)
    filters_on = args.max_token_length is not None or args.min_score_ratio is not None
    pairs = []
    skipped = 0
    for group in groups:
        if filters_on:
            kept = corpus.filter_group(
                group,
                max_token_length=args.max_token_length,
                min_score_ratio=args.min_score_ratio,
            )
            if kept is None:
                skipped += 1
                _warn(f"prompt {group.prompt_id!r} rejected by cleaning filters; skipped")
                continue
            group = kept
        if not store.has_group(group):
            skipped += 1
            _warn(f"prompt {group.prompt_id!r} has missing embeddings; skipped")
            continue
        pairs.append(selection.select_pair(group, store, args.strategy, args.seed))
    count = corpus.write_pairs(pairs, args.out)
    _summary(
        "select",
        status="ok",
        strategy=args.strategy,
        groups=len(groups),
        pairs=count,
        skipped=skipped,
        out=args.out,
    )
    return EXIT_OK


def cmd_sort_split(args) -> int:
    _check_distinct([args.pairs], [args.out_hard, args.out_easy])
    if not 0.0 < args.fraction < 1.0:
        raise UsageError(f"--fraction must be in (0, 1), got {args.fraction}")
    pairs = corpus.load_pairs(args.pairs)
    result = selection.sort_split(pairs, args.fraction)
    n_hard = corpus.write_pairs(result.hard_half, args.out_hard)
    n_easy = corpus.write_pairs(result.easy_half, args.out_easy)
    _summary(
        "sort-split",
        status="ok",
        fraction=args.fraction,
        hard=n_hard,
        easy=n_easy,
        out_hard=args.out_hard,
        out_easy=args.out_easy,
    )
    return EXIT_OK


_SIMULATE_KEYS = {"world", "train", "strategies", "n_seeds", "beta"}


def _load_simulate_config(path, default_beta: float):
    from .simulator import DEFAULT_N_SEEDS, DEFAULT_STRATEGIES, WorldConfig

    records = list(corpus.read_json_lines(path))
    if len(records) != 1:
        raise DataError(f"{path}: simulate config must hold exactly one record")
    lineno, obj = records[0]
    unknown = set(obj) - _SIMULATE_KEYS
    if unknown:
        raise DataError(f"{path}:{lineno}: unknown config keys {sorted(unknown)}")

    def build(cls, section):
        data = obj.get(section, {})
        if not isinstance(data, dict):
            raise DataError(f"{path}:{lineno}: {section!r} must be an object")
        allowed = {f.name for f in dataclass_fields(cls)}
        bad = set(data) - allowed
        if bad:
            raise DataError(f"{path}:{lineno}: unknown {section} keys {sorted(bad)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: invalid {section} config: {exc}") from exc

    world = build(WorldConfig, "world")
    train_cfg = build(TrainConfig, "train")
    strategies = obj.get("strategies", list(DEFAULT_STRATEGIES))
    if not isinstance(strategies, list) or not strategies:
        raise DataError(f"{path}:{lineno}: strategies must be a non-empty list")
    for s in strategies:
        if s not in corpus.STRATEGIES:
            raise DataError(f"{path}:{lineno}: unknown strategy {s!r}")
    n_seeds = obj.get("n_seeds", DEFAULT_N_SEEDS)
    if not isinstance(n_seeds, int) or n_seeds < 1:
        raise DataError(f"{path}:{lineno}: n_seeds must be a positive integer")
    beta = obj.get("beta", default_beta)
    return world, train_cfg, strategies, n_seeds, float(beta)


def cmd_simulate(args) -> int:
    from .simulator import run_experiment, write_experiment_csv

    _check_distinct([args.config], [args.out])
    world, train_cfg, strategies, n_seeds, beta = _load_simulate_config(args.config, args.beta)
    report = run_experiment(world, strategies, train_cfg, n_seeds=n_seeds, beta=beta)
    write_experiment_csv(report, args.out)
    _summary(
        "simulate",
        status="ok",
        strategies=",".join(strategies),
        seeds=n_seeds,
        rows=len(report.rows),
        out=args.out,
    )
    return EXIT_OK


def cmd_train(args) -> int:
    _check_distinct([args.labeled, args.embeddings], [args.out_history, args.out_policy])
    labeled = corpus.load_labeled(args.labeled)
    store = corpus.load_embeddings(args.embeddings)
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        shuffle=not args.no_shuffle,
    )
    policy = init_policy(store.dimension, args.beta)
    trained, history = train(policy, labeled, store, cfg)
    write_history_csv(history, args.out_history)
    if args.out_policy:
        save_policy(trained, args.out_policy)
    final = history.final
    _summary(
        "train",
        status="ok",
        pairs=len(labeled),
        steps=len(history.steps),
        final_loss=repr(final.loss),
        final_margins=repr(final.margins),
        out=args.out_history,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    _check_distinct([args.policy, args.labeled, args.embeddings], [args.out])
    policy = load_policy(args.policy)
    labeled = corpus.load_labeled(args.labeled)
    store = corpus.load_embeddings(args.embeddings)
    metrics = evaluate(policy, labeled, store)
    if args.out:
        import csv as _csv

        with open(args.out, "w", encoding="utf-8", newline="") as out:
            writer = _csv.writer(out)
            writer.writerow(["margins", "loss", "n_pairs", "agreement"])
            writer.writerow(
                [repr(metrics.margins), repr(metrics.loss), metrics.n_pairs, repr(metrics.agreement)]
            )
    _summary(
        "eval",
        status="ok",
        margins=repr(metrics.margins),
        loss=repr(metrics.loss),
        agreement=repr(metrics.agreement),
        n_pairs=metrics.n_pairs,
    )
    return EXIT_OK


def cmd_drift(args) -> int:
    from .drift import similarity_drift, write_drift_csv, write_drift_deltas_csv

    _check_distinct([args.store_a, args.store_b, args.pairs], [args.out, args.out_deltas])
    store_a = corpus.load_embeddings(args.store_a)
    store_b = corpus.load_embeddings(args.store_b)
    pairs = corpus.load_pairs(args.pairs)
    report = similarity_drift(store_a, store_b, pairs)
    if args.out:
        write_drift_csv(report, args.out)
    if args.out_deltas:
        write_drift_deltas_csv(report, pairs, args.out_deltas)
    _summary(
        "drift",
        status="ok",
        n_pairs=report.n_pairs,
        max_abs_delta=repr(report.max_abs_delta),
        mean_abs_delta=repr(report.mean_abs_delta),
        selection_stable=report.selection_stable,
    )
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_all

    _check_distinct([args.experiment, args.history, args.drift_deltas], [])
    written = render_all(
        args.out_dir,
        experiment_csv=args.experiment,
        history_csv=args.history,
        drift_deltas_csv=args.drift_deltas,
    )
    _summary(
        "report",
        status="ok",
        files=len(written),
        out_dir=args.out_dir,
        written=",".join(p.name for p in written),
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pairpick", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="base seed for all random substreams")
    parser.add_argument("--beta", type=float, default=0.1, help="DPO beta (loss scaling)")
    parser.add_argument("--format", choices=["csv"], default="csv", help="artifact format")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="pick one pair per prompt group")
    p.add_argument("--groups", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--strategy", required=True, choices=list(corpus.STRATEGIES))
    p.add_argument("--out", required=True)
    p.add_argument("--max-token-length", type=int, default=None,
                   help="enable the length cleaning filter")
    p.add_argument("--min-score-ratio", type=float, default=None,
                   help="enable the top-two score-ratio cleaning filter")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sort-split", help="split pre-paired data into hard/easy halves")
    p.add_argument("--pairs", required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--out-hard", required=True)
    p.add_argument("--out-easy", required=True)
    p.set_defaults(func=cmd_sort_split)

    p = sub.add_parser("simulate", help="run the synthetic strategy-comparison experiment")
    p.add_argument("--config", required=True, help="one-record JSON-lines config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a linear preference policy with DPO")
    p.add_argument("--labeled", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-history", required=True)
    p.add_argument("--out-policy", default=None)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--no-shuffle", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="margins/loss/agreement of a saved policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--labeled", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("drift", help="compare pair similarities across two stores")
    p.add_argument("--store-a", required=True)
    p.add_argument("--store-b", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--out-deltas", default=None)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("report", help="render figures from CSV artifacts")
    p.add_argument("--experiment", default=None)
    p.add_argument("--history", default=None)
    p.add_argument("--drift-deltas", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
