"""Command-line entry point.

Exit codes:

    0   success
    1   internal error
    2   input file missing
    3   schema hash mismatch between a model and the features it is given
    4   bad data (corpus, config, degenerate labels)
    64  usage error (unknown flag, bad value)

Failures print exactly one line to stderr:

    prtriage-error kind=<kind> exit=<code> detail=<json string>
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, load_config
from .core import Stage
from .eval.metrics import DegenerateDataError
from .eval.report import EvalConfig, evaluate, regenerate_curves
from .eval.splits import temporal_split
from .features import FeatureSchema, feature_matrix, write_feature_csv
from .ingest import AgentRegistry, CorpusError, parse_corpus, write_corpus
from .labeling import LabelConfig, label_records, write_labels_csv
from .learner import GbdtModel, GbdtParams, SchemaMismatchError, TrainingError, train_gbdt
from .synth import SynthParams, generate_corpus, planted_signal_corpus
from .triage import TriageInput, TriagePolicy, batch_gate, timeout_sweep, write_decisions_csv, write_decisions_jsonl

EXIT_OK, EXIT_INTERNAL, EXIT_MISSING, EXIT_SCHEMA, EXIT_DATA, EXIT_USAGE = 0, 1, 2, 3, 4, 64


class CliError(Exception):
    def __init__(self, kind: str, code: int, detail: str):
        super().__init__(detail)
        self.kind, self.code, self.detail = kind, code, detail


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", EXIT_USAGE, message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    threads: int
    stage: Stage
    labels: LabelConfig
    gbdt: GbdtParams
    policy: TriagePolicy


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise CliError("missing_file", EXIT_MISSING, f"no such file: {path}")
    return path


def _open_out(path: str):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def _run_config(args) -> RunConfig:
    labels = LabelConfig(
        high_cost_quantile=args.quantile,
        ghosting_timeout_days=args.timeout_days,
    )
    gbdt = GbdtParams(
        n_trees=args.trees,
        learning_rate=args.learning_rate,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_leaf,
        seed=args.seed,
    )
    policy = TriagePolicy(budget=args.budget, timeout_days=args.timeout_days)
    return RunConfig(args.command, args.seed, args.threads, Stage(args.stage), labels, gbdt, policy)


def _load_records(args, path: str | None = None):
    path = _require(path or args.input)
    registry = AgentRegistry.from_config(args.cfg)
    with open(path, "rb") as fh:
        records, diagnostics = parse_corpus(fh, strict=args.strict, registry=registry)
    for d in diagnostics:
        print(f"skipped {d}", file=sys.stderr)
    if not records:
        raise CliError("data", EXIT_DATA, f"{path}: no valid records")
    return records


def _schema(args, rc: RunConfig) -> FeatureSchema:
    return FeatureSchema.build(rc.stage, args.cfg)


def _labels(records, rc: RunConfig):
    labels, threshold = label_records(records, rc.labels)
    return np.array([lab.is_high_cost for lab in labels], dtype=bool), labels, threshold


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args, rc: RunConfig) -> None:
    params = SynthParams(n_prs=args.n, seed=rc.seed, instant_fraction=args.instant_fraction)
    if args.planted is not None:
        records, _, _ = planted_signal_corpus(params, args.planted, quantile=rc.labels.high_cost_quantile)
    else:
        records = generate_corpus(params)
    with _open_out(args.out) as fh:
        write_corpus(records, fh)


def cmd_ingest(args, rc: RunConfig) -> None:
    records = _load_records(args)
    with _open_out(args.out) as fh:
        write_corpus(sorted(records, key=lambda r: r.id), fh)


def cmd_featurize(args, rc: RunConfig) -> None:
    records = _load_records(args)
    schema = _schema(args, rc)
    X = feature_matrix(records, schema)
    with _open_out(args.out) as fh:
        write_feature_csv(fh, [r.id for r in records], X, schema, rc.seed)


def cmd_label(args, rc: RunConfig) -> None:
    records = _load_records(args)
    _, labels, threshold = _labels(records, rc)
    with _open_out(args.out) as fh:
        write_labels_csv(fh, [r.id for r in records], labels, threshold, rc.seed)


def _train(records, args, rc: RunConfig) -> GbdtModel:
    schema = _schema(args, rc)
    y, _, _ = _labels(records, rc)
    return train_gbdt(feature_matrix(records, schema), y, rc.gbdt, schema.names, schema.hash, rc.threads)


def cmd_train(args, rc: RunConfig) -> None:
    model = _train(_load_records(args), args, rc)
    with _open_out(args.out) as fh:
        fh.write(model.dumps())


def _load_model(path: str) -> GbdtModel:
    with open(_require(path), encoding="utf-8") as fh:
        text = fh.read()
    try:
        return GbdtModel.loads(text)
    except (ValueError, KeyError, IndexError) as exc:
        raise CliError("data", EXIT_DATA, f"{path}: unreadable model ({exc})") from None


def _score(records, model: GbdtModel, args, rc: RunConfig) -> np.ndarray:
    schema = _schema(args, rc)
    return model.predict_proba(feature_matrix(records, schema), schema_hash=schema.hash)


def cmd_score(args, rc: RunConfig) -> None:
    model = _load_model(args.model)
    records = _load_records(args)
    probs = _score(records, model, args, rc)
    with _open_out(args.out) as fh:
        fh.write(f"# seed={rc.seed} schema_hash={model.schema_hash}\n")
        fh.write("id,probability\n")
        for r, p in zip(records, probs):
            fh.write(f"{r.id},{float(p)!r}\n")


def _triage(records, probs, args, rc: RunConfig, out: str, schema_hash: str) -> None:
    batch = [TriageInput.from_record(r, p) for r, p in zip(records, probs)]
    decisions = batch_gate(batch, rc.policy)
    with _open_out(out) as fh:
        if out.endswith(".jsonl"):
            write_decisions_jsonl(fh, decisions)
        else:
            write_decisions_csv(fh, decisions, seed=rc.seed, schema_hash=schema_hash, budget=rc.policy.budget)
    if args.now is not None:
        sweep = timeout_sweep(records, args.now, rc.policy)
        with _open_out(os.path.splitext(out)[0] + "_timeouts.csv") as fh:
            fh.write("id,days_stale,expired\n")
            for s in sweep:
                fh.write(f"{s.id},{s.days_stale:.6f},{int(s.expired)}\n")


def cmd_triage(args, rc: RunConfig) -> None:
    model = _load_model(args.model)
    records = _load_records(args)
    _triage(records, _score(records, model, args, rc), args, rc, args.out, model.schema_hash)


def _eval_config(args, rc: RunConfig) -> EvalConfig:
    return EvalConfig(
        stage=rc.stage,
        splits=tuple(args.split or ("temporal", "repo", "loao")),
        budget=rc.policy.budget,
        labels=rc.labels,
        gbdt=rc.gbdt,
        bootstrap=args.bootstrap,
        seed=rc.seed,
        threads=rc.threads,
        config=args.cfg,
    )


def cmd_evaluate(args, rc: RunConfig) -> None:
    records = _load_records(args)
    evaluate(records, _eval_config(args, rc)).write(args.out)


def cmd_report(args, rc: RunConfig) -> None:
    _require(os.path.join(args.input, "predictions.csv"))
    regenerate_curves(args.input, args.out)


def cmd_pipeline(args, rc: RunConfig) -> None:
    """synth (unless --input is given), featurize, label, train, evaluate, triage."""
    out = args.out
    corpus = args.input or os.path.join(out, "corpus.jsonl")
    if not args.input:
        cmd_synth(replace_ns(args, out=corpus), rc)
    records = _load_records(args, corpus)
    cmd_featurize(replace_ns(args, input=corpus, out=os.path.join(out, "features.csv")), rc)
    cmd_label(replace_ns(args, input=corpus, out=os.path.join(out, "labels.csv")), rc)
    train, test = temporal_split(records)
    model = _train(train, args, rc)
    with _open_out(os.path.join(out, "model.txt")) as fh:
        fh.write(model.dumps())
    evaluate(records, _eval_config(args, rc)).write(os.path.join(out, "report"))
    _triage(test, _score(test, model, args, rc), args, rc, os.path.join(out, "decisions.csv"), model.schema_hash)


def replace_ns(ns: argparse.Namespace, **changes) -> argparse.Namespace:
    copy = argparse.Namespace(**vars(ns))
    for k, v in changes.items():
        setattr(copy, k, v)
    return copy


COMMANDS = {
    "ingest": (cmd_ingest, "validate and normalize a JSONL corpus"),
    "featurize": (cmd_featurize, "write the T0 or T1 feature matrix"),
    "label": (cmd_label, "write effort, high-cost, ghosting and instant-merge labels"),
    "train": (cmd_train, "train the boosted model on a whole corpus"),
    "evaluate": (cmd_evaluate, "run the split protocols and write a report directory"),
    "score": (cmd_score, "score PRs with a saved model"),
    "triage": (cmd_triage, "gate PRs into triage actions"),
    "synth": (cmd_synth, "generate a synthetic corpus"),
    "report": (cmd_report, "rebuild curve CSVs from a report's predictions.csv"),
    "pipeline": (cmd_pipeline, "synth, featurize, label, train, evaluate and triage in one go"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input")
    common.add_argument("--out")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--stage", choices=("t0", "t1"), default="t0")
    common.add_argument("--split", choices=("temporal", "repo", "loao"), action="append")
    common.add_argument("--budget", type=float, default=0.2)
    common.add_argument("--quantile", type=float, default=0.8)
    common.add_argument("--timeout-days", type=float, default=14)
    common.add_argument("--config", help="JSON file overriding pattern tables and vocabularies")
    common.add_argument("--strict", action="store_true", help="fail on the first bad corpus line")
    common.add_argument("--model", help="model file for score and triage")
    common.add_argument("--n", type=int, default=10_000, help="synthetic corpus size")
    common.add_argument("--planted", type=float, help="planted-signal strength for synth")
    common.add_argument("--instant-fraction", type=float, default=0.283)
    common.add_argument("--trees", type=int, default=200)
    common.add_argument("--learning-rate", type=float, default=0.05)
    common.add_argument("--max-depth", type=int, default=6)
    common.add_argument("--min-leaf", type=int, default=20)
    common.add_argument("--bootstrap", type=int, default=1000)
    common.add_argument("--now", type=int, help="unix time for the timeout sweep in triage")

    parser = _Parser(prog="prtriage", description="Effort triage for agent-authored pull requests.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


_NEEDS = {
    "ingest": ("input", "out"),
    "featurize": ("input", "out"),
    "label": ("input", "out"),
    "train": ("input", "out"),
    "evaluate": ("input", "out"),
    "score": ("input", "out", "model"),
    "triage": ("input", "out", "model"),
    "synth": ("out",),
    "report": ("input",),
    "pipeline": ("out",),
}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        missing = [f"--{k}" for k in _NEEDS[args.command] if getattr(args, k) is None]
        if missing:
            raise CliError("usage", EXIT_USAGE, f"{args.command} needs {' '.join(missing)}")
        if args.threads < 1:
            raise CliError("usage", EXIT_USAGE, "--threads must be at least 1")
        if args.config:
            _require(args.config)
        args.cfg = load_config(args.config)
        try:
            rc = _run_config(args)
        except ValueError as exc:
            raise CliError("usage", EXIT_USAGE, str(exc)) from None
        COMMANDS[args.command][0](args, rc)
        return EXIT_OK
    except CliError as exc:
        err = exc
    except SchemaMismatchError as exc:
        err = CliError("schema_mismatch", EXIT_SCHEMA, str(exc))
    except FileNotFoundError as exc:
        err = CliError("missing_file", EXIT_MISSING, f"no such file: {exc.filename}")
    except (CorpusError, ConfigError, TrainingError, DegenerateDataError, ValueError) as exc:
        err = CliError("data", EXIT_DATA, str(exc))
    except Exception as exc:  # noqa: BLE001
        err = CliError("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    print(f"prtriage-error kind={err.kind} exit={err.code} detail={json.dumps(err.detail)}", file=sys.stderr)
    return err.code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
