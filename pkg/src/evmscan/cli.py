"""Command-line front end: disasm, cfg, featurize, train, predict, evaluate.

Data goes to stdout, diagnostics to stderr.  Exit codes: 0 ok, 2 input
parse, 3 I/O, 4 dataset, 5 model/vocab mismatch, 64 usage.  Settings
resolve as flags over config file over defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import cfg as cfg_mod
from . import evaluation, features, ingestion, model
from .opcodes import Bytecode, MalformedHexError, parse_hex

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_MODEL_MISMATCH = 5
EXIT_USAGE = 64

_NETWORK_FIELDS = ("hidden_width", "hidden_layers")
_TRAINING_FIELDS = (
    "epochs",
    "learning_rate",
    "momentum",
    "contrast_weight",
    "scale_pos",
    "scale_neg",
    "threshold",
    "margin",
    "batch_size",
    "seed",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_hex_input(arg: str) -> Bytecode:
    """Treat the argument as a file path when one exists, else as hex text.

    File contents may be line-wrapped; all whitespace is ignored.
    """
    if arg and os.path.isfile(arg):
        with open(arg, "r", encoding="ascii") as fh:
            arg = "".join(fh.read().split())
    return parse_hex(arg)


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _pick(args, file_cfg: dict, section: str, name: str, default):
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if section in file_cfg and name in file_cfg[section]:
        return file_cfg[section][name]
    return default


def _resolve_training(args, file_cfg) -> model.TrainingConfig:
    defaults = model.TrainingConfig()
    values = {
        name: _pick(args, file_cfg, "training", name, getattr(defaults, name))
        for name in _TRAINING_FIELDS
    }
    return model.TrainingConfig(**values)


def _resolve_network(args, file_cfg, input_dim: int) -> model.NetworkConfig:
    defaults = model.NetworkConfig(input_dim=input_dim)
    values = {
        name: _pick(args, file_cfg, "network", name, getattr(defaults, name))
        for name in _NETWORK_FIELDS
    }
    return model.NetworkConfig(input_dim=input_dim, **values)


def _resolve_orders(args, file_cfg) -> tuple[int, ...]:
    raw = _pick(args, file_cfg, "features", "orders", None)
    if raw is None:
        return features.DEFAULT_ORDERS
    if isinstance(raw, str):
        raw = [part for part in raw.split(",") if part]
    return tuple(int(n) for n in raw)


def _resolve_path(args, file_cfg, name: str, key: str, required: bool = True):
    """Flag value, else [paths] entry from the config file."""
    value = getattr(args, name, None)
    if value is None:
        value = file_cfg.get("paths", {}).get(key)
    if value is None and required:
        raise ValueError(
            f"missing {key} path: pass the flag or set [paths].{key} in the config file"
        )
    return value


def _echo_config(network: model.NetworkConfig | None, training: model.TrainingConfig) -> None:
    if network is not None:
        print(
            f"network: input_dim={network.input_dim} hidden_width={network.hidden_width} "
            f"hidden_layers={network.hidden_layers} output_classes={network.output_classes}",
            file=sys.stderr,
        )
    print(
        "training: "
        + " ".join(f"{name}={getattr(training, name)}" for name in _TRAINING_FIELDS),
        file=sys.stderr,
    )


def _parallel_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load_labeled_corpus(path, voting: str):
    records, issues = ingestion.load_jsonl(path)
    for issue in issues:
        print(f"{path}:{issue.line_no}: {issue.message}", file=sys.stderr)
    return ingestion.attach_labels(records, voting)


def _analyze_records(records, jobs: int):
    """Opcode sequences plus per-contract analysis seconds, input order kept."""

    def one(record):
        started = time.perf_counter()
        sequence = cfg_mod.opcode_sequence(record.bytecode)
        return sequence, time.perf_counter() - started

    results = _parallel_map(one, records, jobs)
    return [r[0] for r in results], [r[1] for r in results]


def _load_vocab_file(path):
    """Vocabulary or IntegerEncoding, distinguished by their JSON shape."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    payload = json.loads(text)
    if "features" in payload:
        return features.Vocabulary.from_json(text)
    if "mapping" in payload:
        return features.IntegerEncoding.from_json(text)
    raise ValueError(f"{path} is neither a vocabulary nor an integer encoding")


def _encode_rows(sequences, encoder_state, jobs: int):
    """Feature rows plus per-contract encode seconds."""
    if isinstance(encoder_state, features.Vocabulary):
        orders = tuple(sorted({len(g) for g in encoder_state.index})) or features.DEFAULT_ORDERS

        def one(sequence):
            started = time.perf_counter()
            row = features.tfidf_encode(
                features.extract_ngrams(sequence, orders), encoder_state
            )
            return row, time.perf_counter() - started

    else:

        def one(sequence):
            started = time.perf_counter()
            row = features.integer_encode(sequence, encoder_state).astype(np.float64)
            return row, time.perf_counter() - started

    results = _parallel_map(one, sequences, jobs)
    width = len(results[0][0]) if results else 0
    rows = np.zeros((len(results), width), dtype=np.float64)
    for i, (row, _) in enumerate(results):
        rows[i] = row
    return rows, [r[1] for r in results]


def cmd_disasm(args) -> int:
    listing = cfg_mod.disassemble(_read_hex_input(args.input))
    from .disassembler import render

    text = render(listing)
    if text:
        print(text)
    return EXIT_OK


def cmd_cfg(args) -> int:
    graph = cfg_mod.build_cfg(_read_hex_input(args.input))
    print(
        f"{len(graph.blocks)} blocks, {graph.edge_count} edges, "
        f"{graph.unresolved_count} unresolved"
    )
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(cfg_mod.to_dot(graph))
            fh.write("\n")
    return EXIT_OK


def cmd_featurize(args) -> int:
    file_cfg = _load_config_file(args.config)
    corpus_path = _resolve_path(args, file_cfg, "corpus", "corpus")
    out_path = _resolve_path(args, file_cfg, "out", "matrix")
    vocab_path = _resolve_path(args, file_cfg, "vocab", "vocabulary")
    records, issues = ingestion.load_jsonl(corpus_path)
    for issue in issues:
        print(f"{corpus_path}:{issue.line_no}: {issue.message}", file=sys.stderr)
    if args.dedup:
        records, removed = ingestion.dedup(records)
        print(f"removed {removed} duplicate contracts", file=sys.stderr)
    if args.voting != "given" or all(r.label is not None for r in records):
        records = ingestion.attach_labels(records, args.voting)
    if not records:
        raise features.EmptyCorpusError(f"no records in {corpus_path}")

    sequences, _ = _analyze_records(records, args.jobs)

    if args.encoder == "integer":
        length = _pick(args, file_cfg, "features", "length", features.DEFAULT_INTEGER_LENGTH)
        encoding = features.build_integer_encoding(sequences, length=int(length))
        rows = np.zeros((len(sequences), encoding.length), dtype=np.float64)
        for i, sequence in enumerate(sequences):
            rows[i] = features.integer_encode(sequence, encoding)
        vocab_text = encoding.to_json()
    else:
        orders = (1,) if args.encoder == "unigram_tfidf" else _resolve_orders(args, file_cfg)
        min_df = int(_pick(args, file_cfg, "features", "min_df", 1))
        vocabulary, matrix = features.build_feature_matrix(
            sequences, orders=orders, min_df=min_df
        )
        rows = matrix.rows
        vocab_text = vocabulary.to_json()

    features.save_matrix(rows, out_path)
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write(vocab_text)
    if args.labels_out:
        missing = [r.source_id for r in records if r.label is None]
        if missing:
            raise ingestion.MissingLabelsError(f"records without labels: {missing}")
        with open(args.labels_out, "w", encoding="ascii") as fh:
            for record in records:
                fh.write(f"{record.label}\n")
    if args.ids_out:
        with open(args.ids_out, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(f"{record.source_id}\n")
    print(f"{rows.shape[0]} contracts x {rows.shape[1]} features", file=sys.stderr)
    return EXIT_OK


def _load_labels_file(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        values = [int(line.strip()) for line in fh if line.strip()]
    return np.asarray(values, dtype=np.int64)


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    model_path = _resolve_path(args, file_cfg, "model", "model")
    history_path = _resolve_path(args, file_cfg, "history", "history", required=False)
    X = features.load_matrix(args.matrix)
    y = _load_labels_file(args.labels)
    training = _resolve_training(args, file_cfg)
    network = _resolve_network(args, file_cfg, input_dim=X.shape[1] if X.shape[1] else 1)
    _echo_config(network, training)
    params, history = model.train(X, y, network, training)
    model.save_model(model_path, params, network, training, model.vocab_file_hash(args.vocab))
    if history_path:
        with open(history_path, "w", encoding="ascii") as fh:
            fh.write("epoch,loss,cross_entropy,contrastive\n")
            for epoch, parts in enumerate(history):
                fh.write(
                    f"{epoch},{parts.total!r},{parts.cross_entropy!r},{parts.contrastive!r}\n"
                )
    print(f"trained {len(history)} epochs, model written to {model_path}", file=sys.stderr)
    return EXIT_OK


def _predict_rows(saved: model.SavedModel, rows: np.ndarray):
    """Per-row predictions with per-row forward-pass seconds."""
    labels = []
    probs = []
    seconds = []
    for row in rows:
        started = time.perf_counter()
        _, p, _ = model.predict(saved.params, row.reshape(1, -1))
        seconds.append(time.perf_counter() - started)
        labels.append(int(p.argmax(axis=1)[0]))
        probs.append(float(p[0, 1]))
    return labels, probs, seconds


def cmd_predict(args) -> int:
    file_cfg = _load_config_file(args.config)
    vocab_path = _resolve_path(args, file_cfg, "vocab", "vocabulary")
    saved = model.load_model(args.model)
    model.check_vocab_hash(saved, vocab_path)
    encoder_state = _load_vocab_file(vocab_path)

    if args.hex is not None:
        records = [
            ingestion.ContractRecord(source_id="input", bytecode=_read_hex_input(args.hex))
        ]
    else:
        records, issues = ingestion.load_jsonl(args.corpus)
        for issue in issues:
            print(f"{args.corpus}:{issue.line_no}: {issue.message}", file=sys.stderr)
    if not records:
        raise features.EmptyCorpusError("nothing to predict")

    sequences, analysis_s = _analyze_records(records, args.jobs)
    rows, encode_s = _encode_rows(sequences, encoder_state, args.jobs)
    labels, probs, predict_s = _predict_rows(saved, rows)

    for record, label, prob, ta, te, tp in zip(
        records, labels, probs, analysis_s, encode_s, predict_s
    ):
        print(f"{record.source_id} {label} {prob:.6f} {ta:.6f} {te:.6f} {tp:.6f}")
    if len(records) > 1:
        report = evaluation.timing_report(list(zip(analysis_s, encode_s, predict_s)))
        print(report.to_table(), file=sys.stderr)
    return EXIT_OK


def _evaluate_records(saved, encoder_state, records, jobs: int, with_timing: bool):
    sequences, analysis_s = _analyze_records(records, jobs)
    rows, encode_s = _encode_rows(sequences, encoder_state, jobs)
    labels, _, predict_s = _predict_rows(saved, rows)
    truth = np.asarray([r.label for r in records], dtype=np.int64)
    counts = evaluation.confusion(np.asarray(labels), truth)
    timing = None
    if with_timing:
        timing = evaluation.timing_report(list(zip(analysis_s, encode_s, predict_s)))
    report = evaluation.metrics(
        counts, avg_detection_seconds=timing.total_mean if timing else None
    )
    return report, timing


def cmd_evaluate(args) -> int:
    file_cfg = _load_config_file(args.config)
    corpus_path = _resolve_path(args, file_cfg, "corpus", "corpus")
    report_path = _resolve_path(args, file_cfg, "report", "report", required=False)
    records = _load_labeled_corpus(corpus_path, args.voting)

    if args.holdout_category:
        for flag in ("train_benign", "train_vuln", "test_benign", "test_vuln"):
            if getattr(args, flag) is None:
                raise ValueError(f"--holdout-category requires --{flag.replace('_', '-')}")
        training = _resolve_training(args, file_cfg)
        train_records, test_records = evaluation.holdout_class_split(
            records,
            args.holdout_category,
            train_benign=args.train_benign,
            train_positive=args.train_vuln,
            test_benign=args.test_benign,
            test_positive=args.test_vuln,
            seed=training.seed,
        )
        orders = _resolve_orders(args, file_cfg)
        train_sequences, _ = _analyze_records(train_records, args.jobs)
        vocabulary, matrix = features.build_feature_matrix(
            train_sequences,
            labels=[r.label for r in train_records],
            orders=orders,
            min_df=int(_pick(args, file_cfg, "features", "min_df", 1)),
        )
        network = _resolve_network(args, file_cfg, input_dim=max(vocabulary.width, 1))
        _echo_config(network, training)
        params, _ = model.train(matrix.rows, matrix.labels, network, training)
        saved = model.SavedModel(params, network, training, vocab_hash="")
        report, timing = _evaluate_records(
            saved, vocabulary, test_records, args.jobs, args.timing
        )
    else:
        model_path = _resolve_path(args, file_cfg, "model", "model")
        vocab_path = _resolve_path(args, file_cfg, "vocab", "vocabulary")
        saved = model.load_model(model_path)
        model.check_vocab_hash(saved, vocab_path)
        encoder_state = _load_vocab_file(vocab_path)
        report, timing = _evaluate_records(
            saved, encoder_state, records, args.jobs, args.timing
        )

    print(report.to_json(), end="")
    print(report.to_table(), file=sys.stderr)
    if timing is not None:
        print(timing.to_table(), file=sys.stderr)
    if report_path:
        with open(report_path, "w", encoding="ascii") as fh:
            fh.write(report.to_json())
    return EXIT_OK


def _add_training_flags(sub) -> None:
    sub.add_argument("--epochs", type=int, help="training epochs (default: 300)")
    sub.add_argument("--learning-rate", dest="learning_rate", type=float,
                     help="SGD learning rate (default: 0.02)")
    sub.add_argument("--momentum", type=float, help="SGD momentum (default: 0.9)")
    sub.add_argument("--contrast-weight", dest="contrast_weight", type=float,
                     help="weight of the pair loss in the objective (default: 0.8)")
    sub.add_argument("--scale-pos", dest="scale_pos", type=float,
                     help="positive-pair scaling (default: 2)")
    sub.add_argument("--scale-neg", dest="scale_neg", type=float,
                     help="negative-pair scaling (default: 40)")
    sub.add_argument("--threshold", type=float,
                     help="similarity threshold between classes (default: 0.5)")
    sub.add_argument("--margin", type=float, help="pair-mining margin (default: 0.1)")
    sub.add_argument("--batch-size", dest="batch_size", type=int,
                     help="mini-batch size (default: 64)")
    sub.add_argument("--seed", type=int, help="RNG seed (default: 0)")
    sub.add_argument("--hidden-width", dest="hidden_width", type=int,
                     help="units per hidden layer (default: 512)")
    sub.add_argument("--hidden-layers", dest="hidden_layers", type=int,
                     help="number of hidden layers (default: 5)")
    sub.add_argument("--config", help="TOML config file (flags override it)")


def build_parser() -> _Parser:
    parser = _Parser(prog="evmscan", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("disasm", help="disassemble hex bytecode to a listing")
    p.add_argument("input", help="hex string or path to a hex file")
    p.set_defaults(func=cmd_disasm)

    p = commands.add_parser("cfg", help="recover the control flow graph")
    p.add_argument("input", help="hex string or path to a hex file")
    p.add_argument("--dot", help="write the graph as DOT to this path")
    p.set_defaults(func=cmd_cfg)

    p = commands.add_parser("featurize", help="encode a JSONL corpus into a feature matrix")
    p.add_argument("corpus", nargs="?", help="JSONL corpus path (or [paths].corpus)")
    p.add_argument("--encoder", choices=("ngram_tfidf", "unigram_tfidf", "integer"),
                   default="ngram_tfidf", help="feature encoder (default: ngram_tfidf)")
    p.add_argument("--out", help="matrix output path (or [paths].matrix)")
    p.add_argument("--vocab", help="vocabulary output path (or [paths].vocabulary)")
    p.add_argument("--labels-out", dest="labels_out", help="write one label per row here")
    p.add_argument("--ids-out", dest="ids_out", help="write one contract id per row here")
    p.add_argument("--orders", help="comma-separated n-gram orders (default: 1,2)")
    p.add_argument("--min-df", dest="min_df", type=int,
                   help="drop grams seen in fewer contracts (default: 1)")
    p.add_argument("--length", type=int,
                   help="integer-encoder vector length (default: 2048)")
    p.add_argument("--voting", choices=("given", "majority", "union"), default="given",
                   help="label source (default: given)")
    p.add_argument("--dedup", action="store_true", help="drop exact-bytecode duplicates")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default: 1)")
    p.add_argument("--config", help="TOML config file (flags override it)")
    p.set_defaults(func=cmd_featurize)

    p = commands.add_parser("train", help="train the classifier on a feature matrix")
    p.add_argument("matrix", help="feature matrix path")
    p.add_argument("vocab", help="vocabulary path (hash is recorded in the model)")
    p.add_argument("labels", help="labels file, one 0/1 per row")
    p.add_argument("--model", help="model output path (or [paths].model)")
    p.add_argument("--history", help="per-epoch loss CSV output path (or [paths].history)")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("predict", help="classify contracts with a trained model")
    p.add_argument("model", help="model file path")
    p.add_argument("--vocab", help="vocabulary used at training time (or [paths].vocabulary)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--hex", help="single contract as hex (or hex file path)")
    group.add_argument("--corpus", help="JSONL corpus path")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default: 1)")
    p.add_argument("--config", help="TOML config file (flags override it)")
    p.set_defaults(func=cmd_predict)

    p = commands.add_parser("evaluate", help="score a model against a labeled corpus")
    p.add_argument("corpus", nargs="?", help="labeled JSONL corpus path (or [paths].corpus)")
    p.add_argument("--model", help="model file path (or [paths].model)")
    p.add_argument("--vocab", help="vocabulary used at training time (or [paths].vocabulary)")
    p.add_argument("--voting", choices=("given", "majority", "union"), default="given",
                   help="label source (default: given)")
    p.add_argument("--report", help="write the JSON report here as well (or [paths].report)")
    p.add_argument("--timing", action="store_true",
                   help="include wall-clock detection timing in the report")
    p.add_argument("--holdout-category", dest="holdout_category",
                   help="train without this vulnerability category, test only on it")
    p.add_argument("--train-benign", dest="train_benign", type=int,
                   help="benign records in the holdout training split")
    p.add_argument("--train-vuln", dest="train_vuln", type=int,
                   help="vulnerable records in the holdout training split")
    p.add_argument("--test-benign", dest="test_benign", type=int,
                   help="benign records in the holdout test split")
    p.add_argument("--test-vuln", dest="test_vuln", type=int,
                   help="held-out vulnerable records in the test split")
    p.add_argument("--orders", help="comma-separated n-gram orders (default: 1,2)")
    p.add_argument("--min-df", dest="min_df", type=int,
                   help="drop grams seen in fewer contracts (default: 1)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default: 1)")
    _add_training_flags(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


_PARSE_ERRORS = (
    MalformedHexError,
    ingestion.CorpusParseError,
    json.JSONDecodeError,
    UnicodeDecodeError,
)
_DATA_ERRORS = (
    model.SingleClassDatasetError,
    model.EmptyDatasetError,
    model.DimensionMismatchError,
    features.EmptyCorpusError,
    features.LabelLengthMismatchError,
    features.UnknownMnemonicError,
    evaluation.EmptyDatasetError,
    evaluation.EmptyEvaluationError,
    evaluation.KTooLargeError,
    evaluation.InsufficientSamplesError,
    evaluation.EmptyMeasurementsError,
    ingestion.MissingLabelsError,
    ingestion.MissingVerdictsError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except model.VocabularyMismatchError as exc:
        print(f"evmscan: {exc}", file=sys.stderr)
        return EXIT_MODEL_MISMATCH
    except _DATA_ERRORS as exc:
        print(f"evmscan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _PARSE_ERRORS as exc:
        print(f"evmscan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"evmscan: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"evmscan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
