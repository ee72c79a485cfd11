"""Acceptance suite: one test per criterion, one PASS line each (run -s).

Each criterion checks its stated tolerance and wall-clock budget.
"""

import io
import itertools
import json
import random
import time
from contextlib import contextmanager, redirect_stderr, redirect_stdout

import numpy as np

from evmscan.cfg import build_cfg, dfs_extract
from evmscan.cli import main
from evmscan.disassembler import disassemble, reassemble, render
from evmscan.evaluation import (
    ConfusionCounts,
    holdout_class_split,
    majority_label,
    metrics,
    union_label,
)
from evmscan.features import build_feature_matrix
from evmscan.model import (
    NetworkConfig,
    TrainingConfig,
    backward,
    batch_loss,
    init_params,
    mine_pairs,
    forward,
    pair_weights,
    predict,
    train,
)
from evmscan.opcodes import parse_hex

from helpers import (
    brute_force_tfidf,
    corpus_lines,
    fraction_metrics,
    intra_class_cosine,
    make_blobs,
    random_code,
    recursive_dfs,
    synthetic_cfg,
)


@contextmanager
def criterion(number, name, budget_seconds):
    started = time.perf_counter()
    yield
    elapsed = time.perf_counter() - started
    assert elapsed < budget_seconds, (
        f"criterion {number} took {elapsed:.2f}s, budget {budget_seconds}s"
    )
    print(f"ACCEPTANCE {number:>2} {name}: PASS ({elapsed:.2f}s < {budget_seconds}s)")


def test_01_disassembly_oracle():
    with criterion(1, "disassembly oracle", 1.0):
        listing = disassemble(parse_hex("6060604052"))
        assert render(listing).splitlines() == [
            "0x0 PUSH1 0x60",
            "0x2 PUSH1 0x40",
            "0x4 MSTORE",
        ]
        program = disassemble(parse_hex("60016005036001600501"))
        assert [(i.pc, i.mnemonic) for i in program.instructions] == [
            (0, "PUSH1"),
            (2, "PUSH1"),
            (4, "SUB"),
            (5, "PUSH1"),
            (7, "PUSH1"),
            (9, "ADD"),
        ]


def test_02_reassembly_round_trip():
    with criterion(2, "bytecode round trip x1000", 5.0):
        rng = random.Random(2024)
        for _ in range(1000):
            raw = random_code(rng, 512)
            assert reassemble(disassemble(parse_hex(raw.hex()))) == raw


def test_03_cfg_fixtures():
    with criterion(3, "cfg fixtures", 1.0):
        graph = build_cfg(parse_hex("6001600657005b00"))
        assert sorted(graph.blocks) == [0, 5, 6]
        edges = {
            (pc, succ) for pc, b in graph.blocks.items() for succ in b.successors
        }
        assert edges == {(0, 5), (0, 6)}
        assert graph.unresolved_count == 0

        graph = build_cfg(parse_hex("3456"))
        assert graph.unresolved_count == 1
        assert graph.edge_count == 0


def test_04_dfs_oracle():
    with criterion(4, "dfs vs recursive oracle x200", 5.0):
        rng = random.Random(4040)
        for _ in range(200):
            graph = synthetic_cfg(rng, max_blocks=20, dag=True)
            assert dfs_extract(graph).mnemonics == recursive_dfs(graph)


def test_05_tfidf_oracle():
    with criterion(5, "tf-idf brute-force oracle x50", 5.0):
        rng = random.Random(5050)
        names = ["ADD", "MUL", "PUSH1", "PUSH2", "SWAP1", "MSTORE", "POP", "JUMP"]
        for _ in range(50):
            docs = [
                [rng.choice(names) for _ in range(rng.randint(1, 10))]
                for _ in range(rng.randint(1, 5))
            ]
            vocab, matrix = build_feature_matrix(docs)
            oracle_cols, oracle_rows = brute_force_tfidf(docs, (1, 2))
            assert vocab.columns() == oracle_cols
            assert np.abs(matrix.rows - oracle_rows).max() <= 1e-12


def _gradient_case(seed):
    # Finite differences need smooth, well-conditioned surroundings: stay
    # clear of ReLU kinks and of near-zero embeddings (the cosine term's
    # curvature grows like 1/norm^3 there and drowns a fixed-step check).
    for attempt in range(200):
        rng = np.random.default_rng(900_001 * seed + 6007 * attempt + 3)
        d = int(rng.integers(2, 7))
        w = int(rng.integers(2, 6))
        n = int(rng.integers(4, 9))
        net = NetworkConfig(input_dim=d, hidden_width=w, hidden_layers=5)
        params = init_params(net, int(rng.integers(0, 2**31)))
        X = rng.normal(0.0, 1.0, size=(n, d))
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        from evmscan.model import _forward_cached

        activations, pre_activations, _ = _forward_cached(params, X)
        if min(np.abs(z).min() for z in pre_activations) < 1e-3:
            continue
        if np.linalg.norm(activations[-1], axis=1).min() < 0.3:
            continue
        return params, X, y
    raise RuntimeError(f"no usable gradient case for seed {seed}")


def test_06_gradient_check():
    with criterion(6, "gradient check x100", 60.0):
        config = TrainingConfig(
            contrast_weight=0.8, scale_pos=2.0, scale_neg=40.0, threshold=0.5
        )
        step = 1e-5
        for seed in range(100):
            params, X, y = _gradient_case(seed)
            pairs = mine_pairs(forward(params, X)[0], y, config.margin)
            analytic, _, _ = backward(params, X, y, config, pairs)
            for layer, (gw, gb) in zip(params.layers, analytic):
                for array, grad in ((layer.w, gw), (layer.b, gb)):
                    for idx in np.ndindex(*array.shape):
                        orig = array[idx]
                        array[idx] = orig + step
                        hi = batch_loss(params, X, y, config, pairs).total
                        array[idx] = orig - step
                        lo = batch_loss(params, X, y, config, pairs).total
                        array[idx] = orig
                        numeric = (hi - lo) / (2 * step)
                        denom = max(abs(grad[idx]) + abs(numeric), 1e-6)
                        assert abs(grad[idx] - numeric) / denom < 1e-4


def test_07_pair_weight_spot_values():
    with criterion(7, "pair-weight spot values", 1.0):
        wp, _ = pair_weights([0.5], [], 2.0, 40.0, 0.5)
        assert abs(wp[0] - 0.5) <= 1e-12
        rng = np.random.default_rng(7007)
        for _ in range(100):
            pos = np.sort(rng.uniform(-1, 1, size=rng.integers(2, 9)))
            neg = np.sort(rng.uniform(-1, 1, size=rng.integers(2, 9)))
            wp, wn = pair_weights(pos, neg, 2.0, 40.0, 0.5)
            assert (np.diff(wp) < 0).all()  # decreasing in similarity
            assert (np.diff(wn) > 0).all()  # increasing in similarity


def test_08_synthetic_training():
    with criterion(8, "synthetic training at defaults", 120.0):
        X, y = make_blobs(400, 20, seed=42)
        cut = 320
        net = NetworkConfig(input_dim=20)
        cfg = TrainingConfig(epochs=100, seed=7)
        params, _ = train(X[:cut], y[:cut], net, cfg)
        train_acc = (predict(params, X[:cut])[0] == y[:cut]).mean()
        test_acc = (predict(params, X[cut:])[0] == y[cut:]).mean()
        assert train_acc >= 0.99
        assert test_acc >= 0.95
        _, _, before = predict(init_params(net, cfg.seed), X[:cut])
        _, _, after = predict(params, X[:cut])
        assert intra_class_cosine(after, y[:cut]) > intra_class_cosine(before, y[:cut])


def test_09_ablation_direction():
    with criterion(9, "pair-loss ablation direction", 240.0):
        X, y = make_blobs(400, 20, seed=42)
        net = NetworkConfig(input_dim=20)
        with_pairs, _ = train(X, y, net, TrainingConfig(epochs=100, seed=7, contrast_weight=0.8))
        ce_only, _ = train(X, y, net, TrainingConfig(epochs=100, seed=7, contrast_weight=0.0))
        cos_with = intra_class_cosine(predict(with_pairs, X)[2], y)
        cos_ce = intra_class_cosine(predict(ce_only, X)[2], y)
        assert cos_with >= cos_ce


def test_10_metrics_oracle():
    with criterion(10, "metrics rational oracle x20", 1.0):
        cases = [
            (1, 1, 1, 1), (3, 0, 5, 0), (0, 0, 4, 2), (0, 4, 0, 2), (2, 0, 0, 0),
            (0, 0, 3, 0), (0, 0, 0, 3), (5, 2, 7, 1), (1, 2, 3, 4), (4, 3, 2, 1),
            (10, 0, 0, 10), (0, 10, 10, 0), (7, 7, 7, 7), (1, 0, 99, 0), (99, 1, 0, 0),
            (2, 5, 11, 3), (6, 1, 1, 6), (8, 8, 1, 1), (1, 1, 8, 8), (13, 2, 17, 5),
        ]
        assert len(cases) == 20
        for tp, fp, tn, fn in cases:
            report = metrics(ConfusionCounts(tp, fp, tn, fn))
            for name, exact in fraction_metrics(tp, fp, tn, fn).items():
                assert abs(getattr(report, name) - float(exact)) <= 1e-12


def test_11_voting_truth_table():
    with criterion(11, "voting truth table", 1.0):
        for flags in itertools.product((False, True), repeat=3):
            assert majority_label(flags) == (1 if sum(flags) >= 2 else 0)
            assert union_label(flags) == (1 if sum(flags) >= 1 else 0)


class _Tagged:
    __slots__ = ("label", "category")

    def __init__(self, label, category=None):
        self.label = label
        self.category = category


def test_12_holdout_protocol(tmp_path):
    with criterion(12, "holdout protocol", 30.0):
        rng = random.Random(1212)
        categories = ["reentrancy", "overflow", "txorder", "timestamp"]
        for trial in range(50):
            records = [_Tagged(0) for _ in range(rng.randint(12, 40))]
            for category in categories:
                records += [_Tagged(1, category) for _ in range(rng.randint(4, 12))]
            rng.shuffle(records)
            held_out = rng.choice(categories)
            train_split, test_split = holdout_class_split(
                records, held_out,
                train_benign=6, train_positive=6, test_benign=4, test_positive=3,
                seed=trial,
            )
            assert sum(1 for r in train_split if r.category == held_out) == 0
            assert all(r.category == held_out for r in test_split if r.label == 1)

        # End-to-end harness on a synthetic multi-category corpus.
        corpus = tmp_path / "tagged.jsonl"
        corpus.write_text(
            "\n".join(corpus_lines(40, seed=23, categories=("reentrancy", "overflow", "txorder")))
            + "\n"
        )
        out = io.StringIO()
        err = io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(
                ["evaluate", str(corpus),
                 "--holdout-category", "reentrancy",
                 "--train-benign", "12", "--train-vuln", "9",
                 "--test-benign", "6", "--test-vuln", "4",
                 "--epochs", "5", "--learning-rate", "0.005", "--hidden-width", "16"]
            )
        assert code == 0
        payload = json.loads(out.getvalue())
        for field in ("accuracy", "precision", "recall", "f1", "weighted_f1",
                      "tpr", "fnr", "tnr", "fpr", "counts"):
            assert field in payload


def _run_pipeline(workdir, corpus):
    matrix = workdir / "matrix.txt"
    vocab = workdir / "vocab.json"
    labels = workdir / "labels.txt"
    model = workdir / "model.json"
    history = workdir / "history.csv"
    report = workdir / "report.json"
    out = io.StringIO()
    err = io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        assert main(["featurize", str(corpus), "--out", str(matrix),
                     "--vocab", str(vocab), "--labels-out", str(labels)]) == 0
        assert main(["train", str(matrix), str(vocab), str(labels),
                     "--model", str(model), "--history", str(history),
                     "--epochs", "5", "--learning-rate", "0.005",
                     "--hidden-width", "64", "--seed", "0"]) == 0
        out.truncate(0)
        out.seek(0)
        assert main(["predict", str(model), "--vocab", str(vocab),
                     "--corpus", str(corpus)]) == 0
        predictions = [line.split()[:3] for line in out.getvalue().splitlines()]
        out.truncate(0)
        out.seek(0)
        assert main(["evaluate", str(corpus), "--model", str(model),
                     "--vocab", str(vocab), "--report", str(report)]) == 0
    files = {p.name: p.read_bytes() for p in (matrix, vocab, labels, model, history, report)}
    return files, predictions


def test_13_end_to_end_smoke(tmp_path):
    with criterion(13, "end-to-end smoke, deterministic", 60.0):
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text("\n".join(corpus_lines(40, seed=17)) + "\n")
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        dir_a.mkdir()
        dir_b.mkdir()
        files_a, predictions_a = _run_pipeline(dir_a, corpus)
        files_b, predictions_b = _run_pipeline(dir_b, corpus)
        assert predictions_a == predictions_b
        assert len(predictions_a) == 40
        for name in files_a:
            assert files_a[name] == files_b[name], f"{name} differs between runs"
