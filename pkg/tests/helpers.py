"""Shared test utilities: synthetic data, independent oracles."""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from fractions import Fraction

import numpy as np

from evmscan.cfg import BasicBlock, ControlFlowGraph
from evmscan.disassembler import Instruction
from evmscan.opcodes import OpcodeKind, OpcodeSpec, lookup_opcode

# Byte values with no immediate, for random non-truncated code.
_NO_IMMEDIATE = [b for b in range(256) if lookup_opcode(b).immediate_len == 0]


def random_code(rng: random.Random, max_len: int = 512) -> bytes:
    """Random decodable bytecode that never ends in a partial immediate."""
    target = rng.randint(0, max_len)
    out = bytearray()
    while len(out) < target:
        byte = rng.randrange(256)
        spec = lookup_opcode(byte)
        if len(out) + 1 + spec.immediate_len > target:
            byte = rng.choice(_NO_IMMEDIATE)
            out.append(byte)
            continue
        out.append(byte)
        out.extend(rng.randrange(256) for _ in range(spec.immediate_len))
    return bytes(out)


def synthetic_cfg(rng: random.Random, max_blocks: int = 20, dag: bool = True) -> ControlFlowGraph:
    """Hand-assembled graph with one uniquely named mnemonic per block."""
    n = rng.randint(1, max_blocks)
    pcs = list(range(0, n * 2, 2))
    blocks = {}
    for i, pc in enumerate(pcs):
        ins = Instruction(pc, OpcodeSpec(0, f"OP{i}", 0, OpcodeKind.OTHER))
        candidates = pcs[i + 1 :] if dag else [p for p in pcs if p != pc]
        k = min(len(candidates), rng.randint(0, 3))
        succ = frozenset(rng.sample(candidates, k=k))
        blocks[pc] = BasicBlock(pc, (ins,), succ)
    return ControlFlowGraph(blocks, entry=0)


def recursive_dfs(cfg: ControlFlowGraph) -> tuple[str, ...]:
    """Independent traversal oracle: recursion, descending successor order."""
    visited: set[int] = set()
    out: list[str] = []

    def visit(pc: int) -> None:
        visited.add(pc)
        out.extend(i.spec.mnemonic for i in cfg.blocks[pc].instructions)
        for succ in sorted(cfg.blocks[pc].successors, reverse=True):
            if succ not in visited:
                visit(succ)

    visit(cfg.entry)
    return tuple(out)


def brute_force_tfidf(token_lists, orders) -> tuple[list[tuple[str, ...]], np.ndarray]:
    """Recompute the feature matrix directly from the declared formulas."""
    per_doc = []
    for tokens in token_lists:
        counts = Counter()
        for n in orders:
            for i in range(len(tokens) - n + 1):
                counts[tuple(tokens[i : i + n])] += 1
        per_doc.append(counts)
    vocab = sorted({g for c in per_doc for g in c}, key=lambda g: (len(g), g))
    n_docs = len(per_doc)
    df = {g: sum(1 for c in per_doc if g in c) for g in vocab}
    rows = np.zeros((n_docs, len(vocab)))
    for i, counts in enumerate(per_doc):
        for j, gram in enumerate(vocab):
            if gram in counts:
                idf = math.log((1 + n_docs) / (1 + df[gram])) + 1.0
                rows[i, j] = counts[gram] * idf
    return vocab, rows


def fraction_metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, Fraction]:
    """Exact rational recomputation of every report field."""

    def ratio(num, den):
        return Fraction(num, den) if den else Fraction(0)

    total = tp + fp + tn + fn
    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = ratio(2 * precision * recall, precision + recall) if precision + recall else Fraction(0)
    precision0 = ratio(tn, tn + fn)
    recall0 = ratio(tn, tn + fp)
    f1_0 = (
        ratio(2 * precision0 * recall0, precision0 + recall0)
        if precision0 + recall0
        else Fraction(0)
    )
    tnr = ratio(tn, tn + fp)
    return {
        "accuracy": ratio(tp + tn, total),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "weighted_f1": ratio((tp + fn) * f1 + (tn + fp) * f1_0, total),
        "tpr": recall,
        "fnr": Fraction(1) - recall if tp + fn else Fraction(0),
        "tnr": tnr,
        "fpr": Fraction(1) - tnr if tn + fp else Fraction(0),
    }


def make_blobs(n: int, d: int, seed: int, sep: float = 1.0, noise: float = 0.15):
    """Two linearly separable Gaussian blobs around unit-norm centers."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    c0 = rng.normal(0.0, 1.0, size=d)
    c0 /= np.linalg.norm(c0)
    c1 = rng.normal(0.0, 1.0, size=d)
    c1 /= np.linalg.norm(c1)
    X = np.where(y[:, None] == 0, c0 * sep, c1 * sep) + rng.normal(0.0, noise, size=(n, d))
    return X, y


def intra_class_cosine(embeddings: np.ndarray, labels) -> float:
    """Mean cosine similarity over all unordered same-label pairs."""
    y = np.asarray(labels)
    norms = np.linalg.norm(embeddings, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = embeddings / safe[:, None]
    S = unit @ unit.T
    values = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            continue
        sub = S[np.ix_(idx, idx)]
        values.append(sub[np.triu_indices(len(idx), k=1)])
    return float(np.mean(np.concatenate(values)))


# --- synthetic contract corpus -------------------------------------------

def benign_hex(rng: random.Random, tag: int) -> str:
    # PUSH1 1; PUSH1 6; JUMPI; STOP; JUMPDEST; PUSH2 tag; POP; arithmetic; STOP
    body = [0x61, (tag >> 8) & 0xFF, tag & 0xFF, 0x50]
    for _ in range(rng.randint(2, 6)):
        body += [0x60, rng.randrange(256), 0x60, rng.randrange(256), 0x01]
        body += [0x60, rng.randrange(256), 0x52]
    return bytes([0x60, 0x01, 0x60, 0x06, 0x57, 0x00, 0x5B] + body + [0x00]).hex()


def vuln_hex(rng: random.Random, tag: int) -> str:
    # CALLVALUE; PUSH1 5; JUMPI; STOP; JUMPDEST; PUSH2 tag; POP; storage churn;
    # CALLVALUE; SELFDESTRUCT
    body = [0x61, (tag >> 8) & 0xFF, tag & 0xFF, 0x50]
    for _ in range(rng.randint(2, 6)):
        body += [0x34, 0x60, rng.randrange(256), 0x55]
        body += [0x60, rng.randrange(256), 0x54, 0x50]
    return bytes([0x34, 0x60, 0x05, 0x57, 0x00, 0x5B] + body + [0x34, 0xFF]).hex()


def corpus_lines(
    n: int,
    seed: int,
    with_verdicts: bool = False,
    categories: tuple[str, ...] = (),
) -> list[str]:
    """JSONL lines for a half-benign/half-vulnerable synthetic corpus."""
    rng = random.Random(seed)
    lines = []
    for i in range(n):
        label = i % 2
        code = vuln_hex(rng, i) if label else benign_hex(rng, i)
        obj: dict = {"id": f"c{i:04d}", "bytecode": code, "label": label}
        if with_verdicts:
            flags = [label == 1, label == 1, rng.random() < (0.8 if label else 0.1)]
            obj["verdicts"] = flags
        if categories and label == 1:
            obj["category"] = categories[i % len(categories)]
        lines.append(json.dumps(obj))
    return lines
