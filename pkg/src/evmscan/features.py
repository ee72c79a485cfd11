"""Opcode-sequence encoders: n-gram counting, corpus-frequency weighting
and fixed-length integer sequences.

The main route counts unigram/bigram windows over each contract's opcode
sequence and weighs them by tf-idf over the corpus: entry = count *
(ln((1+N)/(1+df)) + 1), with no row normalization.  The smoothed form is
never zero, so an entry is zero exactly when the contract lacks the
feature.  Column order is fixed (order, then gram tuple) so matrices are
reproducible byte for byte.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .base import BaseEstimator, check_fitted
from .cfg import opcode_sequence
from .opcodes import Bytecode, parse_hex
from .validation import check_consistent_length

Ngram = tuple[str, ...]

DEFAULT_ORDERS = (1, 2)
DEFAULT_INTEGER_LENGTH = 2048


class EmptyCorpusError(ValueError):
    """Raised when an encoder is fit on an empty corpus."""


class LabelLengthMismatchError(ValueError):
    """Labels do not align one-to-one with the corpus."""


class UnknownMnemonicError(KeyError):
    """A mnemonic has no code in the integer encoding."""


def _as_mnemonics(sequence) -> list[str]:
    if hasattr(sequence, "mnemonics"):
        return list(sequence.mnemonics)
    return list(sequence)


def _check_orders(orders) -> tuple[int, ...]:
    cleaned = tuple(sorted(set(int(n) for n in orders)))
    if not cleaned or any(n not in (1, 2) for n in cleaned):
        raise ValueError(f"orders must be a nonempty subset of {{1, 2}}, got {orders!r}")
    return cleaned


def extract_ngrams(sequence, orders=DEFAULT_ORDERS) -> Counter:
    """Sliding-window gram counts for each requested order."""
    tokens = _as_mnemonics(sequence)
    counts: Counter = Counter()
    for n in _check_orders(orders):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i : i + n])] += 1
    return counts


@dataclass(frozen=True)
class Vocabulary:
    """Dense gram-to-column index plus document frequencies over N contracts."""

    index: dict[Ngram, int]
    doc_freq: dict[Ngram, int]
    corpus_size: int

    @property
    def width(self) -> int:
        return len(self.index)

    def columns(self) -> list[Ngram]:
        return sorted(self.index, key=self.index.__getitem__)

    def idf(self, feature: Ngram) -> float:
        df = self.doc_freq[feature]
        return math.log((1 + self.corpus_size) / (1 + df)) + 1.0

    def to_json(self) -> str:
        payload = {
            "corpus_size": self.corpus_size,
            "features": [
                {"grams": list(f), "df": self.doc_freq[f]} for f in self.columns()
            ],
        }
        return json.dumps(payload, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        payload = json.loads(text)
        index: dict[Ngram, int] = {}
        doc_freq: dict[Ngram, int] = {}
        for column, item in enumerate(payload["features"]):
            gram = tuple(item["grams"])
            index[gram] = column
            doc_freq[gram] = int(item["df"])
        return cls(index=index, doc_freq=doc_freq, corpus_size=int(payload["corpus_size"]))


def build_vocabulary(corpus_counts, min_df: int = 1) -> Vocabulary:
    """Index the union of observed grams; columns sorted by (order, grams)."""
    documents = [Counter(c) for c in corpus_counts]
    if not documents:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    df: Counter = Counter()
    for counts in documents:
        df.update(set(counts))
    ordered = sorted(
        (f for f in df if df[f] >= min_df), key=lambda f: (len(f), f)
    )
    return Vocabulary(
        index={f: i for i, f in enumerate(ordered)},
        doc_freq={f: df[f] for f in ordered},
        corpus_size=len(documents),
    )


def tfidf_encode(counts, vocabulary: Vocabulary) -> np.ndarray:
    """One contract's row; grams unseen at vocabulary-build time are dropped."""
    row = np.zeros(vocabulary.width, dtype=np.float64)
    for feature, count in counts.items():
        column = vocabulary.index.get(feature)
        if column is not None:
            row[column] = count * vocabulary.idf(feature)
    return row


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    row_ids: tuple[str | None, ...]
    labels: np.ndarray | None = None


def build_feature_matrix(
    sequences, labels=None, orders=DEFAULT_ORDERS, min_df: int = 1
) -> tuple[Vocabulary, FeatureMatrix]:
    """Vocabulary over the full corpus, then one tf-idf row per contract."""
    sequences = list(sequences)
    if not sequences:
        raise EmptyCorpusError("cannot featurize an empty corpus")
    if labels is not None:
        check_consistent_length(sequences, labels, LabelLengthMismatchError)
        labels = np.asarray(labels, dtype=np.int64)
    counts = [extract_ngrams(s, orders) for s in sequences]
    vocabulary = build_vocabulary(counts, min_df=min_df)
    rows = np.zeros((len(sequences), vocabulary.width), dtype=np.float64)
    for i, c in enumerate(counts):
        rows[i] = tfidf_encode(c, vocabulary)
    row_ids = tuple(getattr(s, "source_id", None) for s in sequences)
    return vocabulary, FeatureMatrix(rows=rows, row_ids=row_ids, labels=labels)


@dataclass(frozen=True)
class IntegerEncoding:
    """Injective mnemonic-to-code mapping; code 0 is reserved for padding."""

    mapping: dict[str, int]
    length: int = DEFAULT_INTEGER_LENGTH

    def to_json(self) -> str:
        payload = {
            "length": self.length,
            "mapping": dict(sorted(self.mapping.items(), key=lambda kv: kv[1])),
        }
        return json.dumps(payload, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "IntegerEncoding":
        payload = json.loads(text)
        return cls(
            mapping={k: int(v) for k, v in payload["mapping"].items()},
            length=int(payload["length"]),
        )


def build_integer_encoding(sequences, length: int = DEFAULT_INTEGER_LENGTH) -> IntegerEncoding:
    """Codes 1..K assigned to the corpus's distinct mnemonics in sorted order."""
    names = sorted({tok for seq in sequences for tok in _as_mnemonics(seq)})
    return IntegerEncoding(
        mapping={name: code for code, name in enumerate(names, start=1)}, length=length
    )


def integer_encode(sequence, encoding: IntegerEncoding) -> np.ndarray:
    """Map mnemonics to codes, zero-pad or truncate to the fixed length."""
    tokens = _as_mnemonics(sequence)
    codes = []
    for token in tokens:
        code = encoding.mapping.get(token)
        if code is None:
            raise UnknownMnemonicError(token)
        codes.append(code)
    out = np.zeros(encoding.length, dtype=np.int64)
    kept = codes[: encoding.length]
    out[: len(kept)] = kept
    return out


def save_matrix(rows: np.ndarray, path) -> None:
    """Dense text format: header "rows cols", one space-separated row per line."""
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{rows.shape[0]} {rows.shape[1]}\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        n_rows, n_cols = int(header[0]), int(header[1])
        out = np.zeros((n_rows, n_cols), dtype=np.float64)
        for i in range(n_rows):
            values = fh.readline().split()
            if len(values) != n_cols:
                raise ValueError(f"row {i} has {len(values)} values, expected {n_cols}")
            out[i] = [float(v) for v in values]
    return out


class OpcodeSequenceExtractor(BaseEstimator):
    """Stateless transformer from raw contracts to opcode sequences.

    Accepts hex strings, Bytecode values, or anything exposing .mnemonics,
    so it can head a pipeline that ends in a vectorizer and classifier.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out = []
        for item in X:
            if hasattr(item, "mnemonics"):
                out.append(item)
            elif isinstance(item, Bytecode):
                out.append(opcode_sequence(item))
            else:
                out.append(opcode_sequence(parse_hex(item)))
        return out

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)


class NgramTfidfVectorizer(BaseEstimator):
    """Corpus-fitted tf-idf encoder over opcode n-grams.

    fit freezes the vocabulary; transform drops grams unseen at fit time so
    row width always matches the trained downstream model.
    """

    def __init__(self, orders=DEFAULT_ORDERS, min_df: int = 1):
        self.orders = orders
        self.min_df = min_df

    def fit(self, X, y=None):
        counts = [extract_ngrams(s, self.orders) for s in X]
        self.vocabulary_ = build_vocabulary(counts, min_df=self.min_df)
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "vocabulary_")
        rows = np.zeros((len(X), self.vocabulary_.width), dtype=np.float64)
        for i, s in enumerate(X):
            rows[i] = tfidf_encode(extract_ngrams(s, self.orders), self.vocabulary_)
        return rows

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)


class IntegerSequenceEncoder(BaseEstimator):
    """Fixed-length integer encoding of opcode sequences."""

    def __init__(self, length: int = DEFAULT_INTEGER_LENGTH):
        self.length = length

    def fit(self, X, y=None):
        self.encoding_ = build_integer_encoding(X, length=self.length)
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "encoding_")
        rows = np.zeros((len(X), self.encoding_.length), dtype=np.int64)
        for i, s in enumerate(X):
            rows[i] = integer_encode(s, self.encoding_)
        return rows

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)
