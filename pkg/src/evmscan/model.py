"""Feed-forward classifier trained with a pairwise-contrastive regularizer.

The network is a ReLU MLP whose last hidden layer doubles as an embedding
space.  Besides softmax cross-entropy on the output layer, training adds a
metric term over within-batch pairs: positives (same label) are penalized
for falling below a similarity threshold, negatives for rising above it,
with per-pair mining that keeps only pairs near the decision region.  The
combined objective is

    loss = cross_entropy + contrast_weight * pair_loss

optimized by SGD with momentum.  Everything is float64 numpy with explicit
reverse-mode gradients, so gradient checks against finite differences are
exact to tight tolerances.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .base import BaseEstimator, check_fitted
from .validation import as_label_vector, as_sample_matrix, check_consistent_length


class DimensionMismatchError(ValueError):
    """Input row width does not match the network's input dimension."""


class SingleClassDatasetError(ValueError):
    """Training data must contain both classes."""


class EmptyDatasetError(ValueError):
    """Training data is empty."""


class VocabularyMismatchError(ValueError):
    """Model was trained against a different vocabulary file."""


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_width: int = 512
    hidden_layers: int = 5
    output_classes: int = 2

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.hidden_width < 1 or self.hidden_layers < 1:
            raise ValueError("hidden layer sizes must be positive")
        if self.output_classes < 2:
            raise ValueError("need at least two output classes")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 300
    learning_rate: float = 0.02
    momentum: float = 0.9
    contrast_weight: float = 0.8
    scale_pos: float = 2.0
    scale_neg: float = 40.0
    threshold: float = 0.5
    margin: float = 0.1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.contrast_weight < 0:
            raise ValueError("contrast_weight must be >= 0")
        if self.scale_pos <= 0 or self.scale_neg <= 0:
            raise ValueError("pair scales must be positive")
        if not 0 < self.threshold < 1:
            raise ValueError("similarity threshold must lie in (0, 1)")
        if self.margin < 0:
            raise ValueError("mining margin must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.momentum < 0:
            raise ValueError("momentum must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    vw: np.ndarray
    vb: np.ndarray


@dataclass
class ModelParameters:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def embedding_width(self) -> int:
        return self.layers[-1].w.shape[0]


@dataclass(frozen=True)
class LossParts:
    total: float
    cross_entropy: float
    contrastive: float


@dataclass(frozen=True)
class PairConstraint:
    anchor: int
    partner: int
    indicator: int  # +1 same label, -1 different

    def __post_init__(self):
        if self.anchor == self.partner:
            raise ValueError("a pair needs two distinct samples")
        if self.indicator not in (-1, 1):
            raise ValueError("indicator must be -1 or +1")


def enumerate_pairs(labels) -> list[PairConstraint]:
    """All ordered within-batch pairs with same/different-label indicators."""
    y = np.asarray(labels)
    out = []
    for i in range(len(y)):
        for j in range(len(y)):
            if i != j:
                out.append(PairConstraint(i, j, 1 if y[i] == y[j] else -1))
    return out


@dataclass(frozen=True)
class BatchPairSets:
    """Per-anchor mined partner indices; index k holds anchor k's sets."""

    positives: tuple[tuple[int, ...], ...]
    negatives: tuple[tuple[int, ...], ...]

    @property
    def total_positive(self) -> int:
        return sum(len(p) for p in self.positives)

    @property
    def total_negative(self) -> int:
        return sum(len(n) for n in self.negatives)


def init_params(config: NetworkConfig, seed: int) -> ModelParameters:
    """He-style init: zero-mean normals with std sqrt(2 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    dims = (
        [config.input_dim]
        + [config.hidden_width] * config.hidden_layers
        + [config.output_classes]
    )
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append(
            Layer(w=w, b=np.zeros(fan_out), vw=np.zeros_like(w), vb=np.zeros(fan_out))
        )
    return ModelParameters(layers)


def _forward_cached(params: ModelParameters, X: np.ndarray):
    pre_activations = []
    activations = [X]
    a = X
    for layer in params.layers[:-1]:
        z = a @ layer.w + layer.b
        pre_activations.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    out = params.layers[-1]
    logits = a @ out.w + out.b
    return activations, pre_activations, logits


def forward(params: ModelParameters, x):
    """(embedding, logits); embedding is the last hidden layer's ReLU output."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    X = as_sample_matrix(arr)
    if X.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"row width {X.shape[1]} != network input {params.input_dim}"
        )
    activations, _, logits = _forward_cached(params, X)
    embedding = activations[-1]
    if single:
        return embedding[0], logits[0]
    return embedding, logits


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|), defined as 0 when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def _cosine_matrix(E: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(E, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = E / safe[:, None]
    S = unit @ unit.T
    dead = norms == 0
    S[dead, :] = 0.0
    S[:, dead] = 0.0
    return S


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mine_pairs(embeddings, labels, margin: float) -> BatchPairSets:
    """Keep pairs near the positive/negative frontier.

    A positive (i, j) survives iff its similarity is below the anchor's
    hardest negative plus the margin; a negative survives iff it is above
    the anchor's weakest positive minus the margin.  Anchors without any
    candidate of one polarity keep nothing at all.
    """
    E = as_sample_matrix(embeddings, "embeddings")
    y = np.asarray(labels)
    check_consistent_length(E, y)
    S = _cosine_matrix(E)
    n = len(y)
    indices = np.arange(n)
    positives: list[tuple[int, ...]] = []
    negatives: list[tuple[int, ...]] = []
    for i in range(n):
        pos_idx = indices[(y == y[i]) & (indices != i)]
        neg_idx = indices[y != y[i]]
        if len(pos_idx) == 0 or len(neg_idx) == 0:
            positives.append(())
            negatives.append(())
            continue
        hardest_negative = S[i, neg_idx].max()
        weakest_positive = S[i, pos_idx].min()
        positives.append(
            tuple(int(j) for j in pos_idx if S[i, j] < hardest_negative + margin)
        )
        negatives.append(
            tuple(int(j) for j in neg_idx if S[i, j] > weakest_positive - margin)
        )
    return BatchPairSets(tuple(positives), tuple(negatives))


def pair_weights(pos_sims, neg_sims, scale_pos, scale_neg, threshold):
    """Soft weights over one anchor's mined pairs.

    w+ = exp(sp*(t - S)) / (1 + sum_k exp(sp*(t - S_k))) over the positive
    set (the sum includes the pair itself), mirrored for negatives.  Hard
    positives (low S) and hard negatives (high S) get the larger weights.
    """
    pos = np.asarray(pos_sims, dtype=np.float64)
    neg = np.asarray(neg_sims, dtype=np.float64)
    ep = np.exp(scale_pos * (threshold - pos))
    en = np.exp(scale_neg * (neg - threshold))
    return ep / (1.0 + ep.sum()), en / (1.0 + en.sum())


def _pair_index_arrays(pairs: BatchPairSets):
    pos_i = [i for i, ps in enumerate(pairs.positives) for _ in ps]
    pos_j = [j for ps in pairs.positives for j in ps]
    neg_i = [i for i, ns in enumerate(pairs.negatives) for _ in ns]
    neg_j = [j for ns in pairs.negatives for j in ns]
    return (
        np.asarray(pos_i, dtype=np.intp),
        np.asarray(pos_j, dtype=np.intp),
        np.asarray(neg_i, dtype=np.intp),
        np.asarray(neg_j, dtype=np.intp),
    )


def _pair_loss_terms(E, pairs, scale_pos, scale_neg, threshold, with_grad):
    """Pair loss and (optionally) its gradient with respect to embeddings."""
    n = E.shape[0]
    S = _cosine_matrix(E)
    pos_i, pos_j, neg_i, neg_j = _pair_index_arrays(pairs)
    m_pos = pairs.total_positive
    m_neg = pairs.total_negative
    loss = 0.0
    dS = np.zeros((n, n)) if with_grad else None
    if m_pos:
        x = scale_pos * (threshold - S[pos_i, pos_j])
        loss += float(np.logaddexp(0.0, x).sum()) / m_pos
        if with_grad:
            np.add.at(dS, (pos_i, pos_j), -scale_pos * _sigmoid(x) / m_pos)
    if m_neg:
        x = scale_neg * (S[neg_i, neg_j] - threshold)
        loss += float(np.logaddexp(0.0, x).sum()) / m_neg
        if with_grad:
            np.add.at(dS, (neg_i, neg_j), scale_neg * _sigmoid(x) / m_neg)
    if not with_grad:
        return loss, None
    # Chain through S_ij = cos(e_i, e_j); zero-norm rows contribute nothing.
    norms = np.linalg.norm(E, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = E / safe[:, None]
    M = dS + dS.T
    dE = (M @ unit - (M * S).sum(axis=1)[:, None] * unit) / safe[:, None]
    dE[norms == 0] = 0.0
    return loss, dE


def pairwise_contrastive_loss(
    embeddings, labels, pairs: BatchPairSets, scale_pos, scale_neg, threshold
) -> float:
    """Softplus hinge over mined pairs, averaged within each polarity.

    Positive pairs contribute softplus(scale_pos*(threshold - S)) / m_pos
    and negatives softplus(scale_neg*(S - threshold)) / m_neg, where m_pos
    and m_neg are the batch totals of mined pairs.  No pairs, no loss.
    """
    E = as_sample_matrix(embeddings, "embeddings")
    loss, _ = _pair_loss_terms(E, pairs, scale_pos, scale_neg, threshold, False)
    return loss


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    """Mean softmax cross-entropy over the batch."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    return float(-_log_softmax(logits)[np.arange(len(y)), y].mean())


def combined_loss(
    logits, embeddings, labels, config: TrainingConfig, pairs: BatchPairSets | None = None
) -> LossParts:
    """cross_entropy + contrast_weight * pair_loss; mines pairs if not given."""
    E = as_sample_matrix(embeddings, "embeddings")
    if pairs is None:
        pairs = mine_pairs(E, labels, config.margin)
    ce = cross_entropy(logits, labels)
    pc = pairwise_contrastive_loss(
        E, labels, pairs, config.scale_pos, config.scale_neg, config.threshold
    )
    return LossParts(ce + config.contrast_weight * pc, ce, pc)


def batch_loss(
    params: ModelParameters, X, y, config: TrainingConfig, pairs: BatchPairSets | None = None
) -> LossParts:
    """Forward pass plus combined loss; pairs may be pinned by the caller."""
    embeddings, logits = forward(params, X)
    return combined_loss(np.atleast_2d(logits), np.atleast_2d(embeddings), y, config, pairs)


def backward(
    params: ModelParameters, X, y, config: TrainingConfig, pairs: BatchPairSets | None = None
):
    """Exact gradients of the combined loss for one batch.

    Mining decisions are constants of the batch: the returned gradients
    differentiate the loss with the mined sets held fixed.  Returns
    (gradients, loss parts, pairs used), gradients as one (dW, db) per layer.
    """
    X = as_sample_matrix(X)
    y = as_label_vector(y)
    check_consistent_length(X, y)
    if X.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"row width {X.shape[1]} != network input {params.input_dim}"
        )
    activations, pre_activations, logits = _forward_cached(params, X)
    embeddings = activations[-1]
    if pairs is None:
        pairs = mine_pairs(embeddings, y, config.margin)

    n = len(y)
    log_probs = _log_softmax(logits)
    probs = np.exp(log_probs)
    ce = float(-log_probs[np.arange(n), y].mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    pc, dE = _pair_loss_terms(
        embeddings, pairs, config.scale_pos, config.scale_neg, config.threshold, True
    )

    gradients: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    out = params.layers[-1]
    gradients[-1] = (activations[-1].T @ dlogits, dlogits.sum(axis=0))
    dA = dlogits @ out.w.T + config.contrast_weight * dE
    for i in range(len(params.layers) - 2, -1, -1):
        dZ = dA * (pre_activations[i] > 0)
        gradients[i] = (activations[i].T @ dZ, dZ.sum(axis=0))
        dA = dZ @ params.layers[i].w.T
    parts = LossParts(ce + config.contrast_weight * pc, ce, pc)
    return gradients, parts, pairs


def sgd_momentum_step(
    params: ModelParameters, gradients, learning_rate: float, momentum: float
) -> ModelParameters:
    """buffer <- momentum*buffer + gradient; param <- param - lr*buffer."""
    for layer, (gw, gb) in zip(params.layers, gradients):
        layer.vw = momentum * layer.vw + gw
        layer.vb = momentum * layer.vb + gb
        layer.w = layer.w - learning_rate * layer.vw
        layer.b = layer.b - learning_rate * layer.vb
    return params


def train(
    X,
    y,
    network: NetworkConfig | None = None,
    training: TrainingConfig | None = None,
) -> tuple[ModelParameters, list[LossParts]]:
    """Seeded mini-batch SGD; history holds per-epoch mean loss parts."""
    training = training or TrainingConfig()
    X = as_sample_matrix(X)
    y = as_label_vector(y)
    check_consistent_length(X, y)
    if len(X) == 0:
        raise EmptyDatasetError("no training samples")
    if np.unique(y).size < 2:
        raise SingleClassDatasetError("training data must contain both classes")
    if network is None:
        network = NetworkConfig(input_dim=X.shape[1])
    elif network.input_dim != X.shape[1]:
        raise DimensionMismatchError(
            f"matrix width {X.shape[1]} != configured input {network.input_dim}"
        )
    params = init_params(network, training.seed)
    rng = np.random.default_rng(training.seed)
    history: list[LossParts] = []
    n = len(X)
    for _ in range(training.epochs):
        order = rng.permutation(n)
        batch_parts: list[LossParts] = []
        for start in range(0, n, training.batch_size):
            idx = order[start : start + training.batch_size]
            gradients, parts, _ = backward(params, X[idx], y[idx], training)
            sgd_momentum_step(params, gradients, training.learning_rate, training.momentum)
            batch_parts.append(parts)
        history.append(
            LossParts(
                total=float(np.mean([p.total for p in batch_parts])),
                cross_entropy=float(np.mean([p.cross_entropy for p in batch_parts])),
                contrastive=float(np.mean([p.contrastive for p in batch_parts])),
            )
        )
    return params, history


def predict(params: ModelParameters, X):
    """(labels, probabilities, embeddings) for a batch of feature rows."""
    X = as_sample_matrix(X)
    if X.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"row width {X.shape[1]} != network input {params.input_dim}"
        )
    embeddings, logits = forward(params, X)
    probs = np.exp(_log_softmax(logits))
    return probs.argmax(axis=1), probs, embeddings


def export_embeddings(params: ModelParameters, X, ids, path, labels=None) -> None:
    """One tab-separated line per row: id, label when known, then components."""
    _, _, embeddings = predict(params, X)
    ids = list(ids)
    check_consistent_length(ids, embeddings)
    if labels is not None:
        check_consistent_length(ids, labels)
    with open(path, "w", encoding="utf-8") as fh:
        for i, row in enumerate(embeddings):
            fields = [str(ids[i])]
            if labels is not None:
                fields.append(str(int(labels[i])))
            fields.extend(repr(float(v)) for v in row)
            fh.write("\t".join(fields))
            fh.write("\n")


@dataclass(frozen=True)
class SavedModel:
    params: ModelParameters
    network: NetworkConfig
    training: TrainingConfig
    vocab_hash: str


def vocab_file_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def save_model(
    path,
    params: ModelParameters,
    network: NetworkConfig,
    training: TrainingConfig,
    vocab_hash: str,
) -> None:
    doc = {
        "format_version": 1,
        "network": asdict(network),
        "training": asdict(training),
        "vocab_hash": vocab_hash,
        "layers": [
            {
                "w": [float(v) for v in layer.w.ravel()],
                "b": [float(v) for v in layer.b],
                "rows": layer.w.shape[0],
                "cols": layer.w.shape[1],
            }
            for layer in params.layers
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> SavedModel:
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported model format: {doc.get('format_version')!r}")
    layers = []
    for item in doc["layers"]:
        w = np.asarray(item["w"], dtype=np.float64).reshape(item["rows"], item["cols"])
        b = np.asarray(item["b"], dtype=np.float64)
        layers.append(Layer(w=w, b=b, vw=np.zeros_like(w), vb=np.zeros_like(b)))
    return SavedModel(
        params=ModelParameters(layers),
        network=NetworkConfig(**doc["network"]),
        training=TrainingConfig(**doc["training"]),
        vocab_hash=doc["vocab_hash"],
    )


def check_vocab_hash(saved: SavedModel, vocab_path) -> None:
    """Refuse to use a model against a vocabulary it was not trained with."""
    actual = vocab_file_hash(vocab_path)
    if actual != saved.vocab_hash:
        raise VocabularyMismatchError(
            f"vocabulary hash {actual[:12]}... does not match model "
            f"{saved.vocab_hash[:12]}..."
        )


class MetricMLPClassifier(BaseEstimator):
    """Estimator facade over train/predict with sklearn-style parameters.

    transform() exposes the learned embedding space, so the classifier can
    sit at the end of a pipeline or feed a separate projection step.
    """

    def __init__(
        self,
        hidden_width: int = 512,
        hidden_layers: int = 5,
        epochs: int = 300,
        learning_rate: float = 0.02,
        momentum: float = 0.9,
        contrast_weight: float = 0.8,
        scale_pos: float = 2.0,
        scale_neg: float = 40.0,
        threshold: float = 0.5,
        margin: float = 0.1,
        batch_size: int = 64,
        seed: int = 0,
    ):
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.contrast_weight = contrast_weight
        self.scale_pos = scale_pos
        self.scale_neg = scale_neg
        self.threshold = threshold
        self.margin = margin
        self.batch_size = batch_size
        self.seed = seed

    def _training_config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            contrast_weight=self.contrast_weight,
            scale_pos=self.scale_pos,
            scale_neg=self.scale_neg,
            threshold=self.threshold,
            margin=self.margin,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = as_sample_matrix(X)
        network = NetworkConfig(
            input_dim=X.shape[1],
            hidden_width=self.hidden_width,
            hidden_layers=self.hidden_layers,
        )
        self.network_ = network
        self.training_ = self._training_config()
        self.params_, self.history_ = train(X, y, network, self.training_)
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        return predict(self.params_, X)[0]

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        return predict(self.params_, X)[1]

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        return predict(self.params_, X)[2]

    def score(self, X, y) -> float:
        return float((self.predict(X) == np.asarray(y)).mean())
