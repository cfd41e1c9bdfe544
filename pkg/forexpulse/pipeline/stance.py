"""Stage 2: Stance Model - Hashed text features and the two-plane ordinal classifier."""

import logging
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer

from forexpulse.errors import (
    DataError,
    DimensionMismatchError,
    ModelFormatError,
    ModelParameterError,
)
from forexpulse.models.schemas import (
    STANCE_ORDER,
    EvalReport,
    FoldResult,
    Stance,
    TweetRecord,
)
from forexpulse.services.report_writer import write_text
from forexpulse.services.text_norm import normalize_tweet, tokenize

logger = logging.getLogger(__name__)

MIN_DIMENSION = 2**10
BATCH_SIZE = 10_000

_STANCE_INDEX = {stance: i for i, stance in enumerate(STANCE_ORDER)}
_BUY = _STANCE_INDEX[Stance.BUY]
_SELL = _STANCE_INDEX[Stance.SELL]


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalized feature vector (sorted, unique indices)."""
    dimension: int
    indices: np.ndarray
    values: np.ndarray

    def norm(self) -> float:
        return float(math.sqrt(float(self.values @ self.values)))

    def dot(self, weights: np.ndarray) -> float:
        return float(weights[self.indices] @ self.values)


@dataclass(frozen=True)
class TrainingParams:
    """Hinge-loss training parameters."""
    lambda_reg: float = 1e-4
    epochs: int = 10
    seed: int = 42


@dataclass(frozen=True)
class TwoPlaneModel:
    """
    Two linear planes over one feature space.

    ``buy`` separates Buy from {Hold, Sell}; ``sell`` separates Sell from
    {Buy, Hold}. Together they split the space into three ordered regions.
    """
    dimension: int
    buy_weights: np.ndarray
    buy_bias: float
    sell_weights: np.ndarray
    sell_bias: float
    params: TrainingParams = field(default_factory=TrainingParams)

    def __post_init__(self) -> None:
        for name in ("buy_weights", "sell_weights"):
            weights = np.asarray(getattr(self, name), dtype=np.float64)
            if weights.shape != (self.dimension,):
                raise ModelFormatError(f"{name} must have length {self.dimension}")
            weights.flags.writeable = False
            object.__setattr__(self, name, weights)

    def scaled(self, factor: float) -> "TwoPlaneModel":
        """Same planes with weights and biases multiplied by ``factor``."""
        return TwoPlaneModel(
            dimension=self.dimension,
            buy_weights=self.buy_weights * factor,
            buy_bias=self.buy_bias * factor,
            sell_weights=self.sell_weights * factor,
            sell_bias=self.sell_bias * factor,
            params=self.params,
        )


def check_dimension(dimension: int) -> None:
    if dimension < MIN_DIMENSION or dimension & (dimension - 1):
        raise ModelParameterError(
            f"feature dimension must be a power of two >= {MIN_DIMENSION}, got {dimension}",
            module="stance",
        )


@lru_cache(maxsize=8)
def _vectorizer(dimension: int) -> HashingVectorizer:
    return HashingVectorizer(
        n_features=dimension,
        analyzer="word",
        preprocessor=normalize_tweet,
        tokenizer=tokenize,
        token_pattern=None,
        lowercase=False,
        ngram_range=(1, 2),
        alternate_sign=False,
        norm="l2",
        dtype=np.float64,
    )


def featurize_many(texts: Iterable[str], dimension: int) -> list[FeatureVector]:
    """Featurize a batch of texts with one vectorizer pass."""
    check_dimension(dimension)
    texts = list(texts)
    if not texts:
        return []
    matrix = _vectorizer(dimension).transform(texts).tocsr()
    matrix.sort_indices()
    vectors = []
    for row in range(matrix.shape[0]):
        start, end = matrix.indptr[row], matrix.indptr[row + 1]
        vectors.append(FeatureVector(
            dimension=dimension,
            indices=matrix.indices[start:end].astype(np.int64),
            values=matrix.data[start:end].astype(np.float64),
        ))
    return vectors


def featurize(text: str, dimension: int) -> FeatureVector:
    """
    Map tweet text to a hashed unigram+bigram vector.

    Text is lowercased, URLs become ``<url>`` and mentions ``<user>``;
    cashtags such as ``$eurusd`` stay intact. Tokens are hashed with
    murmurhash3 (seed 0) modulo ``dimension`` and the result L2-normalized.
    Empty text gives the zero vector.
    """
    return featurize_many([text], dimension)[0]


def _train_plane(
    vectors: Sequence[FeatureVector],
    labels: np.ndarray,
    dimension: int,
    params: TrainingParams,
) -> tuple[np.ndarray, float]:
    # Pegasos with w = scale * v; the bias is a regularized constant feature.
    rng = np.random.default_rng(params.seed)
    v = np.zeros(dimension, dtype=np.float64)
    v_bias = 0.0
    scale = 1.0
    t = 0
    for _ in range(params.epochs):
        for j in rng.permutation(len(vectors)):
            t += 1
            x = vectors[j]
            y = labels[j]
            eta = 1.0 / (params.lambda_reg * t)
            margin = y * scale * (float(v[x.indices] @ x.values) + v_bias)
            decay = 1.0 - eta * params.lambda_reg
            if decay <= 0.0:
                v[:] = 0.0
                v_bias = 0.0
                scale = 1.0
            else:
                scale *= decay
            if margin < 1.0:
                step = eta * y / scale
                v[x.indices] += step * x.values
                v_bias += step
            if scale < 1e-9:
                v *= scale
                v_bias *= scale
                scale = 1.0
    return v * scale, v_bias * scale


def train_two_plane(
    data: Sequence[tuple[FeatureVector, Stance]],
    params: TrainingParams = TrainingParams(),
) -> TwoPlaneModel:
    """
    Train both planes with hinge loss and L2 regularization.

    Args:
        data: Feature vectors with gold stances
        params: Regularization, epoch count and order seed

    Returns:
        TwoPlaneModel, bit-identical for identical data order and params
    """
    if params.lambda_reg <= 0:
        raise ModelParameterError(f"lambda must be positive, got {params.lambda_reg}", module="stance")
    if params.epochs <= 0:
        raise ModelParameterError(f"epochs must be positive, got {params.epochs}", module="stance")
    if not data:
        raise ModelParameterError("training data is empty", module="stance")

    dimension = data[0][0].dimension
    for vector, _ in data:
        if vector.dimension != dimension:
            raise DimensionMismatchError(dimension, vector.dimension)

    present = {stance for _, stance in data}
    if len(present) < len(STANCE_ORDER):
        missing = ", ".join(s.value for s in STANCE_ORDER if s not in present)
        logger.warning("Training data has no %s examples; model may be degenerate", missing)

    vectors = [vector for vector, _ in data]
    buy_labels = np.array([1.0 if s == Stance.BUY else -1.0 for _, s in data])
    sell_labels = np.array([1.0 if s == Stance.SELL else -1.0 for _, s in data])

    buy_weights, buy_bias = _train_plane(vectors, buy_labels, dimension, params)
    sell_weights, sell_bias = _train_plane(vectors, sell_labels, dimension, params)
    logger.info(
        "Trained two-plane model on %d examples (D=%d, lambda=%g, epochs=%d)",
        len(data), dimension, params.lambda_reg, params.epochs,
    )
    return TwoPlaneModel(
        dimension=dimension,
        buy_weights=buy_weights,
        buy_bias=buy_bias,
        sell_weights=sell_weights,
        sell_bias=sell_bias,
        params=params,
    )


def plane_scores(model: TwoPlaneModel, v: FeatureVector) -> tuple[float, float]:
    """Signed scores w·v + b of the buy and sell planes."""
    if v.dimension != model.dimension:
        raise DimensionMismatchError(model.dimension, v.dimension)
    return v.dot(model.buy_weights) + model.buy_bias, v.dot(model.sell_weights) + model.sell_bias


def decide_stance(buy_score: float, sell_score: float) -> Stance:
    """Ordinal decision from the two plane scores; an exact tie of positives is Hold."""
    if buy_score > 0 and sell_score <= 0:
        return Stance.BUY
    if sell_score > 0 and buy_score <= 0:
        return Stance.SELL
    if buy_score <= 0 and sell_score <= 0:
        return Stance.HOLD
    if buy_score > sell_score:
        return Stance.BUY
    if sell_score > buy_score:
        return Stance.SELL
    return Stance.HOLD


def classify_stance(model: TwoPlaneModel, v: FeatureVector) -> Stance:
    return decide_stance(*plane_scores(model, v))


def classify_corpus(model: TwoPlaneModel, tweets: Sequence[TweetRecord]) -> dict[str, Stance]:
    """Predicted stance for every tweet, keyed by tweet id."""
    stances: dict[str, Stance] = {}
    for start in range(0, len(tweets), BATCH_SIZE):
        batch = tweets[start:start + BATCH_SIZE]
        vectors = featurize_many((t.text for t in batch), model.dimension)
        for tweet, vector in zip(batch, vectors):
            stances[tweet.id] = classify_stance(model, vector)
    logger.info("Classified %d tweets", len(stances))
    return stances


def _class_f1(confusion: np.ndarray, index: int) -> tuple[float, bool]:
    tp = float(confusion[index, index])
    predicted = float(confusion[:, index].sum())
    gold = float(confusion[index, :].sum())
    precision = tp / predicted if predicted else 0.0
    recall = tp / gold if gold else 0.0
    if precision + recall == 0:
        return 0.0, predicted == 0 and gold == 0
    return 2 * precision * recall / (precision + recall), False


def f1_buy_sell(confusion: Sequence[Sequence[int]]) -> float:
    """
    Mean of the Buy and Sell F1 scores.

    Rows are gold and columns predicted, both in Buy, Hold, Sell order.
    A class absent from both gold and predictions scores 0.
    """
    matrix = np.asarray(confusion, dtype=np.int64)
    if matrix.shape != (3, 3) or np.any(matrix < 0):
        raise ValueError("confusion must be a 3x3 matrix of nonnegative counts")
    f1_buy, _ = _class_f1(matrix, _BUY)
    f1_sell, _ = _class_f1(matrix, _SELL)
    return (f1_buy + f1_sell) / 2


def blocked_folds(n: int, k: int, gap: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Contiguous fold split; earlier blocks take the larger size.

    Args:
        n: Number of time-ordered samples
        k: Number of folds
        gap: Training samples dropped on each side of the test block

    Returns:
        List of (train_indices, test_indices)
    """
    if k < 2:
        raise ModelParameterError(f"fold count must be >= 2, got {k}", module="stance")
    if n < k:
        raise ModelParameterError(f"{n} samples cannot fill {k} folds", module="stance")
    if gap < 0:
        raise ModelParameterError("gap must be nonnegative", module="stance")

    base, extra = divmod(n, k)
    indices = np.arange(n)
    folds = []
    start = 0
    for i in range(k):
        end = start + base + (1 if i < extra else 0)
        mask = np.ones(n, dtype=bool)
        mask[max(0, start - gap):min(n, end + gap)] = False
        folds.append((indices[mask], indices[start:end]))
        start = end
    return folds


def _confusion(gold: Sequence[Stance], predicted: Sequence[Stance]) -> np.ndarray:
    matrix = np.zeros((3, 3), dtype=np.int64)
    for g, p in zip(gold, predicted):
        matrix[_STANCE_INDEX[g], _STANCE_INDEX[p]] += 1
    return matrix


def blocked_cv(
    data: Sequence[tuple[TweetRecord, FeatureVector, Stance]],
    k: int = 10,
    params: TrainingParams = TrainingParams(),
    gap: int = 0,
) -> EvalReport:
    """
    Evaluate the two-plane model with k-fold blocked cross-validation.

    Args:
        data: Labeled tweets in ascending timestamp order
        k: Fold count
        params: Training parameters for every fold
        gap: Optional training exclusion around each test block

    Returns:
        EvalReport with per-fold and pooled metrics
    """
    for i in range(1, len(data)):
        if data[i][0].timestamp < data[i - 1][0].timestamp:
            raise DataError(
                f"labeled data not in time order at position {i} (tweet {data[i][0].id})",
                module="stance",
            )

    folds = blocked_folds(len(data), k, gap)
    pooled = np.zeros((3, 3), dtype=np.int64)
    results: list[FoldResult] = []
    notes: list[str] = []

    for fold, (train_idx, test_idx) in enumerate(folds):
        model = train_two_plane([(data[i][1], data[i][2]) for i in train_idx], params)
        gold = [data[i][2] for i in test_idx]
        predicted = [classify_stance(model, data[i][1]) for i in test_idx]
        confusion = _confusion(gold, predicted)
        pooled += confusion

        for stance, index in ((Stance.BUY, _BUY), (Stance.SELL, _SELL)):
            _, empty = _class_f1(confusion, index)
            if empty:
                notes.append(f"fold {fold}: no {stance.value} instances; F1({stance.value}) counted as 0")

        results.append(FoldResult(
            fold=fold,
            test_start=int(test_idx[0]),
            test_end=int(test_idx[-1]),
            train_size=int(train_idx.size),
            accuracy=float(np.trace(confusion)) / len(test_idx),
            f1_buy_sell=f1_buy_sell(confusion),
        ))
        logger.debug("Fold %d: accuracy %.4f", fold, results[-1].accuracy)

    accuracies = np.array([r.accuracy for r in results])
    f1s = np.array([r.f1_buy_sell for r in results])
    label_counts = {s.value: sum(1 for _, _, g in data if g == s) for s in STANCE_ORDER}

    report = EvalReport(
        folds=results,
        accuracy_mean=float(accuracies.mean()),
        accuracy_std=float(accuracies.std(ddof=1)),
        f1_mean=float(f1s.mean()),
        f1_std=float(f1s.std(ddof=1)),
        pooled_accuracy=float(np.trace(pooled)) / len(data),
        pooled_f1_buy_sell=f1_buy_sell(pooled),
        confusion=pooled.tolist(),
        label_counts=label_counts,
        params={
            "dimension": data[0][1].dimension,
            "lambda": params.lambda_reg,
            "epochs": params.epochs,
            "seed": params.seed,
            "folds": k,
            "gap": gap,
        },
        notes=notes,
    )
    logger.info(
        "Blocked CV: accuracy %.3f ± %.3f, F1(buy,sell) %.3f ± %.3f",
        report.accuracy_mean, report.accuracy_std, report.f1_mean, report.f1_std,
    )
    return report


# Model file: "twoplane v1" header, then sparse buy and sell planes.
_HEADER = re.compile(r"^twoplane v1 D=(\d+) lambda=(\S+) epochs=(\d+) seed=(-?\d+)$")


def _fmt(value: float) -> str:
    return repr(float(value))


def dumps_model(model: TwoPlaneModel) -> str:
    p = model.params
    lines = [f"twoplane v1 D={model.dimension} lambda={_fmt(p.lambda_reg)} epochs={p.epochs} seed={p.seed}"]
    for name, weights, bias in (
        ("buy", model.buy_weights, model.buy_bias),
        ("sell", model.sell_weights, model.sell_bias),
    ):
        lines.append(f"{name}_bias {_fmt(bias)}")
        lines.extend(f"{name} {i} {_fmt(weights[i])}" for i in np.flatnonzero(weights))
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> TwoPlaneModel:
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError("empty model file")
    match = _HEADER.match(lines[0].strip())
    if not match:
        raise ModelFormatError("bad header", line=1)
    dimension = int(match.group(1))
    try:
        check_dimension(dimension)
    except ModelParameterError as e:
        raise ModelFormatError(e.message, line=1) from None
    try:
        params = TrainingParams(
            lambda_reg=float(match.group(2)),
            epochs=int(match.group(3)),
            seed=int(match.group(4)),
        )
    except ValueError as e:
        raise ModelFormatError(str(e), line=1) from e

    weights = {"buy": np.zeros(dimension), "sell": np.zeros(dimension)}
    biases: dict[str, float] = {}
    section = None
    for line_no, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] in ("buy_bias", "sell_bias") and len(parts) == 2:
                section = parts[0][: -len("_bias")]
                if len(biases) >= 2 or section != ("buy", "sell")[len(biases)]:
                    raise ModelFormatError(f"unexpected {parts[0]}", line=line_no)
                biases[section] = float(parts[1])
            elif parts[0] == section and len(parts) == 3:
                index = int(parts[1])
                if not 0 <= index < dimension:
                    raise ModelFormatError(f"index {index} out of range", line=line_no)
                weights[section][index] = float(parts[2])
            else:
                raise ModelFormatError(f"unexpected line {raw.strip()!r}", line=line_no)
        except ValueError as e:
            raise ModelFormatError(str(e), line=line_no) from e
    if set(biases) != {"buy", "sell"}:
        raise ModelFormatError("model must contain buy and sell planes")

    return TwoPlaneModel(
        dimension=dimension,
        buy_weights=weights["buy"],
        buy_bias=biases["buy"],
        sell_weights=weights["sell"],
        sell_bias=biases["sell"],
        params=params,
    )


def save_model(model: TwoPlaneModel, path: Path) -> None:
    write_text(path, dumps_model(model))
    logger.info("Model written to %s", path)


def load_model(path: Path) -> TwoPlaneModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except UnicodeDecodeError as e:
        raise ModelFormatError(f"{path}: invalid UTF-8 ({e.reason})") from None
    return loads_model(text)
