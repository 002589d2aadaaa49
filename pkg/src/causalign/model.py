"""Supervised edge prediction from instance-aligned synthetic training sets.

The training set pairs datasets sampled from fitted mechanisms with the
graphs that induced them. Each ordered node pair is summarized by a fixed
16-dimensional feature vector and a small MLP (two tanh hidden layers of
width 64, sigmoid output) is trained with mini-batch gradient descent to
predict edge membership. A 1-nearest-neighbor reduction that just returns
the best-scoring training graph is provided as the degenerate special
case of the same interface.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegreeCapError,
    InputQualityError,
    StructuralInputError,
)
from .graph import Dag
from .scm import Dataset
from .sim import FittedScm, RegressorConfig, fit_node, sample_from_fitted
from .scoring import ScoreConfig, ScoreEngine

__all__ = [
    "PAIR_FEATURE_NAMES",
    "TrainingSet",
    "TrainConfig",
    "EdgePredictor",
    "featurize_pair",
    "featurize_all",
    "generate_training_set",
    "train",
    "predict",
    "knn_score_predict",
]

PAIR_FEATURE_NAMES = (
    "mean_src",
    "std_src",
    "skew_src",
    "kurt_src",
    "mean_dst",
    "std_dst",
    "skew_dst",
    "kurt_dst",
    "pearson",
    "spearman",
    "fwd_resid_var_ratio",
    "fwd_resid_mag_corr",
    "rev_resid_var_ratio",
    "rev_resid_mag_corr",
    "partial_abs_max",
    "partial_abs_mean",
)

_HIDDEN = (64, 64)
_DIR_RIDGE = 1e-6


def _rank_std(x: np.ndarray) -> np.ndarray:
    """Standardized midranks in one pass.

    Rank mean is exactly (n+1)/2; without ties the rank std has the
    closed form sqrt((n^2-1)/12), and with ties it is computed over the
    value-sorted rank vector, so the result never depends on the order
    the values arrived in.
    """
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    sx = x[order]
    mu = (n + 1) / 2.0
    tied = sx[1:] == sx[:-1]
    if not tied.any():
        sd = math.sqrt((n * n - 1) / 12.0)
        out = np.empty(n, dtype=float)
        out[order] = np.arange(1, n + 1, dtype=float)
        out -= mu
        out /= sd
        return out
    boundaries = np.flatnonzero(~tied) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    mid = (starts + ends + 1) / 2.0
    ranks_sorted = np.repeat(mid, ends - starts)
    sd = float(np.sqrt(np.mean((ranks_sorted - mu) ** 2)))
    if sd == 0.0:
        return np.zeros(n, dtype=float)
    out = np.empty(n, dtype=float)
    out[order] = ranks_sorted
    out -= mu
    out /= sd
    return out


class _DatasetStats:
    """Per-dataset precomputation shared by every pair's features."""

    def __init__(self, values: np.ndarray):
        self.values = values
        self.n, self.d = values.shape
        self._ones = np.ones(self.n)
        # every statistic is computed per column from a contiguous copy
        # (axis-0 reductions of the full matrix are not bitwise stable
        # under column reordering), so permuting variable labels permutes
        # the features exactly (bit for bit)
        self.mean = np.zeros(self.d)
        self.std = np.zeros(self.d)
        self.skew = np.zeros(self.d)
        self.kurt = np.zeros(self.d)
        self._zcols: list[np.ndarray] = []
        rzcols: list[np.ndarray] = []
        for j in range(self.d):
            col = np.ascontiguousarray(values[:, j], dtype=float)
            mu = float(np.dot(col, self._ones)) / self.n
            centered = col - mu
            sd = math.sqrt(float(np.dot(centered, centered)) / self.n)
            self.mean[j] = mu
            self.std[j] = sd
            if sd == 0.0:
                self._zcols.append(np.zeros(self.n))
                rzcols.append(np.zeros(self.n))
                continue
            z = centered / sd
            z2 = z * z
            self.skew[j] = float(np.dot(z2, z)) / self.n
            self.kurt[j] = float(np.dot(z2, z2)) / self.n - 3.0
            self._zcols.append(z)
            rzcols.append(_rank_std(col))
        # correlation matrices via per-pair dots: summation order is fixed
        # per pair, independent of which other columns exist
        self.pearson = np.eye(self.d)
        self.spearman = np.eye(self.d)
        for i in range(self.d):
            for j in range(i + 1, self.d):
                r = float(np.dot(self._zcols[i], self._zcols[j])) / self.n
                self.pearson[i, j] = self.pearson[j, i] = r
                rs = float(np.dot(rzcols[i], rzcols[j])) / self.n
                self.spearman[i, j] = self.spearman[j, i] = rs
        self._designs: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._dir_cache: dict[tuple[int, int], tuple[float, float]] = {}
        self._partial_cache: dict[tuple[int, int], tuple[float, float]] = {}

    def _std_vector(self, x: np.ndarray) -> np.ndarray:
        mu = float(np.dot(x, self._ones)) / self.n
        centered = x - mu
        sd = math.sqrt(float(np.dot(centered, centered)) / self.n)
        if sd == 0.0:
            return np.zeros(self.n)
        return centered / sd

    def direction_design(self, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-source regression ingredients, computed once: design matrix
        (intercept, linear, two Fourier harmonics of the standardized
        column), inverse penalized Gram, and standardized |source|."""
        hit = self._designs.get(src)
        if hit is not None:
            return hit
        t = self._zcols[src]
        design = np.column_stack(
            [np.ones(self.n), t, np.sin(t), np.cos(t), np.sin(2 * t), np.cos(2 * t)]
        )
        gram = design.T @ design
        penalty = np.full(design.shape[1], _DIR_RIDGE)
        penalty[0] = 0.0
        gram[np.diag_indices_from(gram)] += penalty
        entry = (design, np.linalg.inv(gram), self._std_vector(np.abs(t)))
        self._designs[src] = entry
        return entry

    def direction_stats(self, src: int, dst: int) -> tuple[float, float]:
        """Residual variance ratio and residual-magnitude correlation for
        the regression dst ~ basis(src).

        The magnitude correlation is Pearson between |residual| and
        |standardized source|: a plain signed correlation is ~0 for any
        least-squares fit, while magnitude dependence (heteroscedastic
        bowtie) is exactly the anti-causal footprint of additive-noise
        data, which is what this feature is for.

        Every step is per-target (matrix-vector products against the
        cached source design), so a pair's value never depends on which
        other columns exist.
        """
        hit = self._dir_cache.get((src, dst))
        if hit is not None:
            return hit
        if self.std[dst] == 0.0:
            entry = (0.0, 0.0)
        else:
            design, inv_gram, mag_src_std = self.direction_design(src)
            target = self._zcols[dst]
            coef = inv_gram @ (design.T @ target)
            resid = target - design @ coef
            centered = resid - float(np.dot(resid, self._ones)) / self.n
            ratio = float(np.dot(centered, centered)) / self.n
            corr = float(np.dot(self._std_vector(np.abs(resid)), mag_src_std)) / self.n
            entry = (ratio, corr)
        self._dir_cache[(src, dst)] = entry
        return entry

    def partial_summaries(self, i: int, j: int) -> tuple[float, float]:
        """Max and mean of |partial corr(i, j | k)| over single conditioners
        k; the mean sums in sorted order so it is independent of node
        labelling. With d == 2 both default to |pearson(i, j)|."""
        key = (i, j) if i < j else (j, i)
        hit = self._partial_cache.get(key)
        if hit is not None:
            return hit
        r = self.pearson
        mask = np.ones(self.d, dtype=bool)
        mask[i] = mask[j] = False
        if not mask.any():
            base = abs(r[i, j])
            entry = (base, base)
        else:
            rik = r[i, mask]
            rjk = r[j, mask]
            denom_sq = (1.0 - rik**2) * (1.0 - rjk**2)
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.abs((r[i, j] - rik * rjk) / np.sqrt(denom_sq))
            vals[denom_sq <= 1e-12] = 0.0
            vals.sort()
            entry = (float(vals[-1]), float(vals.mean()))
        self._partial_cache[key] = entry
        return entry


def _pair_features(stats: _DatasetStats, i: int, j: int) -> np.ndarray:
    fwd_ratio, fwd_corr = stats.direction_stats(i, j)
    rev_ratio, rev_corr = stats.direction_stats(j, i)
    p_max, p_mean = stats.partial_summaries(i, j)
    return np.array(
        [
            stats.mean[i],
            stats.std[i],
            stats.skew[i],
            stats.kurt[i],
            stats.mean[j],
            stats.std[j],
            stats.skew[j],
            stats.kurt[j],
            stats.pearson[i, j],
            stats.spearman[i, j],
            fwd_ratio,
            fwd_corr,
            rev_ratio,
            rev_corr,
            p_max,
            p_mean,
        ],
        dtype=float,
    )


def featurize_pair(dataset: Dataset, i: int, j: int) -> np.ndarray:
    """Feature vector for the ordered pair (i, j). Deterministic function
    of the data; swapping i and j swaps the per-endpoint and per-direction
    blocks and leaves the symmetric entries unchanged."""
    if not (0 <= i < dataset.d and 0 <= j < dataset.d) or i == j:
        raise StructuralInputError(f"invalid pair ({i}, {j}) for d={dataset.d}")
    return _pair_features(_DatasetStats(dataset.values), i, j)


def pair_order(d: int) -> list[tuple[int, int]]:
    """Row order used by featurize_all and the flattened label vectors."""
    return [(i, j) for i in range(d) for j in range(d) if i != j]


def featurize_all(dataset: Dataset) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Features for every ordered pair; shares the per-dataset
    precomputation, so this is much cheaper than d*(d-1) featurize_pair
    calls and returns identical values."""
    stats = _DatasetStats(dataset.values)
    pairs = pair_order(dataset.d)
    feats = np.vstack([_pair_features(stats, i, j) for i, j in pairs])
    return pairs, feats


# ----------------------------------------------------------------------
# training-set synthesis


@dataclass
class TrainingSet:
    """Instance-aligned training data: (dataset, graph) pairs where each
    dataset was sampled from mechanisms fitted on the test data under the
    paired graph."""

    instances: list[tuple[Dataset, Dag]]
    provenance: dict = field(default_factory=dict)


def generate_training_set(
    graphs: list[Dag],
    dataset: Dataset,
    regressor: RegressorConfig | None = None,
    noise_mode: str = "empirical",
    rng: np.random.Generator | None = None,
    node_fitter=None,
) -> TrainingSet:
    """Fit each graph's mechanisms on the dataset and forward-sample one
    aligned dataset of the same size per graph.

    Node fits are cached across graphs keyed by (node, parent set), since
    collected ensembles overlap heavily; node_fitter(node, parents) can
    supply fits from an existing cache (e.g. the score engine that
    already fitted every visited parent set on this dataset). Graphs
    violating the in-degree cap are skipped with a warning; if every
    graph is skipped the cap error propagates.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not graphs:
        raise ConfigError("graphs list is empty")
    regressor = regressor if regressor is not None else RegressorConfig()
    values = dataset.values
    cache: dict[tuple[int, tuple[int, ...]], object] = {}
    instances: list[tuple[Dataset, Dag]] = []
    kept: list[int] = []
    skipped: list[int] = []
    for idx, g in enumerate(graphs):
        if g.d != dataset.d:
            raise StructuralInputError(f"graph {idx} has d={g.d}, dataset d={dataset.d}")
        try:
            nodes = []
            for node in range(g.d):
                parents = g.parents(node)
                key = (node, parents)
                fn = cache.get(key)
                if fn is None:
                    if node_fitter is not None:
                        fn = node_fitter(node, parents)
                    else:
                        pm = values[:, parents] if parents else np.zeros((dataset.n, 0))
                        fn = fit_node(node, parents, values[:, node], pm, regressor)
                    cache[key] = fn
                nodes.append(fn)
        except DegreeCapError as exc:
            warnings.warn(f"skipping graph {idx}: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append(idx)
            continue
        fitted = FittedScm(dag=g, config=regressor, nodes=nodes)
        sampled = sample_from_fitted(fitted, dataset.n, rng, noise_mode=noise_mode)
        instances.append((sampled, g))
        kept.append(idx)
    if not instances:
        raise DegreeCapError("every graph exceeded the in-degree cap")
    return TrainingSet(
        instances=instances,
        provenance={
            "source_indices": kept,
            "skipped_indices": skipped,
            "noise_mode": noise_mode,
            "n": dataset.n,
        },
    )


# ----------------------------------------------------------------------
# MLP edge predictor


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 256
    momentum: float = 0.9
    seed: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class EdgePredictor:
    """Two-hidden-layer tanh MLP with sigmoid output over pair features.

    Normalization statistics are frozen at training time and applied to
    every later input. All math is plain numpy with analytic gradients.
    """

    def __init__(self, weights: dict, feature_mean, feature_std, config: TrainConfig, epoch_losses=None):
        self.w1 = np.asarray(weights["w1"], dtype=float)
        self.b1 = np.asarray(weights["b1"], dtype=float)
        self.w2 = np.asarray(weights["w2"], dtype=float)
        self.b2 = np.asarray(weights["b2"], dtype=float)
        self.w3 = np.asarray(weights["w3"], dtype=float)
        self.b3 = float(weights["b3"])
        self.feature_mean = np.asarray(feature_mean, dtype=float)
        self.feature_std = np.asarray(feature_std, dtype=float)
        self.config = config
        self.epoch_losses = list(epoch_losses) if epoch_losses is not None else []

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    @staticmethod
    def initialize(n_features: int, config: TrainConfig, rng: np.random.Generator) -> "EdgePredictor":
        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        weights = {
            "w1": glorot(n_features, _HIDDEN[0]),
            "b1": np.zeros(_HIDDEN[0]),
            "w2": glorot(_HIDDEN[0], _HIDDEN[1]),
            "b2": np.zeros(_HIDDEN[1]),
            "w3": glorot(_HIDDEN[1], 1)[:, 0],
            "b3": 0.0,
        }
        return EdgePredictor(weights, np.zeros(n_features), np.ones(n_features), config)

    # -- math ---------------------------------------------------------------

    def normalize(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.feature_mean) / self.feature_std

    def logits(self, fn: np.ndarray) -> np.ndarray:
        h1 = np.tanh(fn @ self.w1 + self.b1)
        h2 = np.tanh(h1 @ self.w2 + self.b2)
        return h2 @ self.w3 + self.b3

    def forward(self, fn: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(fn))

    def loss_and_grads(self, fn: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
        """Mean binary cross-entropy and its gradients on one batch."""
        batch = fn.shape[0]
        z1 = fn @ self.w1 + self.b1
        h1 = np.tanh(z1)
        z2 = h1 @ self.w2 + self.b2
        h2 = np.tanh(z2)
        z = h2 @ self.w3 + self.b3
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        p = _sigmoid(z)
        dz = (p - y) / batch
        grads = {
            "w3": h2.T @ dz,
            "b3": float(dz.sum()),
        }
        dh2 = np.outer(dz, self.w3)
        dz2 = dh2 * (1.0 - h2 * h2)
        grads["w2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ self.w2.T
        dz1 = dh1 * (1.0 - h1 * h1)
        grads["w1"] = fn.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads

    # -- flat parameter view (gradient checks, optimizer) ---------------------

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2, self.w3, [self.b3]]
        )

    def set_params_flat(self, vec: np.ndarray) -> None:
        shapes = [self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape, self.w3.shape, (1,)]
        pos = 0
        parts = []
        for shape in shapes:
            size = int(np.prod(shape))
            parts.append(vec[pos : pos + size].reshape(shape))
            pos += size
        self.w1, self.b1, self.w2, self.b2, self.w3 = parts[:5]
        self.b3 = float(parts[5][0])

    def grads_flat(self, grads: dict) -> np.ndarray:
        return np.concatenate(
            [
                grads["w1"].ravel(),
                grads["b1"],
                grads["w2"].ravel(),
                grads["b2"],
                grads["w3"],
                [grads["b3"]],
            ]
        )

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "arch": {"n_features": self.n_features, "hidden": list(_HIDDEN)},
                "weights": {
                    "w1": self.w1.tolist(),
                    "b1": self.b1.tolist(),
                    "w2": self.w2.tolist(),
                    "b2": self.b2.tolist(),
                    "w3": self.w3.tolist(),
                    "b3": self.b3,
                },
                "feature_mean": self.feature_mean.tolist(),
                "feature_std": self.feature_std.tolist(),
                "feature_names": list(PAIR_FEATURE_NAMES),
                "train_config": {
                    "learning_rate": self.config.learning_rate,
                    "epochs": self.config.epochs,
                    "batch_size": self.config.batch_size,
                    "momentum": self.config.momentum,
                    "seed": self.config.seed,
                },
                "epoch_losses": self.epoch_losses,
            }
        )

    @staticmethod
    def from_json(text: str) -> "EdgePredictor":
        obj = json.loads(text)
        cfg = obj["train_config"]
        config = TrainConfig(
            learning_rate=cfg["learning_rate"],
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            momentum=cfg["momentum"],
            seed=cfg["seed"],
        )
        return EdgePredictor(
            obj["weights"], obj["feature_mean"], obj["feature_std"], config, obj.get("epoch_losses")
        )


def train(
    training_set: TrainingSet,
    config: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> EdgePredictor:
    """Featurize every instance, freeze normalization statistics, and run
    seeded mini-batch gradient descent with momentum on mean BCE."""
    config = config if config is not None else TrainConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    feats_list = []
    labels_list = []
    for data, g in training_set.instances:
        pairs, feats = featurize_all(data)
        if not np.isfinite(feats).all():
            raise InputQualityError("non-finite pair features in training set")
        idx = np.asarray(pairs)
        labels_list.append(g.adjacency[idx[:, 0], idx[:, 1]].astype(float))
        feats_list.append(feats)
    feats = np.vstack(feats_list)
    labels = np.concatenate(labels_list)

    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    fn = (feats - mean) / std

    model = EdgePredictor.initialize(feats.shape[1], config, rng)
    model.feature_mean = mean
    model.feature_std = std

    velocity = np.zeros_like(model.params_flat())
    n = fn.shape[0]
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = model.loss_and_grads(fn[idx], labels[idx])
            gvec = model.grads_flat(grads)
            velocity = config.momentum * velocity - config.learning_rate * gvec
            model.set_params_flat(model.params_flat() + velocity)
            batch_losses.append(loss)
        model.epoch_losses.append(float(np.mean(batch_losses)))
    return model


def predict(predictor: EdgePredictor, dataset: Dataset) -> np.ndarray:
    """Edge-probability matrix for every ordered pair; diagonal is 0."""
    pairs, feats = featurize_all(dataset)
    if not np.isfinite(feats).all():
        raise InputQualityError("non-finite pair features at prediction time")
    if feats.shape[1] != predictor.n_features:
        raise StructuralInputError(
            f"predictor expects {predictor.n_features} features, got {feats.shape[1]}"
        )
    probs = predictor.forward(predictor.normalize(feats))
    out = np.zeros((dataset.d, dataset.d), dtype=float)
    for (i, j), p in zip(pairs, probs):
        out[i, j] = p
    return out


def knn_score_predict(
    training_set: TrainingSet,
    dataset: Dataset,
    score_config: ScoreConfig | None = None,
) -> Dag:
    """1-nearest-neighbor on the score: return the training graph whose
    total score against the test dataset is highest (ties -> lowest
    index). The shared engine makes this cheap for overlapping graphs."""
    engine = ScoreEngine(dataset, score_config)
    totals = np.array([engine.score(g).total for _, g in training_set.instances])
    return training_set.instances[int(np.argmax(totals))][1]
