"""Second-order gradient-boosted trees with exact greedy splits, one-vs-rest.

Split finding sorts each feature by ``(value, gradient, hessian)`` so that
prefix sums do not depend on row order; node totals use ``math.fsum``. A
fit is therefore identical under any permutation of the rows.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .rng import substream
from .tsfeat.matrix import MISSING_FILL, FeatureMatrix

_LOG_RANGE = (1e-3, 1e3)
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BoostConfig:
    max_depth: int = 6
    eta: float = 0.3
    gamma: float = 0.0
    reg_lambda: float = 1.0
    reg_alpha: float = 0.0
    scale_pos_weight: float = 1.0
    rounds: int = 200
    patience: int = 20

    def __post_init__(self):
        lo, hi = _LOG_RANGE
        if not 1 <= self.max_depth <= 100:
            raise ConfigError(f"max_depth must be in [1, 100], got {self.max_depth}")
        for name in ("eta", "reg_lambda", "scale_pos_weight"):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ConfigError(f"{name} must be in [{lo}, {hi}], got {v}")
        for name in ("gamma", "reg_alpha"):  # zero switches the term off
            v = getattr(self, name)
            if not (v == 0 or lo <= v <= hi):
                raise ConfigError(f"{name} must be 0 or in [{lo}, {hi}], got {v}")
        if self.rounds < 1 or self.patience < 1:
            raise ConfigError("rounds and patience must be >= 1")


@dataclass
class TreeNode:
    """A leaf (``weight`` set) or a split on ``feature < threshold``."""

    weight: float | None = None
    feature: int = -1
    threshold: float = 0.0
    default_left: bool = True
    gain: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.weight is not None

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())

    def predict_row(self, row: np.ndarray) -> float:
        node = self
        while not node.is_leaf:
            v = row[node.feature]
            if math.isnan(v) or v == MISSING_FILL:
                node = node.left if node.default_left else node.right
            else:
                node = node.left if v < node.threshold else node.right
        return node.weight

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_row(r) for r in X])

    def splits(self):
        if not self.is_leaf:
            yield self
            yield from self.left.splits()
            yield from self.right.splits()

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.weight}
        return {"feature": self.feature, "threshold": self.threshold, "default_left": self.default_left,
                "gain": self.gain, "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "leaf" in d:
            return cls(weight=float(d["leaf"]))
        return cls(feature=int(d["feature"]), threshold=float(d["threshold"]), default_left=bool(d["default_left"]),
                   gain=float(d["gain"]), left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]))


def soft_threshold(g: float, alpha: float) -> float:
    return math.copysign(max(abs(g) - alpha, 0.0), g) if alpha else g


def leaf_weight(G: float, H: float, cfg: BoostConfig) -> float:
    return -soft_threshold(G, cfg.reg_alpha) / (H + cfg.reg_lambda)


def _score(G, H, cfg):
    t = soft_threshold(G, cfg.reg_alpha) if np.isscalar(G) else _soft_vec(G, cfg.reg_alpha)
    return t * t / (H + cfg.reg_lambda)


def _soft_vec(G: np.ndarray, alpha: float) -> np.ndarray:
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0) if alpha else G


def split_gain(GL: float, HL: float, GR: float, HR: float, cfg: BoostConfig) -> float:
    """½[T(GL)²/(HL+λ) + T(GR)²/(HR+λ) − T(G)²/(H+λ)] − γ with T the L1 soft threshold."""
    return 0.5 * (_score(GL, HL, cfg) + _score(GR, HR, cfg) - _score(GL + GR, HL + HR, cfg)) - cfg.gamma


@dataclass(frozen=True)
class SplitChoice:
    feature: int
    threshold: float
    gain: float


def best_split(X: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: BoostConfig) -> SplitChoice | None:
    """Highest-gain ``x < threshold`` split over all features; ties go to the lowest
    feature, then the lowest threshold. ``None`` when no split has positive gain."""
    n, F = X.shape
    if n < 2:
        return None
    G, H = math.fsum(g), math.fsum(h)
    order = np.lexsort((np.broadcast_to(h[:, None], X.shape), np.broadcast_to(g[:, None], X.shape), X), axis=0)
    xs = np.take_along_axis(X, order, axis=0)
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    GR, HR = G - GL, H - HL
    gains = 0.5 * (_score(GL, HL, cfg) + _score(GR, HR, cfg) - _score(G, H, cfg)) - cfg.gamma
    valid = xs[1:] > xs[:-1]
    gains = np.where(valid, gains, -np.inf)
    best_per_feature = gains.max(axis=0)
    top = best_per_feature.max()
    if not top > 0:
        return None
    # running sums differ from exact ones in the last bits, so near-equal gains count as ties
    tied = gains >= top - TIE_TOL * max(1.0, abs(top))
    f = int(np.flatnonzero(tied.any(axis=0))[0])
    i = int(np.flatnonzero(tied[:, f])[0])  # lowest threshold among ties
    top = float(gains[i, f])
    a, b = xs[i, f], xs[i + 1, f]
    thr = a + (b - a) / 2
    if not a < thr <= b:
        thr = b
    return SplitChoice(f, float(thr), float(top))


def fit_tree(g, h, X, config: BoostConfig = BoostConfig(), _depth: int = 0) -> TreeNode:
    """Exact greedy regression tree on gradients ``g`` and hessians ``h``.

    Leaf weights are the unshrunk Newton steps; the booster applies ``eta``.
    """
    X = np.asarray(X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("fit_tree needs a non-empty 2-D matrix")
    if len(g) != X.shape[0] or len(h) != X.shape[0]:
        raise DataError("gradients and hessians must have one entry per row")
    G, H = math.fsum(g), math.fsum(h)
    split = best_split(X, g, h, config) if _depth < config.max_depth else None
    if split is None:
        return TreeNode(weight=leaf_weight(G, H, config))
    col = X[:, split.feature]
    go_left = col < split.threshold
    missing = col == MISSING_FILL
    if missing.any():
        default_left = bool(go_left[missing][0])
    else:
        default_left = math.fsum(h[go_left]) >= math.fsum(h[~go_left])
    return TreeNode(
        feature=split.feature,
        threshold=split.threshold,
        default_left=default_left,
        gain=split.gain,
        left=fit_tree(g[go_left], h[go_left], X[go_left], config, _depth + 1),
        right=fit_tree(g[~go_left], h[~go_left], X[~go_left], config, _depth + 1),
    )


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e))


def logloss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _scale_tree(node: TreeNode, eta: float) -> TreeNode:
    if node.is_leaf:
        return TreeNode(weight=node.weight * eta)
    return replace(node, left=_scale_tree(node.left, eta), right=_scale_tree(node.right, eta))


def boost_binary(X, y, config: BoostConfig = BoostConfig(), eval_set=None, base_score: float = 0.5):
    """Logistic boosting for one class; returns ``(trees, train_losses)``.

    With ``eval_set=(Xv, yv)`` training stops after ``patience`` rounds
    without a lower held-out log loss and keeps the best prefix of trees.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    base = math.log(base_score / (1 - base_score))
    margin = np.full(len(y), base)
    weight = np.where(y > 0.5, config.scale_pos_weight, 1.0)
    trees: list[TreeNode] = []
    losses = []
    if eval_set is not None:
        Xv, yv = (np.asarray(a, dtype=np.float64) for a in eval_set)
        margin_v = np.full(len(yv), base)
        best, best_n, stale = math.inf, 0, 0
    for _ in range(config.rounds):
        p = _sigmoid(margin)
        g = (p - y) * weight
        h = np.maximum(p * (1 - p), 1e-16) * weight
        tree = _scale_tree(fit_tree(g, h, X, config), config.eta)
        trees.append(tree)
        margin = margin + tree.predict(X)
        losses.append(logloss(y, _sigmoid(margin)))
        if eval_set is not None:
            margin_v = margin_v + tree.predict(Xv)
            val = logloss(yv, _sigmoid(margin_v))
            if val < best:
                best, best_n, stale = val, len(trees), 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if eval_set is not None:
        trees = trees[:best_n]
    return trees, losses


@dataclass
class BoostedModel:
    classes: tuple[str, ...]
    columns: tuple[str, ...]
    trees: dict[str, list[TreeNode]]
    base_score: float = 0.5
    skipped: tuple[str, ...] = ()
    config: BoostConfig = field(default_factory=BoostConfig)

    def margins(self, X: np.ndarray) -> np.ndarray:
        base = math.log(self.base_score / (1 - self.base_score))
        out = np.empty((len(X), len(self.classes)))
        for j, c in enumerate(self.classes):
            for i, row in enumerate(X):
                out[i, j] = math.fsum([base] + [t.predict_row(row) for t in self.trees.get(c, [])])
        return out

    def to_json(self) -> str:
        return json.dumps({
            "format": "ecgbench-boost",
            "version": 1,
            "classes": list(self.classes),
            "columns": list(self.columns),
            "base_score": self.base_score,
            "skipped": list(self.skipped),
            "config": asdict(self.config),
            "trees": {c: [t.to_dict() for t in ts] for c, ts in self.trees.items()},
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BoostedModel":
        try:
            d = json.loads(text)
            if d.get("format") != "ecgbench-boost" or d.get("version") != 1:
                raise SchemaError("not a version-1 boosted model file")
            return cls(
                classes=tuple(d["classes"]),
                columns=tuple(d["columns"]),
                trees={c: [TreeNode.from_dict(t) for t in ts] for c, ts in d["trees"].items()},
                base_score=float(d["base_score"]),
                skipped=tuple(d["skipped"]),
                config=BoostConfig(**d["config"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"corrupt boosted model: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BoostedModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit_ovr(
    matrix: FeatureMatrix,
    labels: Sequence[Sequence[str]] | np.ndarray,
    classes: Sequence[str],
    config: BoostConfig = BoostConfig(),
    eval_set: tuple[FeatureMatrix, Sequence[Sequence[str]]] | None = None,
) -> BoostedModel:
    """One logistic ensemble per class. ``labels`` holds one label collection per
    row, or a binary indicator matrix ordered like ``classes``."""
    if not classes:
        raise ConfigError("class vocabulary is empty")
    Y = label_matrix(labels, classes)
    if Y.shape[0] != matrix.shape[0]:
        raise DataError("one label set per matrix row required")
    X = np.where(np.isnan(matrix.values), MISSING_FILL, matrix.values)
    Xv = Yv = None
    if eval_set is not None:
        Xv = np.where(np.isnan(eval_set[0].select(matrix.columns).values), MISSING_FILL,
                      eval_set[0].select(matrix.columns).values)
        Yv = label_matrix(eval_set[1], classes)
    trees, skipped = {}, []
    for j, c in enumerate(classes):
        if not Y[:, j].any():
            warnings.warn(f"class {c!r} has no positive training records; skipped", stacklevel=2)
            skipped.append(c)
            continue
        ev = None if Xv is None else (Xv, Yv[:, j])
        trees[c], _ = boost_binary(X, Y[:, j], config, ev)
    return BoostedModel(tuple(classes), matrix.columns, trees, 0.5, tuple(skipped), config)


def label_matrix(labels, classes: Sequence[str]) -> np.ndarray:
    if isinstance(labels, np.ndarray) and labels.dtype != object and labels.ndim == 2:
        if labels.shape[1] != len(classes):
            raise DataError("indicator matrix width differs from the class count")
        return labels.astype(np.float64)
    index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((len(labels), len(classes)))
    for r, row in enumerate(labels):
        for lab in row:
            if lab in index:
                Y[r, index[lab]] = 1.0
    return Y


def _as_rows(model: BoostedModel, data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        missing = [c for c in model.columns if c not in data.columns]
        if missing:
            raise SchemaError(f"feature matrix lacks {len(missing)} training columns, e.g. {missing[0]!r}")
        values = data.select(model.columns).values
    elif isinstance(data, Mapping):
        missing = [c for c in model.columns if c not in data]
        if missing:
            raise SchemaError(f"feature vector lacks column {missing[0]!r}")
        values = np.array([[math.nan if data[c] is None else float(data[c]) for c in model.columns]])
    else:
        values = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if values.shape[1] != len(model.columns):
            raise SchemaError(f"expected {len(model.columns)} columns, got {values.shape[1]}")
    return np.where(np.isnan(values), MISSING_FILL, values)


def predict_proba(model: BoostedModel, data) -> np.ndarray:
    """``(rows, classes)`` probabilities; skipped classes get probability 0."""
    X = _as_rows(model, data)
    p = _sigmoid(model.margins(X))
    for c in model.skipped:
        p[:, model.classes.index(c)] = 0.0
    return p


def predict_labels(model: BoostedModel, data, threshold: float = 0.5) -> list[tuple[str, ...]]:
    p = predict_proba(model, data)
    return [tuple(c for c, v in zip(model.classes, row) if v >= threshold) for row in p]


def importance(model: BoostedModel) -> dict[str, float]:
    """Total split gain per feature over every tree of every class; unused features are absent."""
    parts: dict[int, list[float]] = {}
    for ts in model.trees.values():
        for t in ts:
            for node in t.splits():
                parts.setdefault(node.feature, []).append(node.gain)
    return {model.columns[f]: math.fsum(v) for f, v in sorted(parts.items())}


def sample_config(rng: np.random.Generator, rounds: int = 200, patience: int = 20) -> BoostConfig:
    """One draw from the search space: depth uniform on [2, 100], the rest log-uniform on [1e-3, 1e3]."""
    lo, hi = math.log(_LOG_RANGE[0]), math.log(_LOG_RANGE[1])
    draw = lambda: float(math.exp(rng.uniform(lo, hi)))  # noqa: E731
    return BoostConfig(
        max_depth=int(rng.integers(2, 101)),
        gamma=draw(),
        eta=draw(),
        scale_pos_weight=draw(),
        reg_lambda=draw(),
        reg_alpha=draw(),
        rounds=rounds,
        patience=patience,
    )


def random_search(
    train: tuple[FeatureMatrix, Sequence[Sequence[str]]],
    valid: tuple[FeatureMatrix, Sequence[Sequence[str]]],
    classes: Sequence[str],
    trials: int = 10,
    seed: int = 0,
    rounds: int = 50,
) -> tuple[BoostConfig, list[tuple[BoostConfig, float]]]:
    """Seeded random search; the score is mean held-out log loss over classes."""
    rng = substream(seed, "boost-search")
    Yv = label_matrix(valid[1], classes)
    history = []
    for _ in range(trials):
        cfg = sample_config(rng, rounds=rounds)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit_ovr(train[0], train[1], classes, cfg, eval_set=valid)
        p = predict_proba(model, valid[0])
        score = float(np.mean([logloss(Yv[:, j], p[:, j]) for j in range(len(classes))]))
        history.append((cfg, score))
    best = min(history, key=lambda t: t[1])[0]
    return best, history
