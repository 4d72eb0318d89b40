"""Gradient boosted trees for binary classification, built from scratch.

Second-order (Newton) boosting on the logistic loss: per round the gradient
is ``p - y`` and the hessian ``p (1 - p)``, trees are grown level-wise with
exact greedy split search over midpoint thresholds, leaf weights are
``-G / (H + lambda)``, and the split gain is

    1/2 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma.

Ties between candidate splits are broken by lowest feature index, then
lowest threshold, so fitting is fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .metrics import TrainLog

MODEL_SCHEMA = "agisense-gbt/1"


@dataclass(frozen=True)
class GbtHyperparams:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    # Off by default: with hundreds of observations and p around 0.25, a
    # hessian floor of 1 forbids isolating small clusters of positives.
    min_child_weight: float = 0.0
    positive_weight: float = 1.0


@dataclass
class Leaf:
    weight: float


@dataclass
class Split:
    feature: int
    threshold: float
    gain: float
    left: "Split | Leaf"
    right: "Split | Leaf"


TreeNode = Split | Leaf


@dataclass
class TreeEnsemble:
    trees: list[TreeNode]
    base_score: float
    hp: GbtHyperparams
    n_features: int
    seed: int | None = None
    norm_stats: dict | None = None

    def __post_init__(self):
        if not np.isfinite(self.base_score):
            raise ValueError("base_score must be finite")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_loss(y: np.ndarray, score: np.ndarray, sample_weight: np.ndarray) -> float:
    # Stable binary cross-entropy from raw scores.
    ll = np.logaddexp(0.0, score) - y * score
    return float(np.sum(sample_weight * ll) / np.sum(sample_weight))


@dataclass
class _NodeSearchResult:
    feature: int
    threshold: float
    gain: float
    split_pos: int  # count of rows routed left, in sorted order of the feature


def _best_split(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    hp: GbtHyperparams,
) -> _NodeSearchResult | None:
    """Exact greedy search over all (feature, midpoint-threshold) pairs."""
    best: _NodeSearchResult | None = None
    lam = hp.reg_lambda
    for f in range(X.shape[1]):
        order = rows[np.argsort(X[rows, f], kind="stable")]
        v = X[order, f]
        cg = np.cumsum(g[order])
        ch = np.cumsum(h[order])
        G, H = cg[-1], ch[-1]
        parent = G * G / (H + lam)

        # Candidate k routes the first k+1 sorted rows left; only positions
        # where the value actually changes yield a usable threshold.
        cut = np.nonzero(v[:-1] < v[1:])[0]
        if cut.size == 0:
            continue
        GL, HL = cg[cut], ch[cut]
        GR, HR = G - GL, H - HL
        gains = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - hp.gamma
        ok = (HL >= hp.min_child_weight) & (HR >= hp.min_child_weight)
        if not ok.any():
            continue
        gains = np.where(ok, gains, -np.inf)
        k = int(np.argmax(gains))  # earliest max = lowest threshold
        gain = float(gains[k])
        if best is None or gain > best.gain:
            thr = float(0.5 * (v[cut[k]] + v[cut[k] + 1]))
            best = _NodeSearchResult(f, thr, gain, int(cut[k]) + 1)
    if best is None or best.gain <= 0.0:
        return None
    return best


def _grow_tree(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: GbtHyperparams
) -> TreeNode:
    """Level-wise growth to ``max_depth``; nodes without a positive-gain split become leaves."""
    lam = hp.reg_lambda

    def leaf(rows: np.ndarray) -> Leaf:
        G = float(np.sum(g[rows]))
        H = float(np.sum(h[rows]))
        return Leaf(weight=-G / (H + lam))

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        if depth >= hp.max_depth:
            return leaf(rows)
        found = _best_split(X, g, h, rows, hp)
        if found is None:
            return leaf(rows)
        order = rows[np.argsort(X[rows, found.feature], kind="stable")]
        left_rows = order[: found.split_pos]
        right_rows = order[found.split_pos:]
        return Split(
            feature=found.feature,
            threshold=found.threshold,
            gain=found.gain,
            left=build(left_rows, depth + 1),
            right=build(right_rows, depth + 1),
        )

    return build(np.arange(len(g)), 0)


def _tree_scores(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])

    def fill(node: TreeNode, rows: np.ndarray):
        if isinstance(node, Leaf):
            out[rows] = node.weight
            return
        go_left = X[rows, node.feature] < node.threshold
        fill(node.left, rows[go_left])
        fill(node.right, rows[~go_left])

    fill(tree, np.arange(X.shape[0]))
    return out


def fit_gbt(
    X: np.ndarray,
    y: np.ndarray,
    hp: GbtHyperparams = GbtHyperparams(),
    rng_seed: int | None = None,
) -> tuple[TreeEnsemble, TrainLog]:
    """Fit the boosted ensemble; returns it with the per-round training loss.

    The split search has no random component — the seed is recorded on the
    model for provenance only.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if X.shape[0] < 2:
        raise ValueError("need at least two training rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature value in X")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")

    sw = np.where(y == 1, hp.positive_weight, 1.0)
    p_bar = float(np.mean(y))
    base_score = float(np.log(p_bar / (1.0 - p_bar)))

    score = np.full(len(y), base_score)
    trees: list[TreeNode] = []
    log = TrainLog()
    log.train_loss.append(_log_loss(y, score, sw))
    for _ in range(hp.n_trees):
        p = _sigmoid(score)
        g = sw * (p - y)
        h = sw * p * (1.0 - p)
        tree = _grow_tree(X, g, h, hp)
        trees.append(tree)
        score = score + hp.learning_rate * _tree_scores(tree, X)
        log.train_loss.append(_log_loss(y, score, sw))
    log.chosen = len(trees)

    model = TreeEnsemble(
        trees=trees,
        base_score=base_score,
        hp=hp,
        n_features=X.shape[1],
        seed=rng_seed,
    )
    return model, log


def raw_scores(model: TreeEnsemble, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    """Pre-sigmoid ensemble score, optionally truncated to the first rounds."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"feature width {X.shape[1] if X.ndim == 2 else '?'} != {model.n_features}"
        )
    trees = model.trees if n_trees is None else model.trees[:n_trees]
    score = np.full(X.shape[0], model.base_score)
    for tree in trees:
        score += model.hp.learning_rate * _tree_scores(tree, X)
    return score


def predict_gbt(model: TreeEnsemble, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    """Agitation probabilities in (0, 1); classify at 0.5."""
    return _sigmoid(raw_scores(model, X, n_trees))


def staged_predict_gbt(model: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    """Probabilities after each boosting round: shape (n_trees, n)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError("feature width mismatch")
    score = np.full(X.shape[0], model.base_score)
    stages = np.empty((len(model.trees), X.shape[0]))
    for m, tree in enumerate(model.trees):
        score = score + model.hp.learning_rate * _tree_scores(tree, X)
        stages[m] = _sigmoid(score)
    return stages


def _walk(node: TreeNode):
    if isinstance(node, Split):
        yield node
        yield from _walk(node.left)
        yield from _walk(node.right)


def importance_gain(model: TreeEnsemble) -> dict[int, float]:
    """Total split gain per feature index (absent features report 0 via .get)."""
    gains: dict[int, float] = {}
    for tree in model.trees:
        for split in _walk(tree):
            gains[split.feature] = gains.get(split.feature, 0.0) + split.gain
    return gains


def importance_weight(model: TreeEnsemble) -> dict[int, int]:
    """Number of splits using each feature index."""
    counts: dict[int, int] = {}
    for tree in model.trees:
        for split in _walk(tree):
            counts[split.feature] = counts.get(split.feature, 0) + 1
    return counts


def importance_vector(model: TreeEnsemble, kind: str = "gain") -> np.ndarray:
    imp = importance_gain(model) if kind == "gain" else importance_weight(model)
    out = np.zeros(model.n_features)
    for f, v in imp.items():
        out[f] = v
    return out


# ---------------------------------------------------------------------------
# JSON bundle

def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"weight": node.weight}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "gain": node.gain,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "weight" in d:
        return Leaf(weight=d["weight"])
    return Split(
        feature=d["feature"],
        threshold=d["threshold"],
        gain=d["gain"],
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
    )


def save_gbt(model: TreeEnsemble, path: str | Path, feature_layout: dict | None = None) -> None:
    bundle = {
        "schema": MODEL_SCHEMA,
        "kind": "gbt",
        "hyperparams": asdict(model.hp),
        "base_score": model.base_score,
        "n_features": model.n_features,
        "seed": model.seed,
        "trees": [_node_to_dict(t) for t in model.trees],
        "feature_layout": feature_layout,
        "norm_stats": model.norm_stats,
    }
    with open(path, "w") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_gbt(path: str | Path) -> TreeEnsemble:
    with open(path) as fh:
        bundle = json.load(fh)
    if bundle.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"{path}: not a {MODEL_SCHEMA} bundle")
    return TreeEnsemble(
        trees=[_node_from_dict(d) for d in bundle["trees"]],
        base_score=bundle["base_score"],
        hp=GbtHyperparams(**bundle["hyperparams"]),
        n_features=bundle["n_features"],
        seed=bundle["seed"],
        norm_stats=bundle.get("norm_stats"),
    )
