"""Interpretable CART-style decision tree over event feature vectors.

Greedy recursive partitioning on one feature at a time, minimizing weighted
Gini impurity of the children.  Candidate thresholds are midpoints between
consecutive distinct sorted values; rows with feature < threshold go left,
rows with feature >= threshold go right.  Ties between candidate splits are
broken toward the lowest feature index, then the smallest threshold, so
training is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    max_depth: int = 8
    min_leaf: int = 5
    min_impurity_decrease: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass
class TreeNode:
    """One node; leaves have feature None.  Every node keeps its class
    histogram and training fraction (the interpretability payload)."""

    histogram: dict
    fraction: float
    predicted: str
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class PathStep:
    feature_index: int
    threshold: float
    went_left: bool


@dataclass(frozen=True)
class DecisionPath:
    steps: tuple
    leaf_histogram: dict
    leaf_fraction: float

    def to_dict(self) -> dict:
        return {
            "steps": [
                {"feature_index": s.feature_index, "threshold": s.threshold, "went_left": s.went_left}
                for s in self.steps
            ],
            "leaf_histogram": dict(self.leaf_histogram),
            "leaf_fraction": self.leaf_fraction,
        }


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


@dataclass
class DecisionTree:
    root: TreeNode
    classes: tuple
    n_training_rows: int

    def predict(self, x: np.ndarray) -> tuple:
        """Route one feature vector; returns (class, DecisionPath)."""
        x = np.asarray(x, dtype=float)
        node = self.root
        steps = []
        while not node.is_leaf:
            went_left = x[node.feature] < node.threshold
            steps.append(PathStep(node.feature, node.threshold, bool(went_left)))
            node = node.left if went_left else node.right
        path = DecisionPath(steps=tuple(steps), leaf_histogram=dict(node.histogram), leaf_fraction=node.fraction)
        return node.predicted, path

    def predict_many(self, X: np.ndarray) -> list:
        return [self.predict(row)[0] for row in np.atleast_2d(X)]

    def leaves(self) -> list:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out

    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))

        return d(self.root)

    # -- export --------------------------------------------------------------

    def to_text(self, feature_names=None) -> str:
        """Indented one-node-per-line rendering: condition, class histogram,
        share of training rows."""

        def name(i):
            return feature_names[i] if feature_names else f"f{i}"

        lines = []

        def walk(node, prefix, label):
            hist = ", ".join(f"{c}:{node.histogram.get(c, 0)}" for c in self.classes if node.histogram.get(c, 0))
            head = f"{prefix}{label}{node.predicted} [{hist}] ({100.0 * node.fraction:.1f}% of rows)"
            if node.is_leaf:
                lines.append(head)
                return
            lines.append(f"{head} | split {name(node.feature)} < {node.threshold:g}")
            walk(node.left, prefix + "  ", "yes: ")
            walk(node.right, prefix + "  ", "no:  ")

        walk(self.root, "", "")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        def encode(node):
            base = {
                "predicted": node.predicted,
                "histogram": dict(node.histogram),
                "fraction": node.fraction,
            }
            if not node.is_leaf:
                base.update(
                    feature=node.feature,
                    threshold=node.threshold,
                    left=encode(node.left),
                    right=encode(node.right),
                )
            return base

        return {"classes": list(self.classes), "n_training_rows": self.n_training_rows, "root": encode(self.root)}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        def decode(obj):
            node = TreeNode(
                histogram={str(k): int(v) for k, v in obj["histogram"].items()},
                fraction=float(obj["fraction"]),
                predicted=str(obj["predicted"]),
            )
            if "feature" in obj:
                node.feature = int(obj["feature"])
                node.threshold = float(obj["threshold"])
                node.left = decode(obj["left"])
                node.right = decode(obj["right"])
            return node

        return cls(root=decode(data["root"]), classes=tuple(data["classes"]), n_training_rows=int(data["n_training_rows"]))


def _majority(counts: np.ndarray, classes: tuple) -> str:
    return classes[int(np.argmax(counts))]


def _node(counts: np.ndarray, classes: tuple, total: int) -> TreeNode:
    hist = {c: int(counts[i]) for i, c in enumerate(classes) if counts[i]}
    return TreeNode(histogram=hist, fraction=float(counts.sum() / total), predicted=_majority(counts, classes))


def _best_split(X: np.ndarray, codes: np.ndarray, n_classes: int, min_leaf: int):
    """Scan every feature for the impurity-minimizing midpoint threshold.

    Returns (decrease, feature, threshold) or None.  Strict improvement is
    required to replace the incumbent, so the first candidate found in
    (feature, threshold) order wins ties.
    """
    n = X.shape[0]
    parent_counts = np.bincount(codes, minlength=n_classes)
    parent_gini = _gini(parent_counts)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        vals = X[order, f]
        ordered = codes[order]
        left = np.zeros(n_classes)
        right = parent_counts.astype(float).copy()
        for i in range(1, n):
            c = ordered[i - 1]
            left[c] += 1
            right[c] -= 1
            if vals[i] == vals[i - 1]:
                continue
            if i < min_leaf or n - i < min_leaf:
                continue
            decrease = parent_gini - (i * _gini(left) + (n - i) * _gini(right)) / n
            if best is None or decrease > best[0]:
                best = (decrease, f, float((vals[i - 1] + vals[i]) / 2.0))
    return best


def train_tree(X: np.ndarray, labels, config: TrainConfig = TrainConfig()) -> DecisionTree:
    """Fit the tree on (n, F) features and string labels.

    A node becomes a leaf when it is pure, the depth limit is reached, no
    split leaves both children with `min_leaf` rows, or the best impurity
    decrease falls below `min_impurity_decrease`.
    """
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ValueError("X must be (n, F) with one label per row")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    classes = tuple(sorted(set(labels)))
    code_of = {c: i for i, c in enumerate(classes)}
    codes = np.array([code_of[l] for l in labels])
    total = X.shape[0]

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        sub_codes = codes[idx]
        counts = np.bincount(sub_codes, minlength=len(classes))
        node = _node(counts, classes, total)
        if np.count_nonzero(counts) <= 1 or depth >= config.max_depth or idx.size < 2 * config.min_leaf:
            return node
        found = _best_split(X[idx], sub_codes, len(classes), config.min_leaf)
        if found is None or found[0] < config.min_impurity_decrease:
            return node
        _, feature, threshold = found
        mask = X[idx, feature] < threshold
        node.feature = feature
        node.threshold = threshold
        node.left = build(idx[mask], depth + 1)
        node.right = build(idx[~mask], depth + 1)
        return node

    return DecisionTree(root=build(np.arange(total), 0), classes=classes, n_training_rows=total)


def accuracy(tree: DecisionTree, X: np.ndarray, labels) -> float:
    pred = tree.predict_many(X)
    return float(np.mean([p == l for p, l in zip(pred, labels)]))


def cross_validate(X: np.ndarray, labels, folds: int = 10, config: TrainConfig = TrainConfig(), seed: int = 0):
    """Stratified seeded k-fold cross-validation.

    Returns (mean accuracy, per-fold accuracies, confusion matrix) with the
    confusion matrix pooled over folds, rows true / columns predicted in
    class order.
    """
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    n = len(labels)
    if n < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV, got {n}")
    classes = tuple(sorted(set(labels)))
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    for c in classes:
        members = np.array([i for i, l in enumerate(labels) if l == c])
        if members.size < folds:
            raise ValueError(f"class {c!r} has {members.size} rows, fewer than {folds} folds")
        members = members[rng.permutation(members.size)]
        fold_of[members] = np.arange(members.size) % folds
    code_of = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    fold_accs = []
    labels_arr = np.array(labels, dtype=object)
    for f in range(folds):
        test = fold_of == f
        tree = train_tree(X[~test], list(labels_arr[~test]), config)
        pred = tree.predict_many(X[test])
        truth = list(labels_arr[test])
        fold_accs.append(float(np.mean([p == t for p, t in zip(pred, truth)])))
        for p, t in zip(pred, truth):
            confusion[code_of[t], code_of[p]] += 1
    return float(np.mean(fold_accs)), fold_accs, confusion
