"""
Gradient boosting um-contra-todos na log-loss binária, com árvores de
regressão de profundidade limitada e busca exata de cortes (todos os
valores únicos de cada atributo, sem histogramas).

Cada árvore é ajustada aos resíduos y - p por erro quadrático; o valor de
cada folha é o passo de Newton sum(r) / sum(p(1-p)).
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit, logit

logger = logging.getLogger(__name__)

PROB_CLIP = 1e-12
GAIN_TOL = 1e-12
PURE_TOL = 1e-12

Tree = Dict[str, list]


def _best_split(X: np.ndarray, r: np.ndarray, min_samples_leaf: int) -> Optional[Tuple[int, float]]:
    n, d = X.shape
    total = r.sum()
    base = total * total / n
    best_gain, best = -np.inf, None
    for feature in range(d):
        order = np.argsort(X[:, feature], kind="mergesort")
        xs, rs = X[order, feature], r[order]
        left_sum = np.cumsum(rs)[:-1]
        left_n = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_samples_leaf) & (n - left_n >= min_samples_leaf)
        if not valid.any():
            continue
        right_sum = total - left_sum
        gain = left_sum ** 2 / left_n + right_sum ** 2 / (n - left_n) - base
        gain = np.where(valid, gain, -np.inf)
        pos = int(np.argmax(gain))
        # empate numérico fica com o primeiro atributo/corte encontrado
        if gain[pos] > best_gain + GAIN_TOL:
            best_gain = gain[pos]
            best = (feature, float((xs[pos] + xs[pos + 1]) / 2.0))
    return best


class _TreeBuilder:
    def __init__(self, max_depth: int, min_samples_split: int, min_samples_leaf: int):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.tree: Tree = {"feature": [], "threshold": [], "left": [], "right": [], "value": []}

    def _new_node(self) -> int:
        for key, default in (("feature", -1), ("threshold", 0.0), ("left", -1), ("right", -1), ("value", 0.0)):
            self.tree[key].append(default)
        return len(self.tree["value"]) - 1

    def build(self, X: np.ndarray, r: np.ndarray, h: np.ndarray) -> Tree:
        self._grow(X, r, h, depth=0)
        return self.tree

    def _grow(self, X: np.ndarray, r: np.ndarray, h: np.ndarray, depth: int) -> int:
        node = self._new_node()
        self.tree["value"][node] = float(r.sum() / max(h.sum(), PROB_CLIP))

        if depth >= self.max_depth or len(r) < self.min_samples_split or np.ptp(r) < PURE_TOL:
            return node
        split = _best_split(X, r, self.min_samples_leaf)
        if split is None:
            return node

        feature, threshold = split
        mask = X[:, feature] <= threshold
        self.tree["feature"][node] = feature
        self.tree["threshold"][node] = threshold
        self.tree["left"][node] = self._grow(X[mask], r[mask], h[mask], depth + 1)
        self.tree["right"][node] = self._grow(X[~mask], r[~mask], h[~mask], depth + 1)
        return node


def build_tree(X: np.ndarray, r: np.ndarray, h: np.ndarray, max_depth: int = 3,
               min_samples_split: int = 2, min_samples_leaf: int = 1) -> Tree:
    return _TreeBuilder(max_depth, min_samples_split, min_samples_leaf).build(X, r, h)


def predict_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    feature = np.asarray(tree["feature"], dtype=np.int64)
    threshold = np.asarray(tree["threshold"], dtype=np.float64)
    left = np.asarray(tree["left"], dtype=np.int64)
    right = np.asarray(tree["right"], dtype=np.int64)
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        active = np.flatnonzero(feature[node] >= 0)
        if not active.size:
            break
        current = node[active]
        go_left = X[active, feature[current]] <= threshold[current]
        node[active] = np.where(go_left, left[current], right[current])
    return np.asarray(tree["value"], dtype=np.float64)[node]


def _binary_logloss(F: np.ndarray, Y: np.ndarray) -> float:
    """Soma, sobre as classes, da log-loss binária média."""
    p = np.clip(expit(F), PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-(Y * np.log(p) + (1.0 - Y) * np.log(1.0 - p)).mean(axis=0).sum())


def fit_gbdt_trees(X: np.ndarray, y: np.ndarray, n_classes: int, n_estimators: int = 100,
                   learning_rate: float = 0.1, max_depth: int = 3, min_samples_split: int = 2,
                   min_samples_leaf: int = 1, subsample: float = 1.0, seed: int = 0):
    """Devolve (prior em log-odds por classe, árvores[classe][rodada], histórico de perda)."""
    n = len(X)
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    freq = np.clip(Y.mean(axis=0), PROB_CLIP, 1.0 - PROB_CLIP)
    prior = logit(freq)
    F = np.tile(prior, (n, 1))
    history = [_binary_logloss(F, Y)]
    trees: List[List[Tree]] = [[] for _ in range(n_classes)]
    rng = np.random.default_rng(seed)

    for round_ in range(n_estimators):
        rows = np.arange(n)
        if subsample < 1.0:
            size = max(1, int(round(n * subsample)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        P = expit(F)
        for c in range(n_classes):
            r = Y[rows, c] - P[rows, c]
            h = P[rows, c] * (1.0 - P[rows, c])
            tree = build_tree(X[rows], r, h, max_depth, min_samples_split, min_samples_leaf)
            trees[c].append(tree)
            F[:, c] += learning_rate * predict_tree(tree, X)
        history.append(_binary_logloss(F, Y))
        if history[-1] > history[-2] + 1e-12:
            logger.debug(f"[GBDT] perda subiu na rodada {round_}: {history[-2]:.6f} -> {history[-1]:.6f}")

    logger.debug(f"[GBDT] {n_estimators} rodadas x {n_classes} classes, perda final {history[-1]:.6f}")
    return prior, trees, history


def predict_gbdt(prior: np.ndarray, trees: List[List[Tree]], X: np.ndarray, learning_rate: float) -> np.ndarray:
    F = np.tile(np.asarray(prior, dtype=np.float64), (len(X), 1))
    for c, class_trees in enumerate(trees):
        for tree in class_trees:
            F[:, c] += learning_rate * predict_tree(tree, X)
    P = np.clip(expit(F), PROB_CLIP, None)
    return P / P.sum(axis=1, keepdims=True)
