"""Multi-output binary classifiers: CART tree, k-nearest neighbors, Gaussian naive
Bayes and a linear hinge-loss SVM.

Every learner fits one independent predictor per column of a 0/1 label matrix
``Y`` (samples x bits) sharing the feature matrix ``X``; columns that are constant
in training are predicted as that constant.  Learners expose ``fit``, ``predict``,
``to_dict`` and ``from_dict``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_xy(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or len(X) != len(Y):
        raise ValueError(f"X {X.shape} and Y {Y.shape} do not align")
    if len(X) == 0:
        raise ValueError("empty training set")
    return X, (Y > 0.5).astype(np.int8)


def _constant_columns(Y: np.ndarray) -> np.ndarray:
    """Per column: 0 or 1 when constant, -1 otherwise."""
    ones = Y.sum(axis=0)
    out = np.full(Y.shape[1], -1, dtype=np.int8)
    out[ones == 0] = 0
    out[ones == len(Y)] = 1
    return out


# --- decision tree ------------------------------------------------------------------


@dataclass
class Tree:
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[int] = field(default_factory=list)

    def add_leaf(self, value: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(int(value))
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = feat[node]
            live = f >= 0
            if not live.any():
                break
            go_left = X[rows[live], f[live]] <= thr[node[live]]
            node[live] = np.where(go_left, left[node[live]], right[node[live]])
        return np.asarray(self.value, dtype=np.int8)[node]

    @property
    def depth(self) -> int:
        def d(k):
            return 0 if self.feature[k] < 0 else 1 + max(d(self.left[k]), d(self.right[k]))
        return d(0)


def _best_split(Xs: np.ndarray, ys: np.ndarray, min_leaf: int):
    """Best Gini split of one node.

    ``Xs``/``ys`` are (features x samples), each row sorted by that feature.
    Returns (score, feature, position) or None.
    """
    d, n = Xs.shape
    c1 = np.cumsum(ys, axis=1)[:, :-1]
    cnt = np.arange(1, n)[None, :]
    n1 = int(ys[0].sum())
    r = n - cnt
    r1 = n1 - c1
    score = (c1 * (cnt - c1) / cnt + r1 * (r - r1) / r) * (2.0 / n)
    valid = (Xs[:, 1:] > Xs[:, :-1]) & (cnt >= min_leaf) & (r >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    k = int(np.argmin(score))  # row-major: lowest feature, then lowest position
    f, pos = divmod(k, n - 1)
    return float(score[f, pos]), f, pos


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int | None, min_leaf: int) -> Tree:
    tree = Tree()
    order0 = np.argsort(X.T, axis=1, kind="stable")  # features x samples
    max_depth = np.inf if max_depth is None else max_depth

    def grow(order: np.ndarray, depth: int) -> int:
        idx = order[0]
        ys_node = y[idx]
        n = len(idx)
        n1 = int(ys_node.sum())
        majority = 1 if 2 * n1 > n else 0
        if n1 == 0 or n1 == n or depth >= max_depth or n < 2 * min_leaf:
            return tree.add_leaf(majority)
        Xs = np.take_along_axis(X.T, order, axis=1)
        ys = y[order]
        best = _best_split(Xs, ys, min_leaf)
        parent = 2.0 * n1 * (n - n1) / (n * n)
        if best is None or best[0] >= parent - 1e-12:
            return tree.add_leaf(majority)
        _, f, pos = best
        thr = 0.5 * (Xs[f, pos] + Xs[f, pos + 1])
        if not thr < Xs[f, pos + 1]:  # midpoint rounds up onto the right value
            thr = Xs[f, pos]
        go_left = np.zeros(len(X), dtype=bool)
        go_left[order[f, : pos + 1]] = True
        node = tree.add_leaf(majority)
        tree.feature[node] = f
        tree.threshold[node] = float(thr)
        mask_l = go_left[order]
        lo = order[mask_l].reshape(order.shape[0], -1)
        hi = order[~mask_l].reshape(order.shape[0], -1)
        tree.left[node] = grow(lo, depth + 1)
        tree.right[node] = grow(hi, depth + 1)
        return node

    grow(order0, 0)
    return tree


@dataclass
class DecisionTreeModel:
    max_depth: int | None = 12
    min_leaf: int = 2
    trees: dict[int, Tree] = field(default_factory=dict)
    constant: np.ndarray | None = None

    def fit(self, X, Y) -> "DecisionTreeModel":
        X, Y = _as_xy(X, Y)
        self.constant = _constant_columns(Y)
        self.trees = {j: fit_tree(X, Y[:, j], self.max_depth, self.min_leaf)
                      for j in np.flatnonzero(self.constant < 0)}
        return self

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.tile(np.maximum(self.constant, 0), (len(X), 1)).astype(np.int8)
        for j, tree in self.trees.items():
            out[:, j] = tree.predict(X)
        return out

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "constant": self.constant.tolist(),
                "trees": {str(j): t.__dict__ for j, t in self.trees.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTreeModel":
        m = cls(d["max_depth"], d["min_leaf"])
        m.constant = np.array(d["constant"], dtype=np.int8)
        m.trees = {int(j): Tree(**t) for j, t in d["trees"].items()}
        return m


# --- k nearest neighbors ------------------------------------------------------------


@dataclass
class KNNModel:
    """Majority vote over the ``k`` nearest training points (Euclidean).

    Neighbors at equal distance are taken in training order; a tied vote goes to
    class 0.
    """

    k: int = 5
    X: np.ndarray | None = None
    Y: np.ndarray | None = None

    def fit(self, X, Y) -> "KNNModel":
        X, Y = _as_xy(X, Y)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        self.X, self.Y = X, Y
        return self

    def distances(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d2 = ((X * X).sum(axis=1)[:, None] - 2.0 * X @ self.X.T
              + (self.X * self.X).sum(axis=1)[None, :])
        return np.maximum(d2, 0.0)

    def neighbors(self, X) -> np.ndarray:
        k = min(self.k, len(self.X))
        return np.argsort(self.distances(X), axis=1, kind="stable")[:, :k]

    def predict(self, X) -> np.ndarray:
        nb = self.neighbors(X)
        votes = self.Y[nb].sum(axis=1)  # queries x bits
        return (2 * votes > nb.shape[1]).astype(np.int8)

    def to_dict(self) -> dict:
        return {"k": self.k, "X": self.X.tolist(), "Y": self.Y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KNNModel":
        return cls(d["k"], np.array(d["X"], dtype=float), np.array(d["Y"], dtype=np.int8))


# --- gaussian naive bayes -----------------------------------------------------------


@dataclass
class GaussianNBModel:
    """Per-bit Gaussian class conditionals with an additive variance floor."""

    var_floor: float = 1e-9
    mean: np.ndarray | None = None  # (2, bits, features)
    var: np.ndarray | None = None
    log_prior: np.ndarray | None = None  # (2, bits)
    constant: np.ndarray | None = None

    def fit(self, X, Y) -> "GaussianNBModel":
        X, Y = _as_xy(X, Y)
        self.constant = _constant_columns(Y)
        Yf = Y.astype(float)
        n1 = Yf.sum(axis=0)
        n0 = len(X) - n1
        means, vars_ = [], []
        for w, cnt in ((1.0 - Yf, n0), (Yf, n1)):
            safe = np.maximum(cnt, 1.0)[:, None]
            mu = (w.T @ X) / safe
            # second pass for accuracy: sum w (x - mu)^2
            sq = (w.T @ (X * X)) / safe - mu * mu
            means.append(mu)
            vars_.append(np.maximum(sq, 0.0) + self.var_floor)
        self.mean = np.stack(means)
        self.var = np.stack(vars_)
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(np.stack([n0, n1]) / len(X))
        return self

    def log_likelihood(self, X) -> np.ndarray:
        """(2, queries, bits) joint log densities."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = []
        for c in (0, 1):
            inv = 1.0 / self.var[c]
            quad = (X * X) @ inv.T - 2 * X @ (self.mean[c] * inv).T \
                + (self.mean[c] ** 2 * inv).sum(axis=1)[None, :]
            norm = np.log(2 * np.pi * self.var[c]).sum(axis=1)[None, :]
            out.append(self.log_prior[c][None, :] - 0.5 * (quad + norm))
        return np.stack(out)

    def predict(self, X) -> np.ndarray:
        ll = self.log_likelihood(X)
        pred = (ll[1] > ll[0]).astype(np.int8)
        const = self.constant >= 0
        pred[:, const] = self.constant[const]
        return pred

    def to_dict(self) -> dict:
        return {"var_floor": self.var_floor, "mean": self.mean.tolist(),
                "var": self.var.tolist(), "log_prior": self.log_prior.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianNBModel":
        return cls(d["var_floor"], np.array(d["mean"]), np.array(d["var"]),
                   np.array(d["log_prior"]), np.array(d["constant"], dtype=np.int8))


# --- linear svm ---------------------------------------------------------------------


@dataclass
class LinearSVMModel:
    """Per-bit ``sign(w.x + b)`` trained by Pegasos-style stochastic subgradient
    descent on ``lam/2 |(w, b)|^2 + mean(hinge)`` with shuffled mini-batches.
    The bias enters as a constant feature and is regularized with ``w``."""

    lam: float = 1e-2
    epochs: int = 200
    batch: int = 32
    seed: int = 0
    W: np.ndarray | None = None  # (bits, features)
    b: np.ndarray | None = None
    constant: np.ndarray | None = None

    def fit(self, X, Y) -> "LinearSVMModel":
        X, Y = _as_xy(X, Y)
        if self.lam <= 0 or self.epochs < 1:
            raise ValueError("lam must be > 0 and epochs >= 1")
        self.constant = _constant_columns(Y)
        S = 2.0 * Y - 1.0
        X = np.hstack([X, np.ones((len(X), 1))])
        n, d = X.shape
        W = np.zeros((Y.shape[1], d))
        rng = np.random.default_rng(self.seed)
        step = 0
        radius = 1.0 / np.sqrt(self.lam)
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            for s in range(0, n, self.batch):
                rows = perm[s:s + self.batch]
                step += 1
                eta = 1.0 / (self.lam * step)
                Xb, Sb = X[rows], S[rows]
                viol = (Sb * (Xb @ W.T) < 1.0) * Sb  # batch x bits
                W *= 1.0 - eta * self.lam
                W += (eta / len(rows)) * viol.T @ Xb
                norms = np.linalg.norm(W, axis=1)
                shrink = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
                W *= shrink[:, None]
        self.W, self.b = W[:, :-1].copy(), W[:, -1].copy()
        return self

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.W.T + self.b

    def predict(self, X) -> np.ndarray:
        pred = (self.decision(X) > 0).astype(np.int8)
        const = self.constant >= 0
        pred[:, const] = self.constant[const]
        return pred

    def to_dict(self) -> dict:
        return {"lam": self.lam, "epochs": self.epochs, "batch": self.batch, "seed": self.seed,
                "W": self.W.tolist(), "b": self.b.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSVMModel":
        return cls(d["lam"], d["epochs"], d["batch"], d["seed"], np.array(d["W"]),
                   np.array(d["b"]), np.array(d["constant"], dtype=np.int8))


LEARNERS = {"DT": DecisionTreeModel, "KNN": KNNModel, "NB": GaussianNBModel,
            "SVM": LinearSVMModel}
