"""Bagged regression trees with out-of-bag error and permutation importance.

Each tree is grown on a with-replacement bootstrap of ``bootstrap_ratio * N``
samples.  At every node a random subset of ``max_features`` candidate
features is searched for the split with the largest reduction of the sum of
squared errors; a split is admissible only if both children keep at least
``min_leaf`` bootstrap samples.  Tree seeds are spawned from one master seed,
so a model is reproducible bit-for-bit and trees can be grown in parallel.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

FORMAT_NAME = "stereosal-forest"
FORMAT_VERSION = 1


class ModelVersionError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 40
    min_leaf: int = 10
    bootstrap_ratio: float = 1 / 3
    max_features: int | None = None  # None -> ceil(sqrt(n_features))
    seed: int = 0

    def features_per_split(self, n_features: int) -> int:
        k = self.max_features or math.ceil(math.sqrt(n_features))
        return max(1, min(k, n_features))


@dataclass(eq=False)
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaves(self) -> np.ndarray:
        return np.nonzero(self.feature < 0)[0]

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
        )


def _best_split(Xn, yn, candidates, min_leaf):
    """Return (feature, threshold, sse) of the best admissible split or None."""
    n = len(yn)
    k = np.arange(min_leaf - 1, n - min_leaf)
    if len(k) == 0:
        return None
    nl = k + 1.0
    nr = n - nl
    best = None
    best_sse = np.inf
    for f in candidates:
        x = Xn[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = yn[order]
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        tot, tot2 = cs[-1], cs2[-1]
        sse = (cs2[k] - cs[k] ** 2 / nl) + ((tot2 - cs2[k]) - (tot - cs[k]) ** 2 / nr)
        sse[xs[k] >= xs[k + 1]] = np.inf
        j = int(np.argmin(sse))
        if sse[j] < best_sse:
            lo, hi = xs[k[j]], xs[k[j] + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best_sse, best = sse[j], (int(f), float(thr))
    if best is None:
        return None
    return best[0], best[1], best_sse


def grow_tree(X, y, min_leaf: int, max_features: int, rng: np.random.Generator) -> Tree:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_features = X.shape[1]
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        count.append(len(idx))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) < 2 * min_leaf:
            continue
        yn = y[idx]
        parent_sse = float(((yn - yn.mean()) ** 2).sum())
        if parent_sse <= 1e-14 * max(1.0, len(idx)):
            continue
        cand = rng.choice(n_features, size=max_features, replace=False)
        found = _best_split(X[idx], yn, cand, min_leaf)
        if found is None or found[2] >= parent_sse:
            continue
        f, thr, _ = found
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first (stable numbering)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(count, dtype=np.int64),
    )


def _tree_streams(seed: int, n_trees: int):
    """Per-tree (bootstrap, split) generators derived from the master seed."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        boot, split = child.spawn(2)
        out.append((np.random.default_rng(boot), np.random.default_rng(split)))
    return out


def bootstrap_indices(seed: int, n_trees: int, n_samples: int, ratio: float) -> list[np.ndarray]:
    size = max(1, int(round(ratio * n_samples)))
    return [boot.integers(0, n_samples, size) for boot, _ in _tree_streams(seed, n_trees)]


@dataclass(eq=False)
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    feature_names: list[str]
    n_train: int = 0
    oob_prediction: np.ndarray | None = field(default=None, repr=False)
    oob_mse: float | None = None

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} feature columns, got shape {X.shape}")
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def inbag(self) -> list[np.ndarray]:
        return bootstrap_indices(self.params.seed, len(self.trees), self.n_train, self.params.bootstrap_ratio)

    def oob_masks(self) -> list[np.ndarray]:
        masks = []
        for idx in self.inbag():
            m = np.ones(self.n_train, dtype=bool)
            m[idx] = False
            masks.append(m)
        return masks

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "params": asdict(self.params),
            "feature_names": list(self.feature_names),
            "n_train": int(self.n_train),
            "oob_mse": self.oob_mse,
            "trees": [t.to_dict() for t in self.trees],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format") != FORMAT_NAME:
            raise ModelVersionError(f"not a {FORMAT_NAME} model file (format={d.get('format')!r})")
        if d.get("version") != FORMAT_VERSION:
            raise ModelVersionError(
                f"model file version {d.get('version')} is not supported (expected {FORMAT_VERSION})")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            params=ForestParams(**d["params"]),
            feature_names=list(d["feature_names"]),
            n_train=int(d["n_train"]),
            oob_mse=d.get("oob_mse"),
        )

    @classmethod
    def load(cls, path) -> "ForestModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_forest(X, y, feature_names=None, params: ForestParams = ForestParams(), workers: int = 1) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"X must be (n, p) matching y; got {X.shape} and {y.shape}")
    n, p = X.shape
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")
    if n < params.min_leaf:
        raise ValueError(f"{n} training samples is fewer than min_leaf={params.min_leaf}")
    size = max(1, int(round(params.bootstrap_ratio * n)))
    if size < params.min_leaf:
        raise ValueError(
            f"bootstrap size {size} (ratio {params.bootstrap_ratio:g} of {n}) is below min_leaf={params.min_leaf}")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(p)]
    if len(names) != p:
        raise ValueError(f"{len(names)} feature names for {p} columns")
    mtry = params.features_per_split(p)
    streams = _tree_streams(params.seed, params.n_trees)

    def fit_one(i):
        boot, split = streams[i]
        idx = boot.integers(0, n, size)
        return idx, grow_tree(X[idx], y[idx], params.min_leaf, mtry, split)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            fitted = list(ex.map(fit_one, range(params.n_trees)))
    else:
        fitted = [fit_one(i) for i in range(params.n_trees)]

    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n)
    for idx, tree in fitted:
        mask = np.ones(n, dtype=bool)
        mask[idx] = False
        oob_sum[mask] += tree.predict(X[mask])
        oob_cnt[mask] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_pred = np.where(oob_cnt > 0, oob_sum / oob_cnt, np.nan)
    seen = oob_cnt > 0
    oob_mse = float(np.mean((oob_pred[seen] - y[seen]) ** 2)) if seen.any() else None
    return ForestModel(
        trees=[t for _, t in fitted],
        params=params,
        feature_names=names,
        n_train=n,
        oob_prediction=oob_pred,
        oob_mse=oob_mse,
    )


def oob_importance(model: ForestModel, X, y, seed: int = 0, max_oob: int | None = 20000,
                   clip: bool = True) -> np.ndarray:
    """Permutation importance on out-of-bag samples, scaled so the top score is 1.

    For every tree, each feature column of that tree's OOB rows is shuffled
    and the increase of the tree's OOB mean squared error is recorded; the
    increases are averaged over trees.  Negative averages (noise) are
    clipped to 0 when ``clip`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) != model.n_train:
        raise ValueError(f"model was trained on {model.n_train} samples, got {len(X)}")
    rng = np.random.default_rng(seed)
    p = X.shape[1]
    inc = np.zeros(p)
    used = 0
    for tree, mask in zip(model.trees, model.oob_masks()):
        rows = np.nonzero(mask)[0]
        if len(rows) == 0:
            continue
        if max_oob is not None and len(rows) > max_oob:
            rows = np.sort(rng.choice(rows, max_oob, replace=False))
        Xo, yo = X[rows], y[rows]
        base = np.mean((tree.predict(Xo) - yo) ** 2)
        for f in range(p):
            saved = Xo[:, f].copy()
            Xo[:, f] = rng.permutation(saved)
            inc[f] += np.mean((tree.predict(Xo) - yo) ** 2) - base
            Xo[:, f] = saved
        used += 1
    if used == 0:
        raise ValueError("no out-of-bag samples available")
    inc /= used
    if clip:
        inc = np.maximum(inc, 0.0)
    top = inc.max()
    return inc / top if top > 0 else inc
