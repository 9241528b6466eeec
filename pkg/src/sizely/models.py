"""Regression model pool: linear (with recursive least-squares updates), KNN,
a small MLP, and a random forest, all behind one fit/predict/update contract.

All models regress peak memory on a single scalar feature (total input size
in bytes). Regressors are immutable value objects: ``updated`` returns a new
instance. Raw estimates that are non-finite or <= 0 are floored at the
minimum observed peak of the model's training set.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class RegressorKind(Enum):
    Linear = 0
    KNN = 1
    MLP = 2
    RandomForest = 3


KINDS = (
    RegressorKind.Linear,
    RegressorKind.KNN,
    RegressorKind.MLP,
    RegressorKind.RandomForest,
)


@dataclass(frozen=True)
class TrainingSample:
    input_size: float
    peak_mem: float


@dataclass(frozen=True)
class HyperParams:
    knn_k: int = 3
    rf_trees: int = 10
    rf_max_depth: int = 8
    mlp_hidden: int = 8
    mlp_epochs: int = 500
    mlp_lr: float = 0.01


DEFAULT_PARAMS = HyperParams()

# tuning grids, searched in declaration order (first grid point wins ties)
KNN_K_GRID = (1, 3, 5)
RF_GRID = ((10, 4), (10, 8), (50, 4), (50, 8))
MLP_HIDDEN_GRID = (4, 8, 16)

_RIDGE = 1e-12


class Regressor(abc.ABC):
    """Shared plumbing: retained samples, output floor, full-refit update."""

    kind: RegressorKind

    def __init__(self, x: np.ndarray, y: np.ndarray, params: HyperParams, seed: int):
        self._x = x
        self._y = y
        self.params = params
        self.seed = seed
        self._floor = float(y.min())

    @property
    def sample_count(self) -> int:
        return int(self._x.size)

    @property
    def inputs(self) -> np.ndarray:
        return self._x

    @property
    def targets(self) -> np.ndarray:
        return self._y

    def predict(self, input_size: float) -> float:
        raw = self._raw_predict(float(input_size))
        if not np.isfinite(raw) or raw <= 0:
            return self._floor
        return float(raw)

    @abc.abstractmethod
    def _raw_predict(self, input_size: float) -> float: ...

    def updated(self, sample: TrainingSample, mode: str = "full") -> "Regressor":
        """Return a new regressor incorporating ``sample``.

        mode="full" refits from the complete retained sample set;
        mode="incremental" uses the kind-specific cheap path.
        """
        if mode not in ("full", "incremental"):
            raise ValueError(f"unknown update mode {mode!r}")
        x = np.append(self._x, float(sample.input_size))
        y = np.append(self._y, float(sample.peak_mem))
        if mode == "full":
            return _fit_arrays(self.kind, x, y, self.params, self.seed)
        return self._incremental(x, y, sample)

    def _incremental(self, x, y, sample) -> "Regressor":
        # default: refit (kinds with a cheaper exact path override this)
        return _fit_arrays(self.kind, x, y, self.params, self.seed)


class LinearRegressor(Regressor):
    """Ordinary least squares with an exact Sherman-Morrison update path.

    Inputs/targets are rescaled by their fit-time magnitude so the normal
    equations stay well conditioned for byte-scale values; the tiny ridge
    term keeps degenerate sample sets invertible.
    """

    kind = RegressorKind.Linear

    def __init__(self, x, y, params, seed, _state=None):
        super().__init__(x, y, params, seed)
        if _state is not None:
            self._sx, self._sy, self._P, self._theta = _state
            return
        self._sx = float(np.max(np.abs(x))) or 1.0
        self._sy = float(np.max(np.abs(y))) or 1.0
        xs = x / self._sx
        ys = y / self._sy
        n = xs.size
        A = np.array([[n, xs.sum()], [xs.sum(), (xs * xs).sum()]])
        A += _RIDGE * np.eye(2)
        b = np.array([ys.sum(), (xs * ys).sum()])
        self._P = np.linalg.inv(A)
        self._theta = self._P @ b

    @property
    def coefficients(self) -> tuple[float, float]:
        """(intercept, slope) in original byte units."""
        return (
            float(self._theta[0] * self._sy),
            float(self._theta[1] * self._sy / self._sx),
        )

    def _raw_predict(self, input_size: float) -> float:
        if np.ptp(self._x) == 0:
            return float(self._y.mean())
        intercept, slope = self.coefficients
        return intercept + slope * input_size

    def _incremental(self, x, y, sample):
        a = np.array([1.0, sample.input_size / self._sx])
        Pa = self._P @ a
        gain = Pa / (1.0 + a @ Pa)
        err = sample.peak_mem / self._sy - a @ self._theta
        theta = self._theta + gain * err
        P = self._P - np.outer(gain, Pa)
        P = 0.5 * (P + P.T)
        return LinearRegressor(
            x, y, self.params, self.seed, _state=(self._sx, self._sy, P, theta)
        )


class KnnRegressor(Regressor):
    """Mean of the k nearest stored samples by absolute input distance."""

    kind = RegressorKind.KNN

    def _raw_predict(self, input_size: float) -> float:
        k = min(self.params.knn_k, self._x.size)
        d = np.abs(self._x - input_size)
        nearest = np.argsort(d, kind="stable")[:k]
        return float(self._y[nearest].mean())

    def _incremental(self, x, y, sample):
        return KnnRegressor(x, y, self.params, self.seed)


def _mlp_init(hidden: int, rng: np.random.Generator):
    W1 = rng.normal(0.0, 1.0, (1, hidden)) * np.sqrt(2.0)
    b1 = np.zeros(hidden)
    W2 = rng.normal(0.0, 1.0, (hidden, 1)) * np.sqrt(2.0 / hidden)
    b2 = np.zeros(1)
    return [W1, b1, W2, b2]


def _mlp_train(xs, ys, weights, epochs, lr):
    W1, b1, W2, b2 = weights
    n = xs.shape[0]
    for _ in range(epochs):
        z1 = xs @ W1 + b1
        h = np.maximum(z1, 0.0)
        yhat = h @ W2 + b2
        delta = (yhat - ys) / n
        gW2 = h.T @ delta
        gb2 = delta.sum(axis=0)
        dh = delta @ W2.T
        dh[z1 <= 0] = 0.0
        gW1 = xs.T @ dh
        gb1 = dh.sum(axis=0)
        W1 = W1 - lr * gW1
        b1 = b1 - lr * gb1
        W2 = W2 - lr * gW2
        b2 = b2 - lr * gb2
    return [W1, b1, W2, b2]


class MlpRegressor(Regressor):
    """One hidden ReLU layer trained by full-batch gradient descent on
    standardized inputs and targets."""

    kind = RegressorKind.MLP

    def __init__(self, x, y, params, seed, _state=None):
        super().__init__(x, y, params, seed)
        if _state is not None:
            self._norm, self._weights = _state
            return
        x_mean, x_std = float(x.mean()), float(x.std()) or 1.0
        y_mean, y_std = float(y.mean()), float(y.std()) or 1.0
        self._norm = (x_mean, x_std, y_mean, y_std)
        xs = ((x - x_mean) / x_std).reshape(-1, 1)
        ys = ((y - y_mean) / y_std).reshape(-1, 1)
        weights = _mlp_init(params.mlp_hidden, np.random.default_rng(seed))
        self._weights = _mlp_train(xs, ys, weights, params.mlp_epochs, params.mlp_lr)

    @property
    def standardization(self) -> tuple[float, float, float, float]:
        """(x_mean, x_std, y_mean, y_std) frozen at fit time."""
        return self._norm

    def _raw_predict(self, input_size: float) -> float:
        x_mean, x_std, y_mean, y_std = self._norm
        W1, b1, W2, b2 = self._weights
        z = np.array([[(input_size - x_mean) / x_std]])
        out = np.maximum(z @ W1 + b1, 0.0) @ W2 + b2
        return float(out[0, 0] * y_std + y_mean)

    def _incremental(self, x, y, sample):
        x_mean, x_std, y_mean, y_std = self._norm
        xs = ((x - x_mean) / x_std).reshape(-1, 1)
        ys = ((y - y_mean) / y_std).reshape(-1, 1)
        epochs = max(1, self.params.mlp_epochs // 10)
        weights = _mlp_train(xs, ys, [w.copy() for w in self._weights],
                             epochs, self.params.mlp_lr)
        return MlpRegressor(x, y, self.params, self.seed,
                            _state=(self._norm, weights))


def _build_forest(x, y, n_trees, max_depth, rng):
    """Level-synchronous CART construction batched over all trees.

    With a single feature every node is a contiguous range of the per-tree
    x-sorted bootstrap sample, so each fitted tree flattens to an ascending
    threshold array plus per-interval leaf means. Splits maximize variance
    reduction; minimum leaf size is 1; bootstrap size equals the training
    set size.
    """
    n = x.size
    B = n_trees
    boot = rng.integers(0, n, size=(B, n))
    xs = x[boot]
    ys = y[boot]
    order = np.argsort(xs, axis=1, kind="stable")
    xs = np.take_along_axis(xs, order, 1)
    ys = np.take_along_axis(ys, order, 1)
    mu = float(ys.mean())
    sd = float(ys.std()) or 1.0  # centered sums avoid cancellation on byte-scale targets
    xf = xs.ravel()
    yf = ((ys - mu) / sd).ravel()
    cy = np.concatenate([[0.0], np.cumsum(yf)])
    cy2 = np.concatenate([[0.0], np.cumsum(yf * yf)])

    seg_lo = np.arange(B, dtype=np.int64) * n
    seg_hi = seg_lo + n
    seg_tree = np.arange(B, dtype=np.int64)

    leaf_tree, leaf_lo, leaf_val = [], [], []
    thr_tree, thr_val = [], []

    def emit_leaves(lo, hi, tree):
        vals = (cy[hi] - cy[lo]) / (hi - lo)
        leaf_tree.append(tree)
        leaf_lo.append(lo)
        leaf_val.append(vals)

    depth = 0
    while seg_lo.size:
        lengths = seg_hi - seg_lo
        sums = cy[seg_hi] - cy[seg_lo]
        sq = cy2[seg_hi] - cy2[seg_lo]
        sse = sq - sums * sums / lengths
        if depth >= max_depth:
            emit_leaves(seg_lo, seg_hi, seg_tree)
            break
        can_split = (lengths >= 2) & (sse > 1e-12)
        idx = np.flatnonzero(can_split)
        plain = np.flatnonzero(~can_split)
        if plain.size:
            emit_leaves(seg_lo[plain], seg_hi[plain], seg_tree[plain])
        if idx.size == 0:
            break
        lo_s, hi_s = seg_lo[idx], seg_hi[idx]
        m = hi_s - lo_s - 1
        starts = np.concatenate([[0], np.cumsum(m)[:-1]])
        total = int(m.sum())
        seg_of = np.repeat(np.arange(idx.size), m)
        pos = np.arange(total) - starts[seg_of] + lo_s[seg_of] + 1
        lo_rep, hi_rep = lo_s[seg_of], hi_s[seg_of]
        lcnt = (pos - lo_rep).astype(float)
        rcnt = (hi_rep - pos).astype(float)
        sl = cy[pos] - cy[lo_rep]
        sl2 = cy2[pos] - cy2[lo_rep]
        sr = cy[hi_rep] - cy[pos]
        sr2 = cy2[hi_rep] - cy2[pos]
        cost = (sl2 - sl * sl / lcnt) + (sr2 - sr * sr / rcnt)
        cost = np.where(xf[pos] > xf[pos - 1], cost, np.inf)
        best = np.minimum.reduceat(cost, starts)
        hit = cost == np.repeat(best, m)
        first = np.minimum.reduceat(np.where(hit, np.arange(total), total), starts)
        splittable = np.isfinite(best)
        stuck = idx[~splittable]  # length >= 2 but all inputs identical
        if stuck.size:
            emit_leaves(seg_lo[stuck], seg_hi[stuck], seg_tree[stuck])
        ok = idx[splittable]
        if ok.size == 0:
            break
        p = pos[first[splittable]]
        thr_tree.append(seg_tree[ok])
        thr_val.append(0.5 * (xf[p - 1] + xf[p]))
        seg_lo = np.concatenate([seg_lo[ok], p])
        seg_hi = np.concatenate([p, seg_hi[ok]])
        seg_tree = np.concatenate([seg_tree[ok], seg_tree[ok]])
        depth += 1

    lt = np.concatenate(leaf_tree)
    ll = np.concatenate(leaf_lo)
    lv = np.concatenate(leaf_val)
    n_leaves = np.bincount(lt, minlength=B)
    max_leaves = int(n_leaves.max())
    val_mat = np.zeros((B, max_leaves))
    thr_mat = np.full((B, max(max_leaves - 1, 1)), np.inf)
    lo_order = np.lexsort((ll, lt))
    lt_s, lv_s = lt[lo_order], lv[lo_order]
    col = np.arange(lt_s.size) - np.concatenate([[0], np.cumsum(n_leaves)[:-1]])[lt_s]
    val_mat[lt_s, col] = lv_s * sd + mu
    if thr_tree:
        tt = np.concatenate(thr_tree)
        tv = np.concatenate(thr_val)
        to = np.lexsort((tv, tt))
        tt_s, tv_s = tt[to], tv[to]
        n_thr = np.bincount(tt_s, minlength=B)
        colt = np.arange(tt_s.size) - np.concatenate([[0], np.cumsum(n_thr)[:-1]])[tt_s]
        thr_mat[tt_s, colt] = tv_s
    return thr_mat, val_mat, n_leaves


class ForestRegressor(Regressor):
    """Bootstrap ensemble of depth-limited CART regression trees."""

    kind = RegressorKind.RandomForest

    def __init__(self, x, y, params, seed):
        super().__init__(x, y, params, seed)
        rng = np.random.default_rng(seed)
        self._thr, self._val, self._n_leaves = _build_forest(
            x, y, params.rf_trees, params.rf_max_depth, rng
        )

    @property
    def trees(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-tree (ascending thresholds, interval leaf means); a query x
        lands in the interval indexed by the count of thresholds < x."""
        out = []
        for t in range(self._val.shape[0]):
            k = int(self._n_leaves[t])
            out.append((self._thr[t, : max(k - 1, 0)].copy(), self._val[t, :k].copy()))
        return out

    def _raw_predict(self, input_size: float) -> float:
        idx = (self._thr < input_size).sum(axis=1)
        return float(self._val[np.arange(self._val.shape[0]), idx].mean())


_CLASSES = {
    RegressorKind.Linear: LinearRegressor,
    RegressorKind.KNN: KnnRegressor,
    RegressorKind.MLP: MlpRegressor,
    RegressorKind.RandomForest: ForestRegressor,
}


def _fit_arrays(kind, x, y, params, seed) -> Regressor:
    return _CLASSES[kind](x, y, params, seed)


def fit(
    kind: RegressorKind,
    samples: list[TrainingSample],
    params: HyperParams = DEFAULT_PARAMS,
    seed: int = 0,
) -> Regressor:
    """Train one regressor of the given kind on (input_size, peak_mem) pairs."""
    if not samples:
        raise ValueError("samples must be non-empty")
    x = np.array([s.input_size for s in samples], dtype=float)
    y = np.array([s.peak_mem for s in samples], dtype=float)
    if np.any(y <= 0):
        raise ValueError("peak_mem targets must be > 0")
    return _fit_arrays(kind, x, y, params, seed)


def _loo_folds(n: int, max_folds: int) -> np.ndarray:
    if n <= max_folds:
        return np.arange(n)
    return np.arange(n - max_folds, n)  # most recent samples


def _knn_loo_errors(x, y, folds, k):
    d = np.abs(x[folds][:, None] - x[None, :])
    d[np.arange(folds.size), folds] = np.inf
    order = np.argsort(d, axis=1, kind="stable")
    kk = min(k, x.size - 1)
    preds = y[order[:, :kk]].mean(axis=1)
    return np.abs(preds - y[folds]) / y[folds]


def _mlp_loo_errors(x, y, folds, hidden, epochs, lr, seed):
    # all folds trained simultaneously: weights carry a leading fold axis
    n = x.size
    F = folds.size
    keep = np.ones((F, n), dtype=bool)
    keep[np.arange(F), folds] = False
    xt = x[np.where(keep)[1]].reshape(F, n - 1)
    yt = y[np.where(keep)[1]].reshape(F, n - 1)
    xm = xt.mean(axis=1, keepdims=True)
    xs = xt.std(axis=1, keepdims=True)
    xs[xs == 0] = 1.0
    ym = yt.mean(axis=1, keepdims=True)
    ysd = yt.std(axis=1, keepdims=True)
    ysd[ysd == 0] = 1.0
    xb = ((xt - xm) / xs)[:, :, None]
    yb = ((yt - ym) / ysd)[:, :, None]
    W1, b1, W2, b2 = _mlp_init(hidden, np.random.default_rng(seed))
    W1 = np.broadcast_to(W1, (F, 1, hidden)).copy()
    b1 = np.zeros((F, 1, hidden))
    W2 = np.broadcast_to(W2, (F, hidden, 1)).copy()
    b2 = np.zeros((F, 1, 1))
    m = n - 1
    for _ in range(epochs):
        z1 = xb @ W1 + b1
        h = np.maximum(z1, 0.0)
        yhat = h @ W2 + b2
        delta = (yhat - yb) / m
        gW2 = np.swapaxes(h, 1, 2) @ delta
        gb2 = delta.sum(axis=1, keepdims=True)
        dh = delta @ np.swapaxes(W2, 1, 2)
        dh[z1 <= 0] = 0.0
        gW1 = np.swapaxes(xb, 1, 2) @ dh
        gb1 = dh.sum(axis=1, keepdims=True)
        W1 = W1 - lr * gW1
        b1 = b1 - lr * gb1
        W2 = W2 - lr * gW2
        b2 = b2 - lr * gb2
    q = ((x[folds][:, None] - xm) / xs)[:, :, None]
    out = np.maximum(q @ W1 + b1, 0.0) @ W2 + b2
    preds = out[:, 0, 0] * ysd[:, 0] + ym[:, 0]
    preds = np.where(np.isfinite(preds), preds, 0.0)
    held = y[folds]
    # floor rule: non-positive raw outputs revert to the fold's min peak
    floors = np.where(preds > 0, preds, yt.min(axis=1))
    return np.abs(floors - held) / held


def loo_mean_relative_error(
    kind: RegressorKind,
    samples: list[TrainingSample],
    params: HyperParams = DEFAULT_PARAMS,
    seed: int = 0,
    max_folds: int = 12,
) -> float:
    """Leave-one-out mean absolute relative error; the score ``tune`` minimizes."""
    x = np.array([s.input_size for s in samples], dtype=float)
    y = np.array([s.peak_mem for s in samples], dtype=float)
    folds = _loo_folds(x.size, max_folds)
    if kind is RegressorKind.KNN:
        return float(_knn_loo_errors(x, y, folds, params.knn_k).mean())
    if kind is RegressorKind.MLP:
        return float(
            _mlp_loo_errors(
                x, y, folds, params.mlp_hidden, params.mlp_epochs, params.mlp_lr, seed
            ).mean()
        )
    errs = []
    for i in folds:
        xi = np.delete(x, i)
        yi = np.delete(y, i)
        model = _fit_arrays(kind, xi, yi, params, seed)
        errs.append(abs(model.predict(x[i]) - y[i]) / y[i])
    return float(np.mean(errs))


def tune(
    kind: RegressorKind,
    samples: list[TrainingSample],
    base: HyperParams = DEFAULT_PARAMS,
    seed: int = 0,
    max_folds: int = 12,
) -> HyperParams:
    """Small grid search scored by LOO mean absolute relative error.

    Requires at least 4 samples. With larger histories only the most recent
    ``max_folds`` folds are evaluated to bound online tuning cost.
    """
    if len(samples) < 4:
        raise ValueError("tune needs at least 4 samples; fall back to defaults")
    if kind is RegressorKind.Linear:
        return base  # no hyperparameters
    if kind is RegressorKind.KNN:
        grid = [replace(base, knn_k=k) for k in KNN_K_GRID]
    elif kind is RegressorKind.RandomForest:
        grid = [replace(base, rf_trees=t, rf_max_depth=d) for t, d in RF_GRID]
    elif kind is RegressorKind.MLP:
        grid = [replace(base, mlp_hidden=h) for h in MLP_HIDDEN_GRID]
    else:  # pragma: no cover
        raise ValueError(f"unknown kind {kind}")
    best = grid[0]
    best_score = np.inf
    for cand in grid:
        score = loo_mean_relative_error(kind, samples, cand, seed, max_folds)
        if score < best_score:
            best, best_score = cand, score
    return best
