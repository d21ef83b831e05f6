"""Classical comparison method: hand-crafted features + random forest.

Eight time/frequency descriptors per window feed a pair of independent
Gini-split forests (one per prediction target). The forest is written from
scratch so that splits are fully deterministic: candidate features are
scanned in ascending index order, thresholds in ascending value order, and
only a strictly better impurity replaces the incumbent split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .errors import ConfigError

FEATURE_NAMES = (
    "kurtosis",
    "skew",
    "spectral_entropy",
    "zero_crossings",
    "hjorth_mobility",
    "hjorth_complexity",
    "nrmssd",
    "shannon_entropy",
)

HISTOGRAM_BINS = 16


@dataclass(frozen=True)
class FeatureVector:
    kurtosis: float
    skew: float
    spectral_entropy: float
    zero_crossings: float
    hjorth_mobility: float
    hjorth_complexity: float
    nrmssd: float
    shannon_entropy: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    if p.size == 0:
        return 0.0
    return float(-np.sum(p * np.log(p)))


def extract_features(samples: np.ndarray, fs: float = dsp.TARGET_FS) -> FeatureVector:
    """Compute the eight descriptors for one window.

    Degenerate (constant) windows yield zeros for the moment- and
    derivative-based features instead of raising.
    """
    x = np.asarray(samples, dtype=np.float64)
    centered = x - x.mean()
    m2 = float(np.mean(centered**2))

    if m2 > 0:
        kurtosis = float(np.mean(centered**4) / m2**2 - 3.0)
        skew = float(np.mean(centered**3) / m2**1.5)
    else:
        kurtosis = 0.0
        skew = 0.0

    psd = np.abs(np.fft.rfft(centered)) ** 2
    total = psd.sum()
    spectral_entropy = _entropy(psd / total) if total > 0 else 0.0

    signs = np.sign(centered)
    zero_crossings = float(np.count_nonzero(signs[:-1] * signs[1:] < 0))

    dx = np.diff(x)
    var_x = float(np.var(x))
    var_dx = float(np.var(dx))
    if var_x > 0 and var_dx > 0:
        mobility = float(np.sqrt(var_dx / var_x))
        var_ddx = float(np.var(np.diff(dx)))
        mobility_dx = float(np.sqrt(var_ddx / var_dx)) if var_ddx > 0 else 0.0
        complexity = mobility_dx / mobility
    else:
        mobility = 0.0
        complexity = 0.0

    peaks = dsp.detect_peaks(x, fs)
    if peaks.size >= 3:
        intervals = np.diff(peaks) / fs
        diffs = np.diff(intervals)
        rmssd = float(np.sqrt(np.mean(diffs**2)))
        nrmssd = rmssd / float(np.mean(intervals))
    else:
        nrmssd = 0.0

    counts, _ = np.histogram(x, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    n_in = counts.sum()
    shannon = _entropy(counts / n_in) if n_in > 0 else 0.0

    return FeatureVector(
        kurtosis=kurtosis,
        skew=skew,
        spectral_entropy=spectral_entropy,
        zero_crossings=zero_crossings,
        hjorth_mobility=mobility,
        hjorth_complexity=complexity,
        nrmssd=nrmssd,
        shannon_entropy=shannon,
    )


def extract_feature_matrix(windows: np.ndarray, fs: float = dsp.TARGET_FS) -> np.ndarray:
    """[n, 800] windows -> [n, 8] feature matrix."""
    return np.stack([extract_features(w, fs).as_array() for w in windows])


# ---------------------------------------------------------------------------
# decision trees and forests


class DecisionTree:
    """CART-style classifier grown to purity with Gini splits.

    Nodes are stored as flat arrays: internal nodes carry (feature,
    threshold, left, right); leaves carry per-class sample counts.
    """

    def __init__(self, n_classes: int, max_features: int):
        self.n_classes = n_classes
        self.max_features = max_features
        self.feature: list = []
        self.threshold: list = []
        self.left: list = []
        self.right: list = []
        self.counts: list = []

    def _add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(np.zeros(self.n_classes))
        return len(self.feature) - 1

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator):
        root = self._add_node()
        stack = [(root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            labels = y[idx]
            counts = np.bincount(labels, minlength=self.n_classes).astype(np.float64)
            self.counts[node] = counts
            if idx.size < 2 or np.count_nonzero(counts) <= 1:
                continue
            split = self._best_split(X, idx, labels, rng)
            if split is None:
                continue
            feat, thr, mask = split
            self.feature[node] = feat
            self.threshold[node] = thr
            left = self._add_node()
            right = self._add_node()
            self.left[node] = left
            self.right[node] = right
            stack.append((right, idx[~mask]))
            stack.append((left, idx[mask]))
        self._finalize()

    def _best_split(self, X, idx, labels, rng):
        n = idx.size
        n_features = X.shape[1]
        chosen = np.sort(rng.permutation(n_features)[: self.max_features])
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), labels] = 1.0
        best = None  # (gini, feature, threshold)
        for feat in chosen:
            col = X[idx, feat]
            order = np.argsort(col, kind="stable")
            vals = col[order]
            boundaries = np.nonzero(vals[:-1] < vals[1:])[0]
            if boundaries.size == 0:
                continue
            cum = np.cumsum(onehot[order], axis=0)
            nl = boundaries + 1.0
            nr = n - nl
            cl = cum[boundaries]
            cr = cum[-1] - cl
            gini_l = 1.0 - np.sum((cl / nl[:, None]) ** 2, axis=1)
            gini_r = 1.0 - np.sum((cr / nr[:, None]) ** 2, axis=1)
            weighted = (nl * gini_l + nr * gini_r) / n
            k = int(np.argmin(weighted))  # first minimum = lowest threshold
            gini = float(weighted[k])
            if best is None or gini < best[0]:
                thr = np.float32(0.5 * (vals[boundaries[k]] + vals[boundaries[k] + 1]))
                best = (gini, int(feat), float(thr))
        if best is None:
            return None
        _, feat, thr = best
        mask = X[idx, feat] <= thr
        return feat, thr, mask

    def _finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int32)
        self.threshold = np.asarray(self.threshold, dtype=np.float32)
        self.left = np.asarray(self.left, dtype=np.int32)
        self.right = np.asarray(self.right, dtype=np.int32)
        self.counts = np.asarray(self.counts, dtype=np.float64)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        active = self.left[node] >= 0
        while np.any(active):
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.left[node] >= 0
        leaf_counts = self.counts[node]
        return leaf_counts / leaf_counts.sum(axis=1, keepdims=True)


class RandomForest:
    """Bagged Gini trees; per-tree streams derive from (seed key, tree index)."""

    def __init__(self, n_classes: int, n_estimators: int = 100, seed_key: tuple = (1,)):
        if n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        self.n_classes = n_classes
        self.n_estimators = n_estimators
        self.seed_key = tuple(seed_key)
        self.trees: list = []

    def fit(self, X: np.ndarray, y: np.ndarray):
        n, d = X.shape
        max_features = max(1, int(np.sqrt(d)))
        self.trees = []
        for t in range(self.n_estimators):
            rng = np.random.default_rng(np.random.SeedSequence([*self.seed_key, t]))
            sample = rng.integers(0, n, size=n)
            tree = DecisionTree(self.n_classes, max_features)
            tree.fit(X[sample], y[sample], rng)
            self.trees.append(tree)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree.predict_proba(X)
        return acc / len(self.trees)


class MultiOutputForest:
    """Independent forest per target (rhythm: 2 classes, quality: 3)."""

    TARGET_CLASSES = (2, 3)

    def __init__(self, n_estimators: int = 100, seed: int = 1):
        self.n_estimators = n_estimators
        self.seed = seed
        self.forests = []

    def fit(self, X: np.ndarray, Y: np.ndarray):
        if X.shape[0] != Y.shape[0]:
            raise ConfigError("X and Y row counts differ")
        if X.shape[0] < 2:
            raise ConfigError("need at least 2 training rows")
        self.forests = []
        for target, n_classes in enumerate(self.TARGET_CLASSES):
            forest = RandomForest(n_classes, self.n_estimators, seed_key=(self.seed, target))
            forest.fit(X, Y[:, target].astype(np.int64))
            self.forests.append(forest)
        return self

    def predict_proba(self, X: np.ndarray):
        return tuple(f.predict_proba(X) for f in self.forests)


def fit_forest(X: np.ndarray, Y: np.ndarray, n_estimators: int = 100, seed: int = 1) -> MultiOutputForest:
    """Fit the two-target forest on a feature matrix.

    Y is [n, 2] integer class indices: column 0 rhythm, column 1 quality.
    """
    return MultiOutputForest(n_estimators=n_estimators, seed=seed).fit(X, Y)


def predict_forest(forest: MultiOutputForest, x: np.ndarray):
    """Probability vectors (rhythm[2], quality[3]) for a single feature row."""
    rp, qp = forest.predict_proba(np.asarray(x, dtype=np.float64)[None, :])
    return rp[0], qp[0]
