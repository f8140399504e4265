"""Analysis toolbox: Isolation Forest outlier removal, kernel density
estimation, Gaussian-process regression, paired t-tests, Spearman rank
correlation, and the two-sample Kolmogorov-Smirnov statistic.

Everything here is implemented directly (no stats libraries); the test suite
validates the implementations against independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


# ---------------------------------------------------------------------------
# special functions


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta function."""
    MAXIT, EPS, FPMIN = 200, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """CDF of Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * betainc(0.5 * df, 0.5, x)
    return tail if t <= 0 else 1.0 - tail


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# isolation forest


@dataclass(frozen=True)
class IsolationForestConfig:
    num_trees: int = 100
    subsample_size: int = 256
    seed: int = 0
    contamination: float | None = None  # None = threshold-at-0.5 mode

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.subsample_size < 2:
            raise ValueError("subsample_size must be >= 2")
        if self.contamination is not None and not 0.0 < self.contamination < 0.5:
            raise ValueError("contamination must lie in (0, 0.5)")


def _avg_path_length(m: int) -> float:
    """Expected unsuccessful-search path length in a binary search tree of m points."""
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    if m <= 4096:
        harmonic = float(np.sum(1.0 / np.arange(1, m)))
    else:
        harmonic = math.log(m - 1) + np.euler_gamma
    return 2.0 * harmonic - 2.0 * (m - 1) / m


def _grow_tree(data: np.ndarray, depth: int, limit: int, rng: np.random.Generator):
    n = data.shape[0]
    if n <= 1 or depth >= limit:
        return (n,)
    mins = data.min(axis=0)
    maxs = data.max(axis=0)
    usable = np.nonzero(maxs > mins)[0]
    if usable.size == 0:
        return (n,)
    feat = int(usable[rng.integers(usable.size)])
    cut = rng.uniform(mins[feat], maxs[feat])
    left = data[:, feat] < cut
    return (
        feat,
        cut,
        _grow_tree(data[left], depth + 1, limit, rng),
        _grow_tree(data[~left], depth + 1, limit, rng),
    )


def _path_length(x: np.ndarray, node, depth: int = 0) -> float:
    while len(node) != 1:
        feat, cut, left, right = node
        node = left if x[feat] < cut else right
        depth += 1
    return depth + _avg_path_length(node[0])


def isolation_forest(points, cfg: IsolationForestConfig | None = None):
    """Anomaly scores in (0, 1) plus an inlier mask.

    Threshold mode treats a point as an outlier when its score exceeds 0.5,
    so a fully uniform sample (every score exactly 0.5) flags nothing.
    """
    cfg = cfg or IsolationForestConfig()
    data = np.asarray(points, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    n = data.shape[0]
    if n < 2:
        raise ValueError("isolation forest needs at least 2 points")
    psi = min(cfg.subsample_size, n)
    limit = math.ceil(math.log2(psi)) if psi > 1 else 1
    rng = np.random.default_rng(cfg.seed)

    trees = []
    for _ in range(cfg.num_trees):
        idx = rng.choice(n, size=psi, replace=False)
        trees.append(_grow_tree(data[idx], 0, limit, rng))

    mean_paths = np.array(
        [np.mean([_path_length(x, t) for t in trees]) for x in data]
    )
    scores = np.power(2.0, -mean_paths / _avg_path_length(psi))

    if cfg.contamination is None:
        inliers = scores <= 0.5
    else:
        k = max(1, int(math.ceil(cfg.contamination * n)))
        cutoff = np.sort(scores)[-k]
        inliers = scores < cutoff
    return scores, inliers


# ---------------------------------------------------------------------------
# kernel density estimation


@dataclass(frozen=True)
class KdeModel:
    samples: np.ndarray
    bandwidth: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] < 1:
            raise ValueError("KDE needs at least one sample")
        if samples.shape[1] > 2:
            raise ValueError("KDE supports 1-D and 2-D samples only")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "samples", samples)


def kde_density(model: KdeModel, x):
    """Mean-of-Gaussian-kernels density at the query point(s)."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0 or (x.ndim == 1 and model.samples.shape[1] == x.size > 1)
    pts = x.reshape(-1, model.samples.shape[1])
    d = model.samples.shape[1]
    h = model.bandwidth
    sq = ((pts[:, None, :] - model.samples[None, :, :]) ** 2).sum(axis=2)
    norm = (2.0 * math.pi) ** (d / 2.0) * h**d
    dens = np.exp(-0.5 * sq / (h * h)).mean(axis=1) / norm
    return float(dens[0]) if scalar else dens


def kde_mode(model: KdeModel, grid):
    """Grid point with maximum estimated density."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty evaluation grid")
    flat = grid.reshape(-1, model.samples.shape[1]) if grid.ndim > 1 else grid.reshape(-1, 1)
    dens = kde_density(model, flat)
    best = int(np.argmax(dens))
    point = flat[best]
    return float(point[0]) if point.size == 1 else point


def kde_bandwidth_cv(samples, candidates, seed: int = 0, folds: int = 5) -> float:
    """Pick the bandwidth maximizing mean leave-fold-out log density."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n < 2:
        return float(candidates[0])
    folds = min(folds, n)
    perm = np.random.default_rng(seed).permutation(n)
    best_bw, best_score = None, -np.inf
    for bw in candidates:
        total = 0.0
        for f in range(folds):
            test_idx = perm[f::folds]
            train_idx = np.setdiff1d(perm, test_idx)
            if train_idx.size == 0:
                continue
            model = KdeModel(samples[train_idx], bandwidth=float(bw))
            dens = np.maximum(kde_density(model, samples[test_idx]), 1e-300)
            total += float(np.sum(np.log(dens)))
        if total > best_score:
            best_score, best_bw = total, float(bw)
    return best_bw


# ---------------------------------------------------------------------------
# Gaussian process regression


@dataclass(frozen=True)
class GprConfig:
    alpha: float = 1.0
    length_scale: float = 1.0
    noise_variance: float = 1e-8
    normalize_y: bool = False

    def __post_init__(self):
        if self.alpha <= 0 or self.length_scale <= 0:
            raise ValueError("alpha and length_scale must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    return A[:, None] if A.ndim == 1 else A


def rq_kernel(A, B, alpha: float = 1.0, length_scale: float = 1.0) -> np.ndarray:
    """Rational quadratic kernel (1 + |a-b|^2 / (2 alpha l^2))^(-alpha)."""
    A = _as_2d(A)
    B = _as_2d(B)
    sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return (1.0 + sq / (2.0 * alpha * length_scale**2)) ** (-alpha)


class GprModel:
    def __init__(self, X, y, cfg: GprConfig, L, alpha_vec, y_mean):
        self.X = X
        self.y = y
        self.cfg = cfg
        self._L = L
        self._alpha_vec = alpha_vec
        self._y_mean = y_mean


def gpr_fit(X, y, cfg: GprConfig | None = None) -> GprModel:
    """Fit a zero-mean (optionally y-centered) GP with the RQ kernel."""
    cfg = cfg or GprConfig()
    X = _as_2d(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("X and y must be nonempty with matching lengths")
    y_mean = float(y.mean()) if cfg.normalize_y else 0.0
    yc = y - y_mean
    K = rq_kernel(X, X, cfg.alpha, cfg.length_scale)
    jitter = 1e-10
    while True:
        try:
            L = np.linalg.cholesky(K + (cfg.noise_variance + jitter) * np.eye(len(K)))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-2:
                raise np.linalg.LinAlgError(
                    "kernel matrix is singular even after jitter escalation"
                ) from None
    alpha_vec = np.linalg.solve(L.T, np.linalg.solve(L, yc))
    return GprModel(X, y, cfg, L, alpha_vec, y_mean)


def gpr_predict(model: GprModel, X_star):
    """Posterior mean and variance at the query inputs."""
    X_star = np.asarray(X_star, dtype=np.float64)
    scalar = X_star.ndim == 0 or (X_star.ndim == 1 and model.X.shape[1] == X_star.size > 1)
    X_star = X_star.reshape(-1, model.X.shape[1])
    k_star = rq_kernel(X_star, model.X, model.cfg.alpha, model.cfg.length_scale)
    mean = k_star @ model._alpha_vec + model._y_mean
    v = np.linalg.solve(model._L, k_star.T)
    var = np.maximum(1.0 - np.sum(v * v, axis=0), 0.0)
    if scalar:
        return float(mean[0]), float(var[0])
    return mean, var


# ---------------------------------------------------------------------------
# classical tests


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: int | None = None

    def __post_init__(self):
        if not (math.isnan(self.p_value) or 0.0 <= self.p_value <= 1.0):
            raise ValueError("p-value outside [0, 1]")

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "df": self.df}


def paired_t_lower(a, b) -> TestResult:
    """Lower-tailed paired t-test of a against b (H1: mean(a - b) < 0).

    If the differences have zero variance, the result degenerates by the sign
    of the mean difference: p = 0.5 for zero mean, 0 for negative, 1 for
    positive (statistic reported as 0 or +/-inf).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length samples with n >= 2")
    d = a - b
    n = d.size
    sd = d.std(ddof=1)
    if sd == 0.0:
        m = d.mean()
        if m == 0.0:
            return TestResult(0.0, 0.5, n - 1)
        return TestResult(math.copysign(math.inf, m), 0.0 if m < 0 else 1.0, n - 1)
    t = d.mean() / (sd / math.sqrt(n))
    return TestResult(float(t), student_t_cdf(t, n - 1), n - 1)


def _rank_average(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> TestResult:
    """Spearman rank correlation with a two-sided t-approximation p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("need two equal-length samples with n >= 3")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("correlation undefined for a constant sample")
    rx = _rank_average(x)
    ry = _rank_average(y)
    rx -= rx.mean()
    ry -= ry.mean()
    r = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    n = x.size
    if abs(r) >= 1.0:
        return TestResult(math.copysign(1.0, r), 0.0, n - 2)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * student_t_cdf(-abs(t), n - 2)
    return TestResult(r, min(p, 1.0), n - 2)


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())
