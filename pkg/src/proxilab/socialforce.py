"""Social-force discomfort baseline and its genetic-algorithm parameter fit.

The baseline reduces an anisotropic exponential personal-space force to a
scalar 0-100 discomfort: full strength directly in front of the person,
attenuated behind. Parameters are fitted by a real-coded GA that minimizes
mean absolute error on labeled examples.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import FeatureVector
from .socnav import examples_to_arrays

DEFAULT_BOUNDS = (
    (0.0, 200.0),   # amplitude, score units
    (0.05, 5.0),    # range, meters
    (0.0, 3.0),     # offset, meters
    (0.0, 1.0),     # anisotropy
)


@dataclass(frozen=True)
class SFParams:
    amplitude: float
    range_m: float
    offset: float
    anisotropy: float

    def __post_init__(self):
        for value, (lo, hi), name in zip(
            (self.amplitude, self.range_m, self.offset, self.anisotropy),
            DEFAULT_BOUNDS,
            ("amplitude", "range_m", "offset", "anisotropy"),
        ):
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.amplitude, self.range_m, self.offset, self.anisotropy])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SFParams":
        return cls(d["amplitude"], d["range_m"], d["offset"], d["anisotropy"])


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for rate in (self.crossover_rate, self.mutation_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


def sf_discomfort(p: SFParams, f: FeatureVector) -> float:
    """Scalar discomfort of one scenario under the social-force baseline."""
    return float(
        _kernels.sf_scores(
            p.amplitude, p.range_m, p.offset, p.anisotropy,
            np.array([f.hr_dist]), np.array([f.hr_cos]),
        )[0]
    )


def sf_discomfort_batch(p: SFParams, X: np.ndarray) -> np.ndarray:
    """Vector of discomfort scores for feature rows (hr_dist col 0, hr_cos col 2)."""
    X = np.asarray(X, dtype=np.float64)
    return _kernels.sf_scores(
        p.amplitude, p.range_m, p.offset, p.anisotropy,
        np.ascontiguousarray(X[:, 0]), np.ascontiguousarray(X[:, 2]),
    )


def fitness(p: SFParams, data) -> float:
    """Mean absolute error of the baseline over labeled examples."""
    X, y = examples_to_arrays(data)
    return float(np.mean(np.abs(sf_discomfort_batch(p, X) - y)))


def ga_minimize(fn, bounds, cfg: GAConfig | None = None):
    """Real-coded GA: tournament-2 selection, blend crossover, Gaussian
    mutation clipped to bounds, elitism of 1. Returns (best vector, history of
    best-so-far fitness per generation, which is non-increasing)."""
    cfg = cfg or GAConfig()
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("bounds must be (n, 2) with lo < hi")
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo
    ndim = bounds.shape[0]
    rng = np.random.default_rng(cfg.seed)

    pop = lo + rng.uniform(size=(cfg.population_size, ndim)) * span
    fit = np.array([fn(ind) for ind in pop])
    best_idx = int(np.argmin(fit))
    best_x, best_f = pop[best_idx].copy(), float(fit[best_idx])
    history = [best_f]

    for _ in range(cfg.generations):
        children = np.empty_like(pop)
        for slot in range(cfg.population_size):
            a, b = rng.integers(cfg.population_size, size=2)
            p1 = pop[a] if fit[a] <= fit[b] else pop[b]
            a, b = rng.integers(cfg.population_size, size=2)
            p2 = pop[a] if fit[a] <= fit[b] else pop[b]
            child = p1.copy()
            if rng.uniform() < cfg.crossover_rate:
                # blend crossover (alpha=0.5): sample around the parent interval
                lo_g = np.minimum(p1, p2)
                hi_g = np.maximum(p1, p2)
                width = hi_g - lo_g
                child = rng.uniform(lo_g - 0.5 * width, hi_g + 0.5 * width)
            mutate = rng.uniform(size=ndim) < cfg.mutation_rate
            child = np.where(mutate, child + rng.normal(size=ndim) * 0.1 * span, child)
            children[slot] = np.clip(child, lo, hi)
        children[0] = best_x  # elitism
        pop = children
        fit = np.array([fn(ind) for ind in pop])
        gen_best = int(np.argmin(fit))
        if fit[gen_best] < best_f:
            best_f = float(fit[gen_best])
            best_x = pop[gen_best].copy()
        history.append(best_f)

    return best_x, history


def ga_fit(data, bounds=DEFAULT_BOUNDS, cfg: GAConfig | None = None):
    """Fit baseline parameters to labeled examples. Returns (SFParams, history)."""
    X, y = examples_to_arrays(data)
    hr_dist = np.ascontiguousarray(X[:, 0])
    hr_cos = np.ascontiguousarray(X[:, 2])

    def objective(vec):
        scores = _kernels.sf_scores(vec[0], vec[1], vec[2], vec[3], hr_dist, hr_cos)
        return float(np.mean(np.abs(scores - y)))

    best, history = ga_minimize(objective, bounds, cfg)
    return SFParams(*best), history


def save_params(p: SFParams, path) -> None:
    Path(path).write_text(json.dumps(p.to_dict()))


def load_params(path) -> SFParams:
    return SFParams.from_dict(json.loads(Path(path).read_text()))
