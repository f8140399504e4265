"""Active-transfer-learning sampler.

Candidate approach scenarios are generated on a polar (angle, distance) grid
around the user. A logistic-regression domain discriminator is trained to
separate those candidates (application domain) from the general training
pool's features (training domain); the sampler then picks the approach
angles whose candidates look most confidently application-domain. Stop
events are converted to discomfort labels with a logistic ramp around the
stop distance and fed back into the discriminator as application examples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import FeatureVector, OutsideRoom, Pose2D, RoomPolygon, extract_features, normalize_angle
from .socnav import LabeledExample

log = logging.getLogger(__name__)

DEFAULT_STOP_RAMP_RATE = 4.0  # logistic steepness, per meter
MIN_START_DISTANCE = 0.1


@dataclass(frozen=True)
class SamplerGrid:
    angles: tuple = tuple(np.linspace(-math.pi / 2, math.pi / 2, 9))
    distances: tuple = tuple(np.linspace(0.3, 2.0, 18))
    approach_length: float = 2.0

    def __post_init__(self):
        if not self.angles or not self.distances:
            raise ValueError("grid needs at least one angle and one distance")
        if any(not -math.pi < a <= math.pi for a in self.angles):
            raise ValueError("angles must lie in (-pi, pi]")
        dists = tuple(self.distances)
        if any(d <= 0 for d in dists) or any(b <= a for a, b in zip(dists, dists[1:])):
            raise ValueError("distances must be positive and ascending")
        if self.approach_length <= 0:
            raise ValueError("approach_length must be positive")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "distances", dists)

    def to_dict(self) -> dict:
        return {
            "angles": list(self.angles),
            "distances": list(self.distances),
            "approach_length": self.approach_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerGrid":
        return cls(tuple(d["angles"]), tuple(d["distances"]), d["approach_length"])


@dataclass
class CandidateScenario:
    features: FeatureVector
    angle: float
    distance: float
    domain_label: str | None = None
    predicted_app_confidence: float | None = None


@dataclass(frozen=True)
class DiscriminatorModel:
    """Logistic regression over standardized features (application domain = 1)."""

    weights: np.ndarray  # bias last
    norm_mean: np.ndarray
    norm_std: np.ndarray
    meta: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        z = ((X - self.norm_mean) / self.norm_std) @ self.weights[:-1] + self.weights[-1]
        return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class MlpDiscriminatorModel:
    """Single-hidden-layer MLP domain classifier (application domain = 1).

    Higher-variance alternative to the logistic head: its seeded
    initialization makes per-session angle selections vary, which the plain
    logistic fit on strongly separable domains does not.
    """

    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: float
    norm_mean: np.ndarray
    norm_std: np.ndarray
    meta: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        h = np.maximum(((X - self.norm_mean) / self.norm_std) @ self.w_hidden + self.b_hidden, 0.0)
        return 1.0 / (1.0 + np.exp(-(h @ self.w_out + self.b_out)))


@dataclass(frozen=True)
class AngleSelection:
    angles: tuple
    start_positions: tuple
    start_distances: tuple
    confidences: dict


def _approach_point(user_pose: Pose2D, angle: float, distance: float) -> tuple[float, float, float]:
    """Robot (x, y, heading) at a polar offset in the user's frame, facing the user."""
    world = user_pose.heading + angle
    x = user_pose.x + distance * math.cos(world)
    y = user_pose.y + distance * math.sin(world)
    return x, y, normalize_angle(world + math.pi)


def generate_pool(room: RoomPolygon, user_pose: Pose2D, grid: SamplerGrid) -> list[CandidateScenario]:
    """One candidate per (angle, distance) grid cell; cells outside the room are dropped."""
    if not room.contains_point(user_pose.x, user_pose.y):
        raise OutsideRoom("user pose is not strictly inside the room")
    pool = []
    dropped = 0
    for angle in grid.angles:
        for dist in grid.distances:
            x, y, heading = _approach_point(user_pose, angle, dist)
            if not room.contains_point(x, y):
                dropped += 1
                continue
            features = extract_features(room, user_pose, Pose2D(x, y, heading))
            pool.append(CandidateScenario(features=features, angle=angle, distance=dist,
                                          domain_label="application"))
    if dropped:
        log.info("pool generation dropped %d of %d candidates outside the room",
                 dropped, len(grid.angles) * len(grid.distances))
    return pool


def _feature_rows(items) -> np.ndarray:
    rows = []
    for item in items:
        fv = getattr(item, "features", item)
        rows.append(fv.as_array())
    return np.stack(rows)


def _class_weights(y: np.ndarray, n_app: int, n_train: int) -> np.ndarray:
    n = len(y)
    w = np.where(y == 1.0, n / (2.0 * n_app), n / (2.0 * n_train))
    return w / w.sum()


def _train_logistic(Xn, y, sample_w, max_iters, lr, l2):
    w = np.zeros(Xn.shape[1])
    prev_loss = np.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        p = 1.0 / (1.0 + np.exp(-(Xn @ w)))
        grad = Xn.T @ (sample_w * (p - y))
        grad[:-1] += l2 * w[:-1]
        w = w - lr * grad
        loss = float(-np.sum(sample_w * (y * np.log(np.maximum(p, 1e-12))
                                         + (1 - y) * np.log(np.maximum(1 - p, 1e-12)))))
        if abs(prev_loss - loss) < 1e-12:
            break
        prev_loss = loss
    return w, iters


def _train_mlp_head(Xn, y, sample_w, seed, hidden, max_iters, lr):
    rng = np.random.default_rng(seed)
    d = Xn.shape[1]
    w1 = rng.normal(0.0, np.sqrt(2.0 / d), (d, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, 0.3, hidden)
    b2 = 0.0
    vw1 = np.zeros_like(w1)
    vb1 = np.zeros_like(b1)
    vw2 = np.zeros_like(w2)
    vb2 = 0.0
    mom = 0.9
    for _ in range(max_iters):
        z = Xn @ w1 + b1
        h = np.maximum(z, 0.0)
        p = 1.0 / (1.0 + np.exp(-(h @ w2 + b2)))
        delta = sample_w * (p - y)
        gw2 = h.T @ delta
        gb2 = float(delta.sum())
        dh = np.outer(delta, w2) * (z > 0.0)
        gw1 = Xn.T @ dh
        gb1 = dh.sum(axis=0)
        vw1 = mom * vw1 + lr * gw1
        vb1 = mom * vb1 + lr * gb1
        vw2 = mom * vw2 + lr * gw2
        vb2 = mom * vb2 + lr * gb2
        w1 -= vw1
        b1 -= vb1
        w2 -= vw2
        b2 -= vb2
    return w1, b1, w2, b2


def train_discriminator(app_pool, training_sample, seed: int = 0,
                        max_iters: int = 2000, lr: float = 0.5,
                        l2: float = 1e-4, head: str = "logistic",
                        hidden: int = 16):
    """Fit the domain classifier with inverse-frequency class weighting.

    The default logistic head trains by gradient descent from zero weights
    (deterministic for fixed inputs; the small L2 term keeps separable fits
    finite). head="mlp" trains a small seeded MLP instead.
    """
    if not app_pool or not training_sample:
        raise ValueError("both the application pool and the training sample must be nonempty")
    X_app = _feature_rows(app_pool)
    X_train = _feature_rows(training_sample)
    X = np.vstack([X_app, X_train])
    y = np.concatenate([np.ones(len(X_app)), np.zeros(len(X_train))])

    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), 1e-8)
    sample_w = _class_weights(y, len(X_app), len(X_train))
    meta = {"seed": seed, "n_app": len(X_app), "n_train": len(X_train), "head": head}

    if head == "logistic":
        Xn = np.hstack([(X - mean) / std, np.ones((len(X), 1))])
        w, iters = _train_logistic(Xn, y, sample_w, max_iters, lr, l2)
        return DiscriminatorModel(weights=w, norm_mean=mean, norm_std=std,
                                  meta={**meta, "iterations": iters})
    if head == "mlp":
        Xn = (X - mean) / std
        w1, b1, w2, b2 = _train_mlp_head(Xn, y, sample_w, seed, hidden,
                                         max_iters=min(max_iters, 300), lr=0.1)
        return MlpDiscriminatorModel(w_hidden=w1, b_hidden=b1, w_out=w2, b_out=b2,
                                     norm_mean=mean, norm_std=std,
                                     meta={**meta, "iterations": min(max_iters, 300)})
    raise ValueError(f"unknown discriminator head {head!r}")


def score_pool(model: DiscriminatorModel, pool) -> None:
    """Attach predicted application-domain confidence to each candidate."""
    if not pool:
        return
    probs = model.predict(_feature_rows(pool))
    for cand, p in zip(pool, probs):
        cand.predicted_app_confidence = float(p)


def _start_for_angle(room: RoomPolygon, user_pose: Pose2D, angle: float,
                     approach_length: float) -> tuple[tuple[float, float], float]:
    length = approach_length
    while length > MIN_START_DISTANCE:
        x, y, _ = _approach_point(user_pose, angle, length)
        if room.contains_point(x, y):
            if length < approach_length:
                log.info("approach at angle %.3f shortened to %.2f m to stay inside the room",
                         angle, length)
            return (x, y), length
        length *= 0.95
    raise OutsideRoom(f"no interior start position along angle {angle:.3f}")


def select_angles(model: DiscriminatorModel, pool, k: int, *,
                  room: RoomPolygon, user_pose: Pose2D,
                  approach_length: float) -> AngleSelection:
    """Top-k angles by mean application-domain confidence (ties: ascending angle)."""
    if not pool:
        raise ValueError("candidate pool is empty")
    angles = sorted({c.angle for c in pool})
    if not 1 <= k <= len(angles):
        raise ValueError(f"k={k} outside [1, {len(angles)}]")
    score_pool(model, pool)
    conf = {
        a: float(np.mean([c.predicted_app_confidence for c in pool if c.angle == a]))
        for a in angles
    }
    ranked = sorted(angles, key=lambda a: (-conf[a], a))[:k]
    positions, lengths = [], []
    for a in ranked:
        pos, length = _start_for_angle(room, user_pose, a, approach_length)
        positions.append(pos)
        lengths.append(length)
    return AngleSelection(
        angles=tuple(ranked),
        start_positions=tuple(positions),
        start_distances=tuple(lengths),
        confidences=conf,
    )


def random_selection(grid: SamplerGrid, k: int, rng: np.random.Generator, *,
                     room: RoomPolygon, user_pose: Pose2D) -> AngleSelection:
    """Uniform draw of k approach angles (with replacement) from the grid."""
    chosen = [float(grid.angles[i]) for i in rng.integers(len(grid.angles), size=k)]
    positions, lengths = [], []
    for a in chosen:
        pos, length = _start_for_angle(room, user_pose, a, grid.approach_length)
        positions.append(pos)
        lengths.append(length)
    return AngleSelection(tuple(chosen), tuple(positions), tuple(lengths), {})


def stop_to_labels(angle: float, stop_distance: float, room: RoomPolygon,
                   user_pose: Pose2D, grid: SamplerGrid,
                   ramp_rate: float = DEFAULT_STOP_RAMP_RATE,
                   source: str = "session") -> list[LabeledExample]:
    """Expand one stop event into discomfort labels along the approach line.

    Each grid distance d is labeled 100 * sigmoid(ramp_rate * (stop - d)):
    about 50 at the stop point, near 0 well beyond it, near 100 well inside.
    """
    if not 0.0 < stop_distance <= grid.approach_length:
        raise ValueError(
            f"stop_distance {stop_distance} outside (0, {grid.approach_length}]"
        )
    labels = []
    for d in grid.distances:
        x, y, heading = _approach_point(user_pose, angle, d)
        if not room.contains_point(x, y):
            continue
        features = extract_features(room, user_pose, Pose2D(x, y, heading))
        discomfort = 100.0 / (1.0 + math.exp(-ramp_rate * (stop_distance - d)))
        labels.append(LabeledExample(features=features, discomfort=discomfort, source=source))
    return labels


@dataclass
class SamplerState:
    """Mutable per-session sampler state (one session per state; not shared)."""

    room: RoomPolygon
    user_pose: Pose2D
    grid: SamplerGrid
    strategy: str
    training_sample: list
    seed: int = 0
    k: int = 3
    ramp_rate: float = DEFAULT_STOP_RAMP_RATE
    label_source: str = "session"
    discriminator_head: str = "logistic"
    pool: list = field(default_factory=list)
    labeled: list = field(default_factory=list)
    app_examples: list = field(default_factory=list)
    discriminator: DiscriminatorModel | None = None
    rounds_completed: int = 0
    angle_log: list = field(default_factory=list)
    stop_log: list = field(default_factory=list)
    events: list = field(default_factory=list)
    rng: np.random.Generator = None

    def log_event(self, kind: str, **data) -> None:
        self.events.append({"event": kind, "round": self.rounds_completed, **data})


def init_session(room, user_pose, grid, strategy, training_sample,
                 seed: int = 0, k: int = 3, ramp_rate: float = DEFAULT_STOP_RAMP_RATE,
                 label_source: str = "session",
                 discriminator_head: str = "logistic") -> SamplerState:
    if strategy not in ("atl", "random"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "atl" and not training_sample:
        raise ValueError("atl strategy requires a training-domain sample")
    state = SamplerState(
        room=room, user_pose=user_pose, grid=grid, strategy=strategy,
        training_sample=list(training_sample), seed=seed, k=k,
        ramp_rate=ramp_rate, label_source=label_source,
        discriminator_head=discriminator_head,
        rng=np.random.default_rng(seed),
    )
    state.pool = generate_pool(room, user_pose, grid)
    state.log_event("pool_generated", count=len(state.pool),
                    dropped=len(grid.angles) * len(grid.distances) - len(state.pool))
    if strategy == "atl":
        state.discriminator = train_discriminator(state.pool, state.training_sample,
                                                  seed=seed, head=discriminator_head)
        state.log_event("discriminator_retrained",
                        iterations=state.discriminator.meta["iterations"])
    return state


def next_selection(state: SamplerState) -> AngleSelection:
    if state.strategy == "atl":
        selection = select_angles(
            state.discriminator, state.pool, state.k,
            room=state.room, user_pose=state.user_pose,
            approach_length=state.grid.approach_length,
        )
    else:
        selection = random_selection(state.grid, state.k, state.rng,
                                     room=state.room, user_pose=state.user_pose)
    state.log_event("angles_selected", angles=list(selection.angles),
                    confidences={f"{a:.6f}": c for a, c in selection.confidences.items()})
    return selection


def record_stop(state: SamplerState, angle: float, stop_distance: float) -> list[LabeledExample]:
    """Record one stop event: ramp labels for fine-tuning plus the visited
    stop scenario as a new application-domain example for the discriminator."""
    labels = stop_to_labels(angle, stop_distance, state.room, state.user_pose,
                            state.grid, ramp_rate=state.ramp_rate, source=state.label_source)
    state.labeled.extend(labels)
    x, y, heading = _approach_point(state.user_pose, angle, stop_distance)
    if state.room.contains_point(x, y):
        state.app_examples.append(
            extract_features(state.room, state.user_pose, Pose2D(x, y, heading)))
    state.angle_log.append(angle)
    state.stop_log.append(stop_distance)
    state.log_event("stop_recorded", angle=angle, stop_distance=stop_distance,
                    labels=len(labels))
    return labels


def retrain(state: SamplerState) -> None:
    if state.strategy != "atl":
        return
    app = list(state.pool) + list(state.app_examples)
    # per-round seed so a freshly initialized (mlp) head re-draws each round
    state.discriminator = train_discriminator(
        app, state.training_sample,
        seed=state.seed + 17 * (state.rounds_completed + 1),
        head=state.discriminator_head,
    )
    state.log_event("discriminator_retrained",
                    iterations=state.discriminator.meta["iterations"])


def run_round(state: SamplerState, label_provider) -> SamplerState:
    """One sampling round: select k angles, obtain stop distances from the
    provider, convert them to labels, then retrain the discriminator."""
    selection = next_selection(state)
    for angle, start_dist in zip(selection.angles, selection.start_distances):
        try:
            stop = float(label_provider(angle, start_dist))
        except Exception as exc:
            raise RuntimeError(f"label provider failed in round {state.rounds_completed}: {exc}") from exc
        record_stop(state, angle, stop)
    retrain(state)
    state.rounds_completed += 1
    return state
