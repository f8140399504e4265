"""Synthetic-user oracles and batch experiment runners.

Synthetic users stand in for study participants: each has an angle-dependent
preferred approach distance (cosine profile plus Gaussian draw noise) and,
optionally, a systematic offset between their virtual-robot and
physical-robot preferences. The runners replay the full study pipeline --
ATL vs. random-sampling personalization and the virtual/physical stopping
distance analysis -- end to end without human subjects.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import atl, stats
from .geometry import FeatureVector, Pose2D, RoomPolygon
from .nnmodel import ProxemicsNetwork, evaluate_mae, fine_tune
from .socnav import LabeledExample

MIN_STOP_DISTANCE = 0.05

PRESETS = ("flat", "angled", "shifted")


@dataclass(frozen=True)
class SyntheticUser:
    """Parametric ground-truth preference function for one simulated participant."""

    base_distance: float
    angular_amplitude: float = 0.0
    angular_phase: float = 0.0
    noise_sigma: float = 0.0
    ar_physical_offset: float = 0.0
    seed: int = 0
    ramp_rate: float = atl.DEFAULT_STOP_RAMP_RATE

    def __post_init__(self):
        if self.base_distance <= 0:
            raise ValueError("base_distance must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def mean_preferred_distance(user: SyntheticUser, angle: float, condition: str = "ar") -> float:
    """Noise-free preferred stopping distance at an approach angle."""
    d = user.base_distance + user.angular_amplitude * math.cos(angle - user.angular_phase)
    if condition == "physical":
        d += user.ar_physical_offset
    return d


def preferred_distance(user: SyntheticUser, angle: float, condition: str = "ar",
                       max_distance: float = 2.0,
                       rng: np.random.Generator | None = None) -> float:
    """Sampled stopping distance, clipped into (MIN_STOP_DISTANCE, max_distance]."""
    if rng is None:
        rng = np.random.default_rng(user.seed)
    d = mean_preferred_distance(user, angle, condition)
    if user.noise_sigma > 0:
        d += rng.normal(0.0, user.noise_sigma)
    return float(min(max(d, MIN_STOP_DISTANCE + 1e-9), max_distance))


def ground_truth_discomfort(user: SyntheticUser, features: FeatureVector) -> float:
    """Oracle discomfort consistent with the stop-event label ramp."""
    d_star = mean_preferred_distance(user, features.bearing)
    return 100.0 / (1.0 + math.exp(-user.ramp_rate * (d_star - features.hr_dist)))


def make_users(n: int, preset: str = "angled", seed: int = 0) -> list[SyntheticUser]:
    """Draw a reproducible population of synthetic users for a preset."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; options: {PRESETS}")
    rng = np.random.default_rng([seed, 777])
    users = []
    for i in range(n):
        base = float(rng.uniform(0.8, 1.05))
        if preset == "flat":
            amp, phase, sigma, offset = 0.0, 0.0, 0.03, 0.0
        else:
            # wide amplitude spread: some users are nearly flat, some strongly
            # angle-dependent, so sampling-coverage effects vary by user
            amp = float(rng.uniform(0.05, 0.8))
            phase = float(rng.uniform(-1.0, 1.0))
            sigma = 0.05
            offset = float(rng.uniform(0.2, 0.6)) if preset == "shifted" else 0.0
        users.append(SyntheticUser(
            base_distance=base, angular_amplitude=amp, angular_phase=phase,
            noise_sigma=sigma, ar_physical_offset=offset, seed=seed + 1000 * (i + 1),
        ))
    return users


def default_room() -> RoomPolygon:
    return RoomPolygon([(0.0, 0.0), (6.0, 0.0), (6.0, 5.0), (0.0, 5.0)])


def default_user_pose() -> Pose2D:
    return Pose2D(3.0, 2.5, 0.0)


@dataclass(frozen=True)
class StudyConfig:
    n_users: int = 20
    preset: str = "angled"
    seed: int = 11
    rounds: int = 3
    k: int = 3
    test_passes: int = 2  # test set covers the full angle fan this many times
    fine_tune_epochs: int = 50
    fine_tune_lr: float = 5e-5
    smooth_predictions: bool = True
    sampler_head: str = "mlp"


@dataclass
class ExperimentReport:
    per_user: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    test_matrix: list = field(default_factory=list)
    spearman_angle_std: dict = field(default_factory=dict)
    spearman_ks: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_user": self.per_user,
            "aggregates": self.aggregates,
            "test_matrix": self.test_matrix,
            "spearman_angle_std": self.spearman_angle_std,
            "spearman_ks": self.spearman_ks,
            "config": self.config,
        }


def _stop_provider(user: SyntheticUser, rng: np.random.Generator,
                   max_distance: float, condition: str = "ar"):
    def provider(angle: float, start_distance: float) -> float:
        return preferred_distance(user, angle, condition=condition,
                                  max_distance=min(max_distance, start_distance), rng=rng)
    return provider


def _collect_rs_set(user, room, pose, grid, rng, n_approaches):
    """Random-sampling arm: uniform angles, one stop event per approach.

    Returns (labeled examples, approach angles, stop distances).
    """
    labels: list[LabeledExample] = []
    angles: list[float] = []
    stops: list[float] = []
    provider = _stop_provider(user, rng, grid.approach_length)
    for i in rng.integers(len(grid.angles), size=n_approaches):
        angle = float(grid.angles[i])
        stop = provider(angle, grid.approach_length)
        labels.extend(atl.stop_to_labels(angle, stop, room, pose, grid,
                                         ramp_rate=user.ramp_rate, source="synthetic"))
        angles.append(angle)
        stops.append(stop)
    return labels, angles, stops


def _collect_fan_set(user, room, pose, grid, rng, passes):
    """Held-out evaluation set: the full approach-angle fan, several passes."""
    labels: list[LabeledExample] = []
    angles: list[float] = []
    provider = _stop_provider(user, rng, grid.approach_length)
    for _ in range(passes):
        for angle in grid.angles:
            stop = provider(angle, grid.approach_length)
            labels.extend(atl.stop_to_labels(angle, stop, room, pose, grid,
                                             ramp_rate=user.ramp_rate, source="synthetic"))
            angles.append(float(angle))
    return labels, angles


def run_study1(base_model: ProxemicsNetwork, training_sample, cfg: StudyConfig | None = None,
               grid: atl.SamplerGrid | None = None, users=None) -> ExperimentReport:
    """Per-user ATL vs. random-sampling fine-tuning comparison.

    For every synthetic user, collect an ATL-sampled and an equally sized
    RS-sampled training set, fine-tune a copy of the base model on each, and
    evaluate all three variants on a held-out evaluation set covering the
    full angle fan. The report carries the four-row paired t-test matrix plus
    the two post-hoc Spearman correlations (angle spread vs. error,
    distribution mismatch vs. error). Each user's pipeline is driven only by
    that user's seed, so rows are independent of the population ordering.
    """
    cfg = cfg or StudyConfig()
    grid = grid or atl.SamplerGrid()
    room = default_room()
    pose = default_user_pose()
    if users is None:
        users = make_users(cfg.n_users, cfg.preset, cfg.seed)

    per_user = []
    for user in users:
        atl_rng = np.random.default_rng([user.seed, 1])
        rs_rng = np.random.default_rng([user.seed, 2])
        test_rng = np.random.default_rng([user.seed, 3])

        state = atl.init_session(room, pose, grid, "atl", training_sample,
                                 seed=user.seed, k=cfg.k, ramp_rate=user.ramp_rate,
                                 label_source="synthetic",
                                 discriminator_head=cfg.sampler_head)
        provider = _stop_provider(user, atl_rng, grid.approach_length)
        for _ in range(cfg.rounds):
            atl.run_round(state, provider)
        atl_set, atl_angles = state.labeled, list(state.angle_log)

        rs_set, rs_angles, _ = _collect_rs_set(user, room, pose, grid, rs_rng,
                                               cfg.rounds * cfg.k)
        if len(rs_set) != len(atl_set):
            raise RuntimeError(
                f"arm size mismatch: ATL {len(atl_set)} vs RS {len(rs_set)}"
            )
        test_set, test_angles = _collect_fan_set(user, room, pose, grid, test_rng,
                                                 cfg.test_passes)

        ft_atl = fine_tune(base_model, atl_set, epochs=cfg.fine_tune_epochs,
                           lr=cfg.fine_tune_lr, seed=user.seed)
        ft_rs = fine_tune(base_model, rs_set, epochs=cfg.fine_tune_epochs,
                          lr=cfg.fine_tune_lr, seed=user.seed)

        smooth = cfg.smooth_predictions
        per_user.append({
            "seed": user.seed,
            "atl_mae": evaluate_mae(ft_atl, test_set, smooth=smooth),
            "rs_mae": evaluate_mae(ft_rs, test_set, smooth=smooth),
            "base_mae": evaluate_mae(base_model, test_set, smooth=smooth),
            "atl_angle_std": float(np.std(atl_angles)),
            "rs_angle_std": float(np.std(rs_angles)),
            # mismatch between the ATL arm's sampled angles and the full pool
            # of RS-gathered points (training arm plus held-out evaluation)
            "ks_atl_rs": stats.ks_statistic(atl_angles, list(rs_angles) + list(test_angles)),
            "n_train": len(atl_set),
            "n_test": len(test_set),
        })

    atl_mae = np.array([u["atl_mae"] for u in per_user])
    rs_mae = np.array([u["rs_mae"] for u in per_user])
    base_mae = np.array([u["base_mae"] for u in per_user])

    def row(name_a, name_b, a, b):
        result = stats.paired_t_lower(a, b)
        return {
            "a": name_a, "b": name_b,
            "mean_a": float(np.mean(a)), "std_a": float(np.std(a, ddof=1)),
            "mean_b": float(np.mean(b)), "std_b": float(np.std(b, ddof=1)),
            "p_value": result.p_value, "df": result.df, "t": result.statistic,
        }

    matrix = [
        row("RS", "ATL", rs_mae, atl_mae),
        row("RS", "noFT", rs_mae, base_mae),
        row("ATL", "noFT", atl_mae, base_mae),
        row("ATL", "RS", atl_mae, rs_mae),
    ]

    pooled_std = [u["atl_angle_std"] for u in per_user] + [u["rs_angle_std"] for u in per_user]
    pooled_mae = [u["atl_mae"] for u in per_user] + [u["rs_mae"] for u in per_user]
    sp_std = stats.spearman(pooled_std, pooled_mae)
    sp_ks = stats.spearman([u["ks_atl_rs"] for u in per_user], [u["atl_mae"] for u in per_user])

    ft_mean = float(np.mean(np.concatenate([atl_mae, rs_mae])))
    base_mean = float(np.mean(base_mae))
    aggregates = {
        "atl_mae_mean": float(atl_mae.mean()), "atl_mae_std": float(atl_mae.std(ddof=1)),
        "rs_mae_mean": float(rs_mae.mean()), "rs_mae_std": float(rs_mae.std(ddof=1)),
        "base_mae_mean": base_mean, "base_mae_std": float(base_mae.std(ddof=1)),
        "fine_tuned_mae_mean": ft_mean,
        "relative_reduction": (base_mean - ft_mean) / base_mean if base_mean > 0 else 0.0,
        "atl_angle_std_mean": float(np.mean([u["atl_angle_std"] for u in per_user])),
        "rs_angle_std_mean": float(np.mean([u["rs_angle_std"] for u in per_user])),
    }

    return ExperimentReport(
        per_user=per_user,
        aggregates=aggregates,
        test_matrix=matrix,
        spearman_angle_std=sp_std.to_dict(),
        spearman_ks=sp_ks.to_dict(),
        config={**asdict(cfg), "grid": grid.to_dict()},
    )


@dataclass(frozen=True)
class ReplicaConfig:
    n_users: int = 20
    seed: int = 7
    preset: str = "shifted"
    samples_per_angle: int = 5
    outlier_fraction: float = 0.5    # fraction of users that get planted outliers
    outliers_per_user: int = 2
    held_out_fraction: float = 0.25
    kde_bandwidth: float = 1.0
    mode_grid_step: float = 0.01


def run_ar_physical_replica(cfg: ReplicaConfig | None = None,
                            grid: atl.SamplerGrid | None = None) -> dict:
    """Virtual-vs-physical stopping-distance pipeline on synthetic users.

    Per user and condition: sample stop distances at each approach angle,
    plant outliers for a subset of users, remove them with the isolation
    forest, reduce each angle's samples to a KDE mode, then regress physical
    modes on virtual modes with a GP (held-out users score the regression
    against the use-the-virtual-distance-directly baseline).
    """
    cfg = cfg or ReplicaConfig()
    grid = grid or atl.SamplerGrid()
    users = make_users(cfg.n_users, cfg.preset, cfg.seed)
    angles = list(grid.angles)

    rows = []
    planted_total = 0
    planted_flagged = 0
    for ui, user in enumerate(users):
        rng = np.random.default_rng([user.seed, 4])
        modes = {}
        for condition in ("ar", "physical"):
            pts = []
            for angle in angles:
                for _ in range(cfg.samples_per_angle):
                    pts.append((angle, preferred_distance(
                        user, angle, condition=condition,
                        max_distance=grid.approach_length, rng=rng)))
            n_planted = cfg.outliers_per_user if ui < cfg.outlier_fraction * cfg.n_users else 0
            planted_idx = set()
            for _ in range(n_planted):
                angle = float(angles[rng.integers(len(angles))])
                outlier = float(rng.uniform(grid.approach_length * 1.4, grid.approach_length * 1.9))
                planted_idx.add(len(pts))
                pts.append((angle, outlier))

            arr = np.array(pts)
            standardized = (arr - arr.mean(axis=0)) / np.maximum(arr.std(axis=0), 1e-9)
            _, inliers = stats.isolation_forest(
                standardized, stats.IsolationForestConfig(seed=user.seed))
            planted_total += len(planted_idx)
            planted_flagged += sum(1 for i in planted_idx if not inliers[i])

            kept = arr[inliers]
            mode_grid = np.arange(MIN_STOP_DISTANCE, grid.approach_length + cfg.mode_grid_step,
                                  cfg.mode_grid_step)
            for angle in angles:
                sel = kept[np.abs(kept[:, 0] - angle) < 1e-9][:, 1]
                if sel.size == 0:
                    sel = arr[np.abs(arr[:, 0] - angle) < 1e-9][:, 1]
                model = stats.KdeModel(sel, bandwidth=cfg.kde_bandwidth)
                modes[(condition, angle)] = stats.kde_mode(model, mode_grid)
        for angle in angles:
            rows.append({
                "user": ui, "angle": angle,
                "ar_mode": modes[("ar", angle)],
                "physical_mode": modes[("physical", angle)],
                "true_offset": user.ar_physical_offset,
            })

    n_held_out = max(1, int(round(cfg.held_out_fraction * cfg.n_users)))
    held_out_users = set(range(cfg.n_users - n_held_out, cfg.n_users))
    train_rows = [r for r in rows if r["user"] not in held_out_users]
    test_rows = [r for r in rows if r["user"] in held_out_users]

    gpr = stats.gpr_fit(
        [r["ar_mode"] for r in train_rows],
        [r["physical_mode"] for r in train_rows],
        stats.GprConfig(normalize_y=True, noise_variance=1e-4),
    )
    x_test = np.array([r["ar_mode"] for r in test_rows])
    y_test = np.array([r["physical_mode"] for r in test_rows])
    pred, _ = stats.gpr_predict(gpr, x_test)

    gpr_err = np.abs(pred - y_test)
    naive_err = np.abs(x_test - y_test)
    slope = float(np.polyfit(x_test, pred, 1)[0]) if len(x_test) > 1 else float("nan")

    per_held_out = []
    for u in sorted(held_out_users):
        mask = np.array([r["user"] == u for r in test_rows])
        per_held_out.append({
            "user": u,
            "gpr_mae": float(gpr_err[mask].mean()),
            "naive_mae": float(naive_err[mask].mean()),
        })

    return {
        "per_angle_rows": rows,
        "per_held_out_user": per_held_out,
        "gpr_mae": float(gpr_err.mean()),
        "naive_mae": float(naive_err.mean()),
        "identity_slope": slope,
        "outliers_planted": planted_total,
        "outliers_flagged": planted_flagged,
        "outlier_recall": planted_flagged / planted_total if planted_total else 1.0,
        "config": asdict(cfg),
    }
