import math

import numpy as np
import pytest

from proxilab import atl
from proxilab.geometry import OutsideRoom, Pose2D, RoomPolygon
from proxilab.socnav import LabeledExample

BIG_ROOM = RoomPolygon([(0, 0), (6, 0), (6, 5), (0, 5)])
CENTER = Pose2D(3.0, 2.5, 0.0)


@pytest.fixture(scope="module")
def grid():
    return atl.SamplerGrid()


@pytest.fixture(scope="module")
def pool(grid):
    return atl.generate_pool(BIG_ROOM, CENTER, grid)


class TestGrid:
    def test_defaults(self, grid):
        assert len(grid.angles) == 9
        assert grid.angles[0] == pytest.approx(-math.pi / 2)
        assert grid.angles[-1] == pytest.approx(math.pi / 2)
        assert len(grid.distances) == 18
        assert grid.distances[0] == pytest.approx(0.3)
        assert grid.distances[-1] == pytest.approx(2.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            atl.SamplerGrid(distances=(0.5, 0.4))
        with pytest.raises(ValueError):
            atl.SamplerGrid(angles=(4.0,))


class TestGeneratePool:
    def test_full_product_when_inside(self, pool, grid):
        assert len(pool) == len(grid.angles) * len(grid.distances)

    def test_distances_match_grid(self, pool):
        for cand in pool:
            assert cand.features.hr_dist == pytest.approx(cand.distance, abs=1e-9)

    def test_robot_faces_user(self, pool):
        # facing the user means the relative heading is bearing + pi, so the
        # two angle encodings are locked together
        for cand in pool[:20]:
            assert cand.features.o_sin == pytest.approx(-cand.features.hr_sin, abs=1e-9)
            assert cand.features.o_cos == pytest.approx(-cand.features.hr_cos, abs=1e-9)

    def test_wall_adjacent_user_drops_candidates(self, grid):
        facing_wall = Pose2D(0.4, 2.5, math.pi)
        pool = atl.generate_pool(BIG_ROOM, facing_wall, grid)
        assert 0 < len(pool) < len(grid.angles) * len(grid.distances)

    def test_user_outside(self, grid):
        with pytest.raises(OutsideRoom):
            atl.generate_pool(BIG_ROOM, Pose2D(-1, -1, 0), grid)


def _separable_sets(grid):
    """Application pool near the user, training examples far away."""
    near_grid = atl.SamplerGrid(distances=tuple(np.linspace(0.3, 1.0, 8)))
    far_grid = atl.SamplerGrid(distances=tuple(np.linspace(2.2, 4.0, 8)),
                               approach_length=4.0)
    app = atl.generate_pool(BIG_ROOM, CENTER, near_grid)
    far_pool = atl.generate_pool(RoomPolygon([(0, 0), (10, 0), (10, 9), (0, 9)]),
                                 Pose2D(5, 4.5, 0.0), far_grid)
    train = [LabeledExample(c.features, 50.0, source="synthetic") for c in far_pool]
    return app, train


class TestDiscriminator:
    def test_separable_domains(self, grid):
        app, train = _separable_sets(grid)
        model = atl.train_discriminator(app[::2], train[::2], seed=0)
        held_app = atl._feature_rows(app[1::2])
        held_train = atl._feature_rows(train[1::2])
        acc = (np.mean(model.predict(held_app) > 0.5)
               + np.mean(model.predict(held_train) < 0.5)) / 2.0
        assert acc >= 0.9

    def test_identical_domains_chance_level(self, pool):
        same = [LabeledExample(c.features, 10.0, source="synthetic") for c in pool]
        model = atl.train_discriminator(pool, same, seed=0)
        probs = model.predict(atl._feature_rows(pool))
        assert np.mean(probs) == pytest.approx(0.5, abs=0.1)

    def test_deterministic(self, pool):
        _, train = _separable_sets(atl.SamplerGrid())
        m1 = atl.train_discriminator(pool, train, seed=3)
        m2 = atl.train_discriminator(pool, train, seed=3)
        assert np.array_equal(m1.weights, m2.weights)

    def test_mlp_head(self, pool):
        app, train = _separable_sets(atl.SamplerGrid())
        model = atl.train_discriminator(app, train, seed=1, head="mlp")
        probs = model.predict(atl._feature_rows(app))
        assert np.all((probs >= 0) & (probs <= 1))
        m2 = atl.train_discriminator(app, train, seed=1, head="mlp")
        assert np.array_equal(model.w_hidden, m2.w_hidden)

    def test_empty_inputs(self, pool):
        with pytest.raises(ValueError):
            atl.train_discriminator([], pool)
        with pytest.raises(ValueError):
            atl.train_discriminator(pool, [])


class _BearingScorer:
    """Stub discriminator: confidence grows with |approach angle|."""

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.abs(np.arctan2(X[:, 1], X[:, 2])) / math.pi


class _ConstantScorer:
    def predict(self, X):
        return np.full(np.atleast_2d(X).shape[0], 0.5)


class TestSelectAngles:
    def test_extreme_angles_first(self, pool, grid):
        sel = atl.select_angles(_BearingScorer(), pool, 2, room=BIG_ROOM,
                                user_pose=CENTER, approach_length=grid.approach_length)
        assert sorted(np.degrees(sel.angles)) == pytest.approx([-90.0, 90.0])

    def test_tie_break_ascending(self, pool, grid):
        sel = atl.select_angles(_ConstantScorer(), pool, 3, room=BIG_ROOM,
                                user_pose=CENTER, approach_length=grid.approach_length)
        assert list(sel.angles) == sorted(grid.angles)[:3]

    def test_all_angles_exhaustive(self, pool, grid):
        sel = atl.select_angles(_BearingScorer(), pool, 9, room=BIG_ROOM,
                                user_pose=CENTER, approach_length=grid.approach_length)
        assert sorted(sel.angles) == pytest.approx(sorted(grid.angles))

    def test_k_out_of_range(self, pool, grid):
        with pytest.raises(ValueError):
            atl.select_angles(_BearingScorer(), pool, 10, room=BIG_ROOM,
                              user_pose=CENTER, approach_length=grid.approach_length)

    def test_permutation_invariant(self, pool, grid):
        rng = np.random.default_rng(0)
        shuffled = [pool[i] for i in rng.permutation(len(pool))]
        a = atl.select_angles(_BearingScorer(), pool, 3, room=BIG_ROOM,
                              user_pose=CENTER, approach_length=grid.approach_length)
        b = atl.select_angles(_BearingScorer(), shuffled, 3, room=BIG_ROOM,
                              user_pose=CENTER, approach_length=grid.approach_length)
        assert a.angles == b.angles

    def test_start_positions_inside_room(self, pool, grid):
        sel = atl.select_angles(_BearingScorer(), pool, 9, room=BIG_ROOM,
                                user_pose=CENTER, approach_length=grid.approach_length)
        for (x, y) in sel.start_positions:
            assert BIG_ROOM.contains_point(x, y)

    def test_start_shortened_near_wall(self, grid):
        near_wall = Pose2D(3.0, 0.6, -math.pi / 2)
        pool = atl.generate_pool(BIG_ROOM, near_wall, grid)
        sel = atl.select_angles(_ConstantScorer(), pool, 9, room=BIG_ROOM,
                                user_pose=near_wall, approach_length=grid.approach_length)
        assert all(BIG_ROOM.contains_point(x, y) for x, y in sel.start_positions)
        assert min(sel.start_distances) < grid.approach_length


class TestStopToLabels:
    def test_midpoint_is_fifty(self, grid):
        labels = atl.stop_to_labels(0.0, 1.0, BIG_ROOM, CENTER, grid)
        by_dist = {round(l.features.hr_dist, 6): l.discomfort for l in labels}
        assert by_dist[1.0] == pytest.approx(50.0)

    def test_logistic_closed_form(self, grid):
        # two meters beyond the stop: 100 / (1 + e^8)
        wide = atl.SamplerGrid(distances=(0.5, 2.5), approach_length=3.0)
        room = RoomPolygon([(0, 0), (10, 0), (10, 9), (0, 9)])
        labels = atl.stop_to_labels(0.0, 0.5, room, Pose2D(5, 4.5, 0), wide)
        far = [l for l in labels if abs(l.features.hr_dist - 2.5) < 1e-9][0]
        assert far.discomfort == pytest.approx(0.03353501304664781, abs=1e-9)

    def test_monotone_in_distance(self, grid):
        labels = atl.stop_to_labels(0.5, 1.2, BIG_ROOM, CENTER, grid)
        dists = [l.features.hr_dist for l in labels]
        discomforts = [l.discomfort for l in labels]
        order = np.argsort(dists)
        sorted_disc = np.array(discomforts)[order]
        assert np.all(np.diff(sorted_disc) <= 0)

    def test_stop_outside_segment(self, grid):
        with pytest.raises(ValueError):
            atl.stop_to_labels(0.0, 2.5, BIG_ROOM, CENTER, grid)
        with pytest.raises(ValueError):
            atl.stop_to_labels(0.0, 0.0, BIG_ROOM, CENTER, grid)


def _training_sample(grid):
    _, train = _separable_sets(grid)
    return train


class TestRunRound:
    def test_bookkeeping(self, grid):
        state = atl.init_session(BIG_ROOM, CENTER, grid, "atl",
                                 _training_sample(grid), seed=0, k=3)
        for _ in range(3):
            atl.run_round(state, lambda angle, start: 1.0)
        assert len(state.angle_log) == 9
        assert len(state.labeled) == 9 * len(grid.distances)
        assert state.rounds_completed == 3

    def test_random_strategy_reproducible(self, grid):
        logs = []
        for _ in range(2):
            state = atl.init_session(BIG_ROOM, CENTER, grid, "random", [], seed=12, k=3)
            for _ in range(2):
                atl.run_round(state, lambda angle, start: 0.8)
            logs.append(tuple(state.angle_log))
        assert logs[0] == logs[1]

    def test_selection_changes_with_drifting_user(self, grid):
        state = atl.init_session(BIG_ROOM, CENTER, grid, "atl",
                                 _training_sample(grid), seed=0, k=3,
                                 discriminator_head="mlp")
        stops = iter([1.8, 1.7, 1.6, 1.1, 1.0, 0.9, 0.5, 0.45, 0.4])
        for _ in range(3):
            atl.run_round(state, lambda angle, start: next(stops))
        rounds = [tuple(state.angle_log[i * 3:(i + 1) * 3]) for i in range(3)]
        assert len(set(rounds)) > 1

    def test_provider_failure_wrapped(self, grid):
        state = atl.init_session(BIG_ROOM, CENTER, grid, "random", [], seed=1, k=2)

        def bad_provider(angle, start):
            raise RuntimeError("sensor died")

        with pytest.raises(RuntimeError, match="round 0"):
            atl.run_round(state, bad_provider)

    def test_events_logged(self, grid):
        state = atl.init_session(BIG_ROOM, CENTER, grid, "atl",
                                 _training_sample(grid), seed=0, k=2)
        atl.run_round(state, lambda angle, start: 1.0)
        kinds = [ev["event"] for ev in state.events]
        assert kinds[0] == "pool_generated"
        assert "angles_selected" in kinds
        assert kinds.count("stop_recorded") == 2
        assert kinds.count("discriminator_retrained") >= 2
