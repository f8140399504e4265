import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from proxilab import data
from proxilab.service import SessionManager, SessionStore, create_app

ROOM = {"vertices": [[0, 0], [6, 0], [6, 5], [0, 5]]}
L_ROOM = {"vertices": [[0, 0], [6, 0], [6, 5], [3, 5], [3, 3], [0, 3]]}
POSE = {"x": 3.0, "y": 2.5, "heading": 0.0}
L_POSE = {"x": 2.0, "y": 1.5, "heading": 0.0}


@pytest.fixture(scope="module")
def dialogue():
    return json.loads(data.dialogue_path().read_text())


@pytest.fixture()
def client(quick_model, fixture_split, dialogue, tmp_path):
    app = create_app(quick_model, dialogue, tmp_path / "store",
                     training_sample=fixture_split.validation)
    return TestClient(app)


def _create(client, strategy="random", seed=3, room=ROOM, pose=POSE, session_id=None):
    body = {"room": room, "user_pose": pose, "strategy": strategy, "seed": seed}
    if session_id:
        body["session_id"] = session_id
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()["session_id"]


def _run_approach(client, sid, stop=1.0, answer=0):
    nxt = client.get(f"/sessions/{sid}/next")
    assert nxt.status_code == 200, nxt.text
    payload = nxt.json()
    resp = client.post(f"/sessions/{sid}/stop", json={
        "approach_id": payload["approach_id"],
        "stop_distance": stop,
        "answer_index": answer,
    })
    assert resp.status_code == 200, resp.text
    return payload, resp.json()


class TestSessionLifecycle:
    def test_create_and_duplicate(self, client):
        sid = _create(client, session_id="fixed-id")
        assert sid == "fixed-id"
        resp = client.post("/sessions", json={
            "room": ROOM, "user_pose": POSE, "strategy": "random",
            "seed": 1, "session_id": "fixed-id"})
        assert resp.status_code == 409

    def test_invalid_geometry(self, client):
        resp = client.post("/sessions", json={
            "room": {"vertices": [[0, 0], [1, 0]]}, "user_pose": POSE,
            "strategy": "random", "seed": 0})
        assert resp.status_code == 400
        resp = client.post("/sessions", json={
            "room": ROOM, "user_pose": {"x": 99, "y": 99, "heading": 0},
            "strategy": "random", "seed": 0})
        assert resp.status_code == 400
        assert set(resp.json()) == {"code", "message"}

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/next").status_code == 404
        assert client.get("/sessions/nope/export").status_code == 404

    def test_atl_session_logs_pool_event(self, client, tmp_path):
        sid = _create(client, strategy="atl", seed=5)
        export = client.get(f"/sessions/{sid}/export").json()
        kinds = [e["event"] for e in export["events"]]
        assert kinds[0] == "session_created"
        assert "pool_generated" in kinds


class TestStateMachine:
    def test_double_next_409(self, client):
        sid = _create(client)
        assert client.get(f"/sessions/{sid}/next").status_code == 200
        assert client.get(f"/sessions/{sid}/next").status_code == 409

    def test_stop_without_next_409(self, client):
        sid = _create(client)
        resp = client.post(f"/sessions/{sid}/stop", json={
            "approach_id": "a0000", "stop_distance": 1.0, "answer_index": 0})
        assert resp.status_code == 409

    def test_stale_approach_id_409(self, client):
        sid = _create(client)
        client.get(f"/sessions/{sid}/next")
        resp = client.post(f"/sessions/{sid}/stop", json={
            "approach_id": "bogus", "stop_distance": 1.0, "answer_index": 0})
        assert resp.status_code == 409

    def test_range_validation_400(self, client):
        sid = _create(client)
        payload = client.get(f"/sessions/{sid}/next").json()
        for bad_stop in (0.0, -1.0, payload["start_distance"] + 0.5):
            resp = client.post(f"/sessions/{sid}/stop", json={
                "approach_id": payload["approach_id"],
                "stop_distance": bad_stop, "answer_index": 0})
            assert resp.status_code == 400
        resp = client.post(f"/sessions/{sid}/stop", json={
            "approach_id": payload["approach_id"], "stop_distance": 1.0, "answer_index": 2})
        assert resp.status_code == 400

    def test_next_allowed_after_stop(self, client):
        sid = _create(client)
        _run_approach(client, sid)
        assert client.get(f"/sessions/{sid}/next").status_code == 200

    def test_out_of_order_calls_do_not_corrupt(self, client):
        sid = _create(client)
        _run_approach(client, sid, stop=1.2)
        # stale stop after completion, double next while pending
        assert client.post(f"/sessions/{sid}/stop", json={
            "approach_id": "a0000", "stop_distance": 1.0, "answer_index": 0}).status_code == 409
        pending = client.get(f"/sessions/{sid}/next").json()
        assert client.get(f"/sessions/{sid}/next").status_code == 409
        assert pending["approach_id"] == "a0001"
        resp = client.post(f"/sessions/{sid}/stop", json={
            "approach_id": pending["approach_id"], "stop_distance": 0.9, "answer_index": 0})
        assert resp.status_code == 200
        export = client.get(f"/sessions/{sid}/export").json()
        stops = [e for e in export["events"] if e["event"] == "approach_stopped"]
        assert len(stops) == 2


class TestDialogue:
    def test_responses_match_choice(self, client, dialogue):
        sid = _create(client)
        payload, result = _run_approach(client, sid, answer=1)
        assert result["robot_response"] == payload["dialogue"]["responses"][1]
        served = next(d for d in dialogue if d["object"] == payload["dialogue"]["object"])
        assert result["robot_response"] == served["responses"][1]

    def test_cursor_cycles(self, quick_model, fixture_split, tmp_path):
        short_dialogue = json.loads(data.dialogue_path().read_text())[:3]
        app = create_app(quick_model, short_dialogue, tmp_path / "store2",
                         training_sample=fixture_split.validation)
        client = TestClient(app)
        sid = _create(client)
        seen = []
        for _ in range(4):
            payload, _ = _run_approach(client, sid)
            seen.append(payload["dialogue"]["object"])
        assert seen[3] == seen[0]
        assert len(set(seen[:3])) == 3


class TestFineTune:
    def test_no_stops_409(self, client):
        sid = _create(client)
        assert client.post(f"/sessions/{sid}/finetune").status_code == 409

    def test_improves_on_consistent_user(self, client):
        sid = _create(client, strategy="random", seed=8)
        for _ in range(6):
            payload = client.get(f"/sessions/{sid}/next").json()
            client.post(f"/sessions/{sid}/stop", json={
                "approach_id": payload["approach_id"],
                "stop_distance": 1.0, "answer_index": 0})
        result = client.post(f"/sessions/{sid}/finetune").json()
        assert result["post_mae"] < result["pre_mae"]

    def test_idempotent_without_new_stops(self, client):
        sid = _create(client)
        _run_approach(client, sid)
        first = client.post(f"/sessions/{sid}/finetune").json()
        second = client.post(f"/sessions/{sid}/finetune").json()
        assert first == second


class TestHeatmap:
    def test_values_in_range_and_nulls_outside(self, client):
        sid = _create(client, room=L_ROOM, pose=L_POSE)
        resp = client.get(f"/sessions/{sid}/heatmap?resolution=24")
        assert resp.status_code == 200
        cells = resp.json()["cells"]
        values = [v for row in cells for v in row if v is not None]
        nulls = sum(1 for row in cells for v in row if v is None)
        assert all(0.0 <= v <= 100.0 for v in values)
        assert nulls > 0  # the notch of the L-shaped room

    def test_resolution_validation(self, client):
        sid = _create(client)
        assert client.get(f"/sessions/{sid}/heatmap?resolution=4").status_code == 400
        assert client.get(f"/sessions/{sid}/heatmap?resolution=500").status_code == 400

    def test_fine_tune_changes_near_field(self, client):
        sid = _create(client, strategy="random", seed=4)
        base = client.get(f"/sessions/{sid}/heatmap?resolution=32").json()
        for _ in range(6):
            payload = client.get(f"/sessions/{sid}/next").json()
            client.post(f"/sessions/{sid}/stop", json={
                "approach_id": payload["approach_id"],
                "stop_distance": min(1.6, payload["start_distance"]), "answer_index": 0})
        client.post(f"/sessions/{sid}/finetune")
        tuned = client.get(f"/sessions/{sid}/heatmap?resolution=32").json()
        assert tuned["model"] == "fine-tuned"
        base_cells = np.array([[np.nan if v is None else v for v in row] for row in base["cells"]])
        tuned_cells = np.array([[np.nan if v is None else v for v in row] for row in tuned["cells"]])
        # stops at 1.6 m mean everything closer is uncomfortable: the near field
        # around the user must rise relative to the base model
        xs = np.linspace(base["bbox"][0], base["bbox"][2], 32)
        ys = np.linspace(base["bbox"][1], base["bbox"][3], 32)
        gx, gy = np.meshgrid(xs, ys)
        near = (np.hypot(gx - POSE["x"], gy - POSE["y"]) < 1.2) & ~np.isnan(base_cells)
        assert np.nanmean(tuned_cells[near] - base_cells[near]) > 0.0


class TestPersistenceAndReplay:
    def test_restart_recovers_state(self, quick_model, fixture_split, dialogue, tmp_path):
        store = tmp_path / "store"
        app_a = create_app(quick_model, dialogue, store,
                           training_sample=fixture_split.validation)
        client_a = TestClient(app_a)
        sid = _create(client_a, strategy="atl", seed=6)
        for i in range(4):
            _run_approach(client_a, sid, stop=1.0 + 0.1 * i)
        export_a = client_a.get(f"/sessions/{sid}/export").json()

        app_b = create_app(quick_model, dialogue, store,
                           training_sample=fixture_split.validation)
        client_b = TestClient(app_b)
        export_b = client_b.get(f"/sessions/{sid}/export").json()
        assert export_b == export_a
        # session continues seamlessly after the restart
        payload, _ = _run_approach(client_b, sid, stop=0.8)
        assert payload["approach_id"] == "a0004"

    def test_export_import_replays_identically(self, quick_model, fixture_split,
                                               dialogue, tmp_path):
        app_a = create_app(quick_model, dialogue, tmp_path / "store_a",
                           training_sample=fixture_split.validation)
        client_a = TestClient(app_a)
        sid = _create(client_a, strategy="atl", seed=9)
        for i in range(3):
            _run_approach(client_a, sid, stop=1.3 - 0.2 * i, answer=i % 2)
        client_a.post(f"/sessions/{sid}/finetune")
        export_a = client_a.get(f"/sessions/{sid}/export").json()

        app_b = create_app(quick_model, dialogue, tmp_path / "store_b",
                           training_sample=fixture_split.validation)
        client_b = TestClient(app_b)
        resp = client_b.post("/sessions/import", json=export_a)
        assert resp.status_code == 201
        export_b = client_b.get(f"/sessions/{sid}/export").json()
        assert export_b == export_a

        # the replayed session produces the same continuation
        next_a = client_a.get(f"/sessions/{sid}/next").json()
        next_b = client_b.get(f"/sessions/{sid}/next").json()
        assert next_a == next_b

    def test_import_duplicate_409(self, client):
        sid = _create(client)
        _run_approach(client, sid)
        export = client.get(f"/sessions/{sid}/export").json()
        assert client.post("/sessions/import", json=export).status_code == 409


def test_dialogue_shape_validated(quick_model, tmp_path):
    bad = [{"object": "Box", "question": "?", "answers": ["a"], "responses": ["r"]}]
    with pytest.raises(ValueError):
        SessionManager(quick_model, bad, SessionStore(tmp_path / "s"))
