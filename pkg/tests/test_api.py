import json
import pathlib

import pytest
from fastapi.testclient import TestClient

from oms import memory
from oms.main import app

STATIC_DIR = pathlib.Path(__file__).parent / "static"
with open(STATIC_DIR / "observation.json") as f:
    OBSERVATION = json.load(f)
DAY = 86_400.0
SPOTS = [(0.0, 0.0, 0.9), (2.0, 0.0, 0.9), (0.0, 2.0, 0.45)]


@pytest.fixture
def client(tmp_path):
    store = memory.open_store(tmp_path / "observations.jsonl")
    app.dependency_overrides[memory.get_store] = lambda: store
    yield TestClient(app)
    app.dependency_overrides.clear()


def observe(client, t, location=None, label="keys"):
    return client.post("/observations", json={**OBSERVATION, "label": label, "timestamp": t,
                                              "location": location or OBSERVATION["location"]})


def observe_history(client, n=30):
    for i in range(n):
        x, y, z = SPOTS[i % 3]
        # small deterministic jitter around each spot
        jitter = ((i * 7) % 11 - 5) / 100
        assert observe(client, i * DAY, (x + jitter, y - jitter, z + jitter / 2)).status_code == 201


# ============= observations =============
class TestObservations:
    def test_append_and_list(self, client):
        response = observe(client, 10.0)
        assert response.status_code == 201
        assert response.json()["location"] == [0.0, 0.0, 0.9]
        observe(client, 20.0, (1.0, 1.0, 1.0))

        listed = client.get("/objects/keys/observations").json()
        assert [o["timestamp"] for o in listed] == [10.0, 20.0]

    def test_time_range_is_half_open(self, client):
        for t in (1.0, 2.0, 3.0):
            observe(client, t)
        listed = client.get("/objects/keys/observations", params={"start": 1.0, "end": 3.0}).json()
        assert [o["timestamp"] for o in listed] == [1.0, 2.0]

    def test_inverted_range(self, client):
        assert client.get("/objects/keys/observations", params={"start": 3.0, "end": 1.0}).status_code == 400

    def test_out_of_order(self, client):
        observe(client, 10.0)
        response = observe(client, 5.0)
        assert response.status_code == 400
        assert "older" in response.json()["detail"]

    def test_invalid_location(self, client):
        assert observe(client, 1.0, ("a", 0.0, 0.0)).status_code == 422


# ============= models =============
class TestModels:
    def test_no_model_yet(self, client):
        assert client.get("/objects/keys/model").status_code == 404
        assert client.get("/objects/keys/plan").status_code == 404

    def test_fit_without_observations(self, client):
        assert client.post("/objects/keys/fit", json={}).status_code == 404

    def test_fit_then_plan(self, client):
        observe_history(client)
        response = client.post("/objects/keys/fit", json={"k_max": 4, "restarts": 3,
                                                          "bic_definition": "free_parameter_count"})
        assert response.status_code == 200
        summary = response.json()
        assert summary["n_train"] == 30
        assert 1 <= summary["k"] <= 4
        assert client.get("/objects/keys/model").json() == summary

        plan = client.get("/objects/keys/plan", params={"n": 2}).json()
        assert plan["strategy"] == "mode_ranked"
        assert 1 <= len(plan["candidates"]) <= 2

        sampled = client.get("/objects/keys/plan", params={"strategy": "gmm_sample", "n": 4, "seed": 9}).json()
        assert len(sampled["candidates"]) == 4
        assert sampled["seed"] == 9

    def test_baseline_is_not_a_plan(self, client):
        observe_history(client, 6)
        client.post("/objects/keys/fit", json={"k_max": 2, "restarts": 2})
        assert client.get("/objects/keys/plan", params={"strategy": "random_baseline"}).status_code == 400

    def test_bad_k_range(self, client):
        observe_history(client, 3)
        assert client.post("/objects/keys/fit", json={"k_min": 5}).status_code == 400


def test_metrics_exposed(client):
    observe(client, 1.0)
    response = client.get("/metrics")
    assert response.status_code == 200
    assert "oms_observations_appended" in response.text
