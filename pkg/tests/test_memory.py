import numpy as np
import pytest

from oms import errors, gmm, memory, schemas
from oms.models import EmConfig, ObservationRecord

POINTS = np.array([[0.0, 0.0, 0.9], [0.1, 0.05, 0.92], [2.0, 0.0, 0.9], [2.05, -0.1, 0.88], [0.0, 2.0, 0.45]])


def record(t, label="keys", location=(0.0, 0.0, 0.9), views=()) -> ObservationRecord:
    return ObservationRecord(label=label, location=location, timestamp=t, source_view_ids=list(views))


def small_model(k=2, seed=1):
    return gmm.fit_em(POINTS, k, EmConfig(restarts=2, seed=seed))


@pytest.fixture
def store(tmp_path):
    return memory.open_store(tmp_path / "observations.jsonl")


# ============= observations =============
class TestObservations:
    def test_query_in_timestamp_order(self, store):
        for t in (1.0, 2.0, 3.0):
            memory.append_observation(store, record(t))
        assert [r.timestamp for r in memory.query_observations(store, "keys")] == [1.0, 2.0, 3.0]

    def test_labels_are_separate(self, store):
        memory.append_observation(store, record(1.0, label="keys"))
        memory.append_observation(store, record(0.5, label="mug"))
        assert len(memory.query_observations(store, "keys")) == 1
        assert len(memory.query_observations(store, "mug")) == 1
        assert memory.query_observations(store, "wallet") == []
        assert memory.labels(store) == ["keys", "mug"]

    def test_out_of_order_rejected(self, store):
        memory.append_observation(store, record(5.0))
        with pytest.raises(errors.OrderingError):
            memory.append_observation(store, record(4.0))
        assert len(memory.read_records(store)) == 1

    def test_equal_timestamps_allowed(self, store):
        memory.append_observation(store, record(5.0))
        memory.append_observation(store, record(5.0, location=(1.0, 0.0, 0.0)))
        assert len(memory.query_observations(store, "keys")) == 2

    def test_ordering_survives_reopen(self, store):
        memory.append_observation(store, record(5.0))
        reopened = memory.open_store(store.path)
        with pytest.raises(errors.OrderingError):
            memory.append_observation(reopened, record(4.0))

    def test_half_open_range(self, store):
        for t in (1.0, 2.0, 3.0):
            memory.append_observation(store, record(t))
        assert [r.timestamp for r in memory.query_observations(store, "keys", (1.0, 3.0))] == [1.0, 2.0]
        assert [r.timestamp for r in memory.query_observations(store, "keys", (2.0, None))] == [2.0, 3.0]
        assert [r.timestamp for r in memory.query_observations(store, "keys", (None, 2.0))] == [1.0]

    def test_inverted_range(self, store):
        with pytest.raises(errors.InputError):
            memory.query_observations(store, "keys", (3.0, 1.0))

    def test_bit_exact_round_trip(self, store):
        location = (0.1 + 0.2, 1 / 3, -2.718281828459045e-7)
        memory.append_observation(store, record(1234567890.123456, location=location, views=["a", "b"]))
        (back,) = memory.query_observations(memory.open_store(store.path), "keys")
        assert back.location == location
        assert back.timestamp == 1234567890.123456
        assert back.source_view_ids == ["a", "b"]

    def test_missing_store_is_empty(self, tmp_path):
        store = memory.open_store(tmp_path / "nested" / "observations.jsonl")
        assert memory.read_records(store) == []
        assert store.directory.is_dir()

    def test_open_directory(self, tmp_path):
        store = memory.open_store(tmp_path)
        assert store.path == tmp_path / memory.OBSERVATIONS_FILE

    def test_corrupt_line_names_location(self, store):
        memory.append_observation(store, record(1.0))
        with open(store.path, 'a') as f:
            f.write('{"label": "keys", "x": 1.0}\n')
        with pytest.raises(errors.InputError, match=r"observations\.jsonl:2:"):
            memory.query_observations(memory.open_store(store.path), "keys")

    def test_interrupted_append_is_ignored(self, store):
        memory.append_observation(store, record(1.0))
        with open(store.path, 'a') as f:
            f.write('{"label": "keys", "loca')
        reopened = memory.open_store(store.path)
        assert [r.timestamp for r in memory.query_observations(reopened, "keys")] == [1.0]

    def test_append_after_interrupted_append(self, store):
        memory.append_observation(store, record(1.0))
        with open(store.path, 'a') as f:
            f.write('{"label": "keys", "loca')
        reopened = memory.open_store(store.path)
        memory.append_observation(reopened, record(2.0))
        assert [r.timestamp for r in memory.query_observations(reopened, "keys")] == [1.0, 2.0]
        assert store.path.read_text().count('\n') == 2

    def test_non_finite_location_rejected(self):
        with pytest.raises(ValueError):
            record(1.0, location=(float('nan'), 0.0, 0.0))


# ============= models =============
class TestModels:
    def test_save_and_load(self, store):
        model = small_model()
        memory.save_model(store, "keys", model)
        loaded = memory.load_model(memory.open_store(store.path), "keys")
        assert loaded.k == model.k
        assert loaded.log_likelihood == model.log_likelihood
        assert loaded.bic == model.bic
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.means, model.means)
        assert np.array_equal(loaded.covariances, model.covariances)
        assert loaded.config_echo == model.config_echo

    def test_missing_model(self, store):
        with pytest.raises(errors.ModelNotFound) as e:
            memory.load_model(store, "wallet")
        assert isinstance(e.value, KeyError)
        assert "wallet" in str(e.value)

    def test_save_evicts_cached_model(self, store):
        memory.save_model(store, "keys", small_model(k=1))
        assert memory.load_model(store, "keys").k == 1
        memory.save_model(store, "keys", small_model(k=2))
        assert memory.load_model(store, "keys").k == 2

    def test_loaded_model_is_cached(self, store):
        path = memory.save_model(store, "keys", small_model())
        memory.load_model(store, "keys")
        assert str(path.resolve()) in memory.model_cache

    def test_callers_cannot_change_the_cached_model(self, store):
        memory.save_model(store, "keys", small_model())
        first = memory.load_model(store, "keys")
        means = first.means.copy()
        first.components[0].mean += 100.0
        assert np.array_equal(memory.load_model(store, "keys").means, means)

    def test_rewrite_by_another_process_is_seen(self, store):
        memory.save_model(store, "keys", small_model(k=1))
        assert memory.load_model(store, "keys").k == 1
        # bypasses save_model, so nothing evicts the cached entry
        document = schemas.oms.ModelDocument.from_model("keys", small_model(k=2))
        store.model_path("keys").write_text(document.json(indent=2), encoding='utf-8')
        assert memory.load_model(store, "keys").k == 2

    def test_labels_with_separators(self, store):
        path = memory.save_model(store, "kitchen/keys", small_model(k=1))
        assert path.parent == store.directory
        assert memory.load_model(store, "kitchen/keys").k == 1

    def test_corrupt_model_file(self, tmp_path):
        path = tmp_path / "model_bad.json"
        path.write_text("{not json")
        with pytest.raises(errors.InputError):
            memory.read_model_file(path)

    def test_no_temporary_file_left(self, store):
        memory.save_model(store, "keys", small_model())
        assert sorted(p.name for p in store.directory.iterdir()) == ["model_keys.json"]
