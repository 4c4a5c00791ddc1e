"""
Object memory: an append-only observations.jsonl log plus model_<label>.json files in the same directory.

Single writer, many readers. Each query reads the log once, so it sees a consistent snapshot. A record is committed
once its trailing newline is on disk: an unterminated last line (a crash mid-append) is ignored by readers and cut
off by the next append.
"""
import logging
import os
import pathlib
import threading
import urllib.parse
from typing import Dict, Iterator, List, Optional, Tuple

import cachetools
import pydantic

from . import config, errors, models, schemas

OBSERVATIONS_FILE = "observations.jsonl"

log = logging.getLogger(__name__)

# (mtime_ns, size) of the file each model was parsed from
FileStamp = Tuple[int, int]

# IMPORTANT: each save has to evict the entry it overwrites; writes from other processes are caught by the stamp
model_cache: cachetools.LRUCache[str, Tuple[FileStamp, models.GmmModel]] = \
    cachetools.LRUCache(config.MODEL_CACHE_SIZE)
_model_cache_lock = threading.Lock()


class ObjectStore:
    def __init__(self, path):
        self.path = pathlib.Path(path)
        self.directory = self.path.parent
        self._last_timestamps: Optional[Dict[str, float]] = None

    def model_path(self, label: str) -> pathlib.Path:
        return self.directory / f"model_{urllib.parse.quote(label, safe='')}.json"

    def __repr__(self):
        return f"ObjectStore({str(self.path)!r})"


def open_store(path) -> ObjectStore:
    """Opens (creating the directory if needed) the store whose log lives at *path*."""
    path = pathlib.Path(path)
    if path.is_dir():
        path = path / OBSERVATIONS_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    return ObjectStore(path)


def get_store():
    yield open_store(config.STORE_PATH)


# ==== observations ====
def append_observation(store: ObjectStore, record: models.ObservationRecord) -> ObjectStore:
    """Appends *record* and flushes it to disk before returning."""
    last = _last_timestamps(store).get(record.label)
    if last is not None and record.timestamp < last:
        raise errors.OrderingError(f"observation of {record.label!r} at t={record.timestamp} is older than the "
                                   f"last stored one (t={last})")
    line = schemas.oms.ObservationLine.from_record(record).json()
    _cut_torn_tail(store.path)
    with open(store.path, 'a', encoding='utf-8') as f:
        f.write(line + '\n')
        f.flush()
        os.fsync(f.fileno())
    store._last_timestamps[record.label] = record.timestamp
    return store


def query_observations(
        store: ObjectStore,
        label: str,
        time_range: Optional[Tuple[Optional[float], Optional[float]]] = None) -> List[models.ObservationRecord]:
    """
    Records of *label* with start <= timestamp < end, in timestamp order. Either bound may be None.
    """
    start, end = time_range if time_range is not None else (None, None)
    if start is not None and end is not None and start > end:
        raise errors.InputError(f"inverted time range [{start}, {end})")
    matches = [r for r in read_records(store)
               if r.label == label
               and (start is None or r.timestamp >= start)
               and (end is None or r.timestamp < end)]
    return sorted(matches, key=lambda r: r.timestamp)


def read_records(store: ObjectStore) -> List[models.ObservationRecord]:
    return list(_iter_records(store))


def labels(store: ObjectStore) -> List[str]:
    return sorted({r.label for r in _iter_records(store)})


# ==== models ====
def save_model(store: ObjectStore, label: str, model: models.GmmModel) -> pathlib.Path:
    path = store.model_path(label)
    write_model_file(path, label, model)
    return path


def load_model(store: ObjectStore, label: str) -> models.GmmModel:
    path = store.model_path(label)
    if not path.exists():
        raise errors.ModelNotFound(label)
    return read_model_file(path)


def write_model_file(path, label: str, model: models.GmmModel):
    path = pathlib.Path(path)
    document = schemas.oms.ModelDocument.from_model(label, model)
    tmp = path.with_name(path.name + '.tmp')
    tmp.write_text(document.json(indent=2), encoding='utf-8')
    os.replace(tmp, path)
    with _model_cache_lock:
        model_cache.pop(_cache_key(path), None)
    log.debug(f"wrote model for {label!r} (K={model.k}) to {path}")


def read_model_file(path) -> models.GmmModel:
    """Parses the model at *path*, or returns a copy of the cached one if the file is unchanged."""
    path = pathlib.Path(path)
    key = _cache_key(path)
    try:
        stamp = _file_stamp(path)
    except FileNotFoundError:
        raise errors.InputError(f"{path}: no such model file")
    with _model_cache_lock:
        cached = model_cache.get(key)
    if cached is not None and cached[0] == stamp:
        return cached[1].copy(deep=True)

    try:
        model = schemas.oms.ModelDocument.parse_file(path).to_model()
    except FileNotFoundError:
        raise errors.InputError(f"{path}: no such model file")
    except (pydantic.ValidationError, ValueError) as e:
        raise errors.InputError(f"{path}: not a valid model file ({e})")
    with _model_cache_lock:
        model_cache[key] = (stamp, model)
    return model.copy(deep=True)


# ==== utils ====
def _iter_records(store: ObjectStore) -> Iterator[models.ObservationRecord]:
    if not store.path.exists():
        return
    with open(store.path, encoding='utf-8') as f:
        lines = f.readlines()
    if lines and not lines[-1].endswith('\n'):
        log.warning(f"{store.path}:{len(lines)}: ignoring unterminated last line")
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield schemas.oms.ObservationLine.parse_raw(line).to_record()
        except (pydantic.ValidationError, ValueError) as e:
            raise errors.InputError(f"{store.path}:{lineno}: corrupt observation record ({e})")


def _cut_torn_tail(path: pathlib.Path):
    """Truncates an unterminated last line left by an interrupted append."""
    if not path.exists() or path.stat().st_size == 0:
        return
    with open(path, 'rb+') as f:
        f.seek(-1, os.SEEK_END)
        if f.read(1) == b'\n':
            return
        f.seek(0)
        keep = f.read().rfind(b'\n') + 1
        log.warning(f"{path}: dropping {f.tell() - keep} byte(s) of an interrupted append")
        f.truncate(keep)


def _last_timestamps(store: ObjectStore) -> Dict[str, float]:
    if store._last_timestamps is None:
        last = {}
        for record in _iter_records(store):
            last[record.label] = max(record.timestamp, last.get(record.label, record.timestamp))
        store._last_timestamps = last
    return store._last_timestamps


def _file_stamp(path: pathlib.Path) -> FileStamp:
    st = path.stat()
    return st.st_mtime_ns, st.st_size


def _cache_key(path: pathlib.Path) -> str:
    return str(path.resolve())
