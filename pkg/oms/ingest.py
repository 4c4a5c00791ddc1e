"""
View directories on disk: one subdirectory per observation, holding for every view <id>

    view_<id>.json       intrinsics, 16-number row-major pose, label, timestamp, optional pair
    depth_<id>.f32       H*W little-endian float32, row-major, meters (0 or non-finite = no reading)
    relevancy_<id>.f32   H*W little-endian float32, row-major

Ingesting a directory turns each observation into one ObservationRecord in the store.
"""
import logging
import pathlib
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pydantic

from . import errors, geometry, memory, schemas
from .models import CameraPose, CameraView, ObservationRecord, SyntheticScene

GRID_DTYPE = np.dtype('<f4')
VIEW_PREFIX = "view_"

log = logging.getLogger(__name__)


class IngestReport(NamedTuple):
    appended: List[ObservationRecord]
    failures: List[Tuple[str, str]]  # (observation, message)
    observations: int


# ==== files ====
def read_grid(path, shape: Tuple[int, int]) -> np.ndarray:
    path = pathlib.Path(path)
    try:
        raw = np.fromfile(path, dtype=GRID_DTYPE)
    except OSError as e:
        raise errors.InputError(f"{path}: {e.strerror or e}")
    expected = shape[0] * shape[1]
    if raw.size != expected:
        raise errors.InputError(f"{path}: {raw.size} values, but the view is {shape[1]}x{shape[0]} ({expected})")
    return raw.reshape(shape).astype(float)


def read_view(json_path) -> Tuple[CameraView, Optional[str]]:
    """Reads one view and its grids; returns (view, id of the view it is paired with)."""
    json_path = pathlib.Path(json_path)
    view_id = view_id_of(json_path)
    try:
        meta = schemas.views.ViewFile.parse_file(json_path)
    except (pydantic.ValidationError, ValueError) as e:
        raise errors.InputError(f"{json_path}: not a valid view file ({e})")
    shape = meta.intrinsics.shape
    depth = read_grid(json_path.with_name(f"depth_{view_id}.f32"), shape)
    relevancy = read_grid(json_path.with_name(f"relevancy_{view_id}.f32"), shape)
    depth[~np.isfinite(depth)] = 0.0
    try:
        view = CameraView(
            intrinsics=meta.intrinsics,
            pose=CameraPose(transform=meta.pose),
            depth=depth,
            relevancy=relevancy,
            label=meta.label,
            view_id=view_id,
            timestamp=meta.timestamp
        )
    except pydantic.ValidationError as e:
        raise errors.InputError(f"{json_path}: {e}")
    return view, meta.pair


def write_view(view: CameraView, directory, pair: Optional[str] = None) -> pathlib.Path:
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = schemas.views.ViewFile(
        intrinsics=view.intrinsics,
        pose=view.pose.transform.reshape(-1).tolist(),
        label=view.label,
        timestamp=view.timestamp,
        pair=pair
    )
    json_path = directory / f"{VIEW_PREFIX}{view.view_id}.json"
    json_path.write_text(meta.json(indent=2, exclude_none=True), encoding='utf-8')
    view.depth.astype(GRID_DTYPE).tofile(directory / f"depth_{view.view_id}.f32")
    view.relevancy.astype(GRID_DTYPE).tofile(directory / f"relevancy_{view.view_id}.f32")
    return json_path


def view_id_of(json_path: pathlib.Path) -> str:
    return json_path.stem[len(VIEW_PREFIX):]


def iter_observation_dirs(views_dir) -> List[pathlib.Path]:
    """Observation directories under *views_dir*, by name. A directory holding view files itself is one observation."""
    views_dir = pathlib.Path(views_dir)
    if not views_dir.is_dir():
        raise errors.InputError(f"{views_dir}: not a directory")
    if any(views_dir.glob(f"{VIEW_PREFIX}*.json")):
        return [views_dir]
    return sorted(p for p in views_dir.iterdir() if p.is_dir() and any(p.glob(f"{VIEW_PREFIX}*.json")))


# ==== pipeline ====
def localize_observation(
        directory,
        label: str,
        relevancy_floor: Optional[float] = None,
        top_quantile: float = geometry.DEFAULT_TOP_QUANTILE) -> Optional[ObservationRecord]:
    """
    Unprojects every view of *label* in *directory* (replacing a paired view by the difference of the pair), merges
    the clouds and localizes the object. Returns None if no view answers *label*.
    """
    directory = pathlib.Path(directory)
    views: Dict[str, CameraView] = {}
    pairs: Dict[str, str] = {}
    for json_path in sorted(directory.glob(f"{VIEW_PREFIX}*.json")):
        view, pair = read_view(json_path)
        if view.label != label:
            log.debug(f"{json_path}: view answers {view.label!r}, skipping")
            continue
        views[view.view_id] = view
        if pair is not None:
            pairs[view.view_id] = pair
    if not views:
        return None

    consumed = set(pairs.values())
    for view_id, other in pairs.items():
        if other not in views:
            raise errors.InputError(f"{directory}: view {view_id} is paired with {other}, which has no "
                                    f"{label!r} view here")
        if other in pairs:
            raise errors.InputError(f"{directory}: views {view_id} and {other} are both the first of a pair")
    clouds = []
    for view_id, view in views.items():
        if view_id in consumed:
            continue
        if view_id in pairs:
            view = geometry.subtract_relevancy(view, views[pairs[view_id]])
        clouds.append(geometry.unproject(view, relevancy_floor))

    cloud = geometry.merge_clouds(clouds)
    location = geometry.localize(cloud, top_quantile)
    return ObservationRecord(
        label=label,
        location=tuple(float(c) for c in location),
        timestamp=max(v.timestamp for v in views.values()),
        source_view_ids=list(views)
    )


def ingest_all(
        views_dir,
        label: str,
        store: memory.ObjectStore,
        relevancy_floor: Optional[float] = None,
        top_quantile: float = geometry.DEFAULT_TOP_QUANTILE) -> IngestReport:
    """
    Localizes every observation directory under *views_dir* and appends the records in timestamp order. An
    observation that cannot be read or localized is logged and reported, the others still go in.
    """
    directories = iter_observation_dirs(views_dir)
    if not directories:
        log.warning(f"{views_dir}: no observations found")

    located = []
    failures = []
    for directory in directories:
        try:
            record = localize_observation(directory, label, relevancy_floor, top_quantile)
        except (errors.InputError, errors.NumericError) as e:
            log.error(f"{directory.name}: {e}")
            failures.append((directory.name, str(e)))
            continue
        if record is None:
            log.info(f"{directory.name}: no views of {label!r}")
            continue
        located.append((directory.name, record))

    appended = []
    for name, record in sorted(located, key=lambda item: (item[1].timestamp, item[0])):
        try:
            memory.append_observation(store, record)
        except errors.OrderingError as e:
            log.error(f"{name}: {e}")
            failures.append((name, str(e)))
            continue
        log.info(f"{name}: {label!r} at ({record.location[0]:.3f}, {record.location[1]:.3f}, "
                 f"{record.location[2]:.3f}), t={record.timestamp}")
        appended.append(record)
    return IngestReport(appended=appended, failures=failures, observations=len(directories))


# ==== synthetic scenes ====
def load_scene(path) -> schemas.views.SceneFile:
    path = pathlib.Path(path)
    try:
        return schemas.views.SceneFile.parse_file(path)
    except FileNotFoundError:
        raise errors.InputError(f"{path}: no such scene file")
    except (pydantic.ValidationError, ValueError) as e:
        raise errors.InputError(f"{path}: not a valid scene file ({e})")


def render_scene(scene_file, out_dir) -> List[pathlib.Path]:
    """Renders every camera of every observation in *scene_file* into OUT_DIR/<observation name>/."""
    scene_file = load_scene(scene_file)
    out_dir = pathlib.Path(out_dir)
    written = []
    for observation in scene_file.observations:
        camera_ids = [c.view_id for c in observation.cameras]
        if len(set(camera_ids)) != len(camera_ids):
            raise errors.InputError(f"observation {observation.name}: duplicate camera ids")
        scene = SyntheticScene(spheres=observation.spheres, ground_plane_z=scene_file.ground_plane_z)
        directory = out_dir / observation.name
        for camera in observation.cameras:
            if camera.pair is not None and camera.pair not in camera_ids:
                raise errors.InputError(f"observation {observation.name}: camera {camera.view_id} is paired with "
                                        f"unknown camera {camera.pair}")
            view = geometry.render_synthetic_view(
                scene,
                camera.intrinsics,
                CameraPose(transform=camera.pose),
                scene_file.label,
                noise_seed=camera.noise_seed,
                noise_level=camera.noise_level,
                view_id=camera.view_id,
                timestamp=observation.timestamp
            )
            write_view(view, directory, pair=camera.pair)
        log.info(f"rendered {len(observation.cameras)} view(s) of {observation.name}")
        written.append(directory)
    return written
