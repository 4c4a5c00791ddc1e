"""
Schemas for files produced outside oms: the per-view sidecar json written next to each pair of depth/relevancy
grids, and the synthetic scene description rendered by `oms render-synthetic`.
"""
from typing import List, Optional

from pydantic import BaseModel, confloat, conint, conlist, constr

from .. import config, models

FILE_SAFE_ID = r'^[A-Za-z0-9_.-]+$'


# ---- view files ----
class ViewFile(BaseModel):
    """view_<id>.json; the grids live in depth_<id>.f32 and relevancy_<id>.f32 (row-major little-endian float32)."""
    intrinsics: models.CameraIntrinsics
    pose: conlist(float, min_items=16, max_items=16)  # world-from-camera, row-major
    label: constr(min_length=1)
    timestamp: float
    pair: Optional[str] = None  # another view of this observation to subtract relevancy against


# ---- synthetic scenes ----
class SceneCamera(BaseModel):
    view_id: constr(regex=FILE_SAFE_ID)
    intrinsics: models.CameraIntrinsics
    pose: conlist(float, min_items=16, max_items=16)
    noise_level: confloat(ge=0) = 0.0
    noise_seed: conint(ge=0) = config.DEFAULT_SEED
    pair: Optional[str] = None


class SceneObservation(BaseModel):
    name: constr(regex=FILE_SAFE_ID)
    timestamp: float
    spheres: List[models.SyntheticSphere]
    cameras: conlist(SceneCamera, min_items=1)


class SceneFile(BaseModel):
    label: constr(min_length=1)  # the query every camera renders relevancy for
    ground_plane_z: Optional[float] = 0.0
    observations: conlist(SceneObservation, min_items=1)
