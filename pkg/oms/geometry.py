"""
Depth + relevancy views to world-frame relevancy point clouds.

Conventions: camera frame is +x right, +y down, +z forward; poses are world-from-camera; pixel (u, v) is column u,
row v; a depth of 0 means the pixel has no reading.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from . import errors
from .models import CameraIntrinsics, CameraPose, CameraView, RelevancyPointCloud, SyntheticScene

DEFAULT_FLOOR_FRACTION = 0.5  # of the view's max relevancy
DEFAULT_TOP_QUANTILE = 0.05

log = logging.getLogger(__name__)


def unproject(view: CameraView, relevancy_floor: Optional[float] = None) -> RelevancyPointCloud:
    """
    Lifts every pixel with a depth reading and relevancy >= *relevancy_floor* into the world frame.
    If *relevancy_floor* is None, half of the view's max relevancy is used.
    """
    _check_grids(view)
    if relevancy_floor is None:
        relevancy_floor = DEFAULT_FLOOR_FRACTION * float(view.relevancy.max(initial=0.0))
    elif relevancy_floor < 0:
        raise errors.InputError(f"relevancy floor must be >= 0, got {relevancy_floor}")

    v, u = np.nonzero((view.depth > 0) & (view.relevancy >= relevancy_floor))
    d = view.depth[v, u]
    k = view.intrinsics
    camera_points = np.column_stack(((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d))
    world_points = camera_points @ view.pose.rotation.T + view.pose.translation
    log.debug(f"view {view.view_id}: {len(d)} of {view.depth.size} pixels kept (floor {relevancy_floor:.3g})")
    return RelevancyPointCloud(
        points=world_points,
        weights=view.relevancy[v, u],
        label=view.label,
        source_view_ids=[view.view_id]
    )


def project(points, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """
    Maps world points to (u, v, depth) rows; the inverse of unproject. Points at or behind the camera plane
    give non-finite pixel coordinates.
    """
    camera_points = (np.asarray(points, dtype=float).reshape(-1, 3) - pose.translation) @ pose.rotation
    z = camera_points[:, 2]
    with np.errstate(divide='ignore', invalid='ignore'):
        u = intrinsics.fx * camera_points[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * camera_points[:, 1] / z + intrinsics.cy
    return np.column_stack((u, v, z))


def subtract_relevancy(view_a: CameraView, view_b: CameraView) -> CameraView:
    """
    Pixelwise |a - b| of two views of the same scene, e.g. a receptacle opened and closed. Evidence highlighted in
    both views cancels out. Depth, pose and timestamp come from *view_a*.
    """
    if view_a.relevancy.shape != view_b.relevancy.shape or view_a.depth.shape != view_b.depth.shape:
        raise errors.InputError(
            f"cannot subtract {view_b.view_id} {view_b.relevancy.shape} from {view_a.view_id} "
            f"{view_a.relevancy.shape}: grid sizes differ")
    if view_a.intrinsics != view_b.intrinsics:
        raise errors.InputError(f"views {view_a.view_id} and {view_b.view_id} have different intrinsics")
    if view_a.label != view_b.label:
        raise errors.InputError(f"views {view_a.view_id} and {view_b.view_id} answer different queries "
                                f"({view_a.label!r} vs {view_b.label!r})")
    return view_a.copy(update={
        'relevancy': np.abs(view_a.relevancy - view_b.relevancy),
        'view_id': f"{view_a.view_id}-{view_b.view_id}"
    })


def merge_clouds(clouds: Sequence[RelevancyPointCloud]) -> RelevancyPointCloud:
    """Concatenates clouds of one label, keeping input order. Empty clouds merge away whatever their label."""
    if not clouds:
        raise errors.InputError("no clouds to merge")
    labels = sorted({c.label for c in clouds if len(c)}) or sorted({c.label for c in clouds})
    if len(labels) > 1:
        raise errors.InputError(f"cannot merge clouds of different labels: {labels}")
    view_ids = dict.fromkeys(view_id for c in clouds for view_id in c.source_view_ids)
    return RelevancyPointCloud(
        points=np.concatenate([c.points for c in clouds]),
        weights=np.concatenate([c.weights for c in clouds]),
        label=labels[0],
        source_view_ids=list(view_ids)
    )


def localize(cloud: RelevancyPointCloud, top_quantile: float = DEFAULT_TOP_QUANTILE) -> np.ndarray:
    """
    Returns the relevancy-weighted centroid of the points whose weight is at or above the (1 - *top_quantile*)
    weight quantile.
    """
    if len(cloud) == 0:
        raise errors.InputError(f"cannot localize {cloud.label!r}: the cloud is empty")
    if not 0 < top_quantile <= 1:
        raise errors.InputError(f"top_quantile must be in (0, 1], got {top_quantile}")
    if not np.any(cloud.weights > 0):
        raise errors.InputError(f"cannot localize {cloud.label!r}: every point has zero relevancy")

    threshold = np.quantile(cloud.weights, 1.0 - top_quantile)
    selected = cloud.weights >= threshold
    return np.average(cloud.points[selected], axis=0, weights=cloud.weights[selected])


# ==== synthetic views ====
def render_synthetic_view(
        scene: SyntheticScene,
        intrinsics: CameraIntrinsics,
        pose: CameraPose,
        query_label: str,
        noise_seed: int,
        noise_level: float = 0.0,
        view_id: str = "synthetic",
        timestamp: float = 0.0) -> CameraView:
    """
    Ray-casts *scene* into a view. Pixels whose nearest hit is a sphere labelled *query_label* get relevancy 1;
    uniform noise in [0, *noise_level*] seeded by *noise_seed* is added everywhere. Pixels that hit nothing get
    depth 0.
    """
    if noise_level < 0:
        raise errors.InputError(f"noise level must be >= 0, got {noise_level}")
    v, u = np.mgrid[0:intrinsics.height, 0:intrinsics.width]
    # rays scaled so the ray parameter is the camera-frame depth
    rays_camera = np.stack(((u - intrinsics.cx) / intrinsics.fx,
                            (v - intrinsics.cy) / intrinsics.fy,
                            np.ones(u.shape)), axis=-1)
    rays = rays_camera @ pose.rotation.T
    origin = pose.translation

    depth = np.full(u.shape, np.inf)
    on_target = np.zeros(u.shape, dtype=bool)
    ray_norm2 = np.sum(rays * rays, axis=-1)
    for sphere in scene.spheres:
        offset = origin - np.asarray(sphere.center)
        b = 2.0 * (rays @ offset)
        c = offset @ offset - sphere.radius ** 2
        disc = b * b - 4.0 * ray_norm2 * c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = (-b - root) / (2.0 * ray_norm2)
        far = (-b + root) / (2.0 * ray_norm2)
        hit = np.where(near > 0, near, far)  # far root when the camera sits inside the sphere
        closer = (disc >= 0) & (hit > 0) & (hit < depth)
        depth[closer] = hit[closer]
        on_target[closer] = sphere.label == query_label

    if scene.ground_plane_z is not None:
        with np.errstate(divide='ignore', invalid='ignore'):
            hit = (scene.ground_plane_z - origin[2]) / rays[..., 2]
        closer = np.isfinite(hit) & (hit > 0) & (hit < depth)
        depth[closer] = hit[closer]
        on_target[closer] = False

    depth[np.isinf(depth)] = 0.0
    relevancy = on_target.astype(float)
    if noise_level > 0:
        relevancy += np.random.default_rng(noise_seed).uniform(0.0, noise_level, size=relevancy.shape)
    return CameraView(
        intrinsics=intrinsics,
        pose=pose,
        depth=depth,
        relevancy=relevancy,
        label=query_label,
        view_id=view_id,
        timestamp=timestamp
    )


# ==== utils ====
def _check_grids(view: CameraView):
    shape = view.intrinsics.shape
    for name, grid in (('depth', view.depth), ('relevancy', view.relevancy)):
        if grid.shape != shape:
            raise errors.InputError(f"view {view.view_id}: {name} grid is {grid.shape}, intrinsics say {shape}")
