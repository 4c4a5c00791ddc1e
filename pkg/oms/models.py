import enum
import logging
import math
from itertools import combinations
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, confloat, conint, conlist, constr, root_validator, validator

from . import config

ROTATION_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12
SUM_TOLERANCE = 1e-9
PRIOR_SUM_TOLERANCE = 1e-12
DEFAULT_HIT_RADIUS = 0.3  # meters
DEFAULT_TRAINING_SIZES = [3, 5, 10, 20, 50, 100]

log = logging.getLogger(__name__)

Point3 = Tuple[float, float, float]


class ArrayModel(BaseModel):
    class Config:
        arbitrary_types_allowed = True


def _finite_point(v):
    if not all(math.isfinite(c) for c in v):
        raise ValueError("coordinates must be finite")
    return v


# ==== geometry ====
class CameraIntrinsics(BaseModel):
    fx: confloat(gt=0)  # pixels
    fy: confloat(gt=0)
    cx: float
    cy: float
    width: conint(gt=0)
    height: conint(gt=0)

    @root_validator(skip_on_failure=True)
    def principal_point_in_image(cls, values):
        if not 0 <= values['cx'] < values['width']:
            raise ValueError(f"cx={values['cx']} is outside [0, {values['width']})")
        if not 0 <= values['cy'] < values['height']:
            raise ValueError(f"cy={values['cy']} is outside [0, {values['height']})")
        return values

    @property
    def shape(self) -> Tuple[int, int]:
        """(rows, columns) of an image taken with these intrinsics."""
        return self.height, self.width


class CameraPose(ArrayModel):
    """Rigid world-from-camera transform."""
    transform: np.ndarray

    @validator('transform', pre=True)
    def rigid_transform(cls, v):
        m = np.array(v, dtype=float)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix or 16 row-major numbers, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("transform must be finite")
        rotation = m[:3, :3]
        if not np.allclose(rotation.T @ rotation, np.eye(3), rtol=0, atol=ROTATION_TOLERANCE) \
                or abs(np.linalg.det(rotation) - 1) > ROTATION_TOLERANCE:
            raise ValueError("rotation block is not a proper rotation")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("last row must be (0, 0, 0, 1)")
        return m

    @classmethod
    def identity(cls) -> 'CameraPose':
        return cls(transform=np.eye(4))

    @classmethod
    def from_rotation_translation(cls, rotation, translation) -> 'CameraPose':
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(transform=m)

    @property
    def rotation(self) -> np.ndarray:
        return self.transform[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.transform[:3, 3]


class CameraView(ArrayModel):
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: np.ndarray  # meters, 0 = no reading
    relevancy: np.ndarray
    label: str
    view_id: str
    timestamp: float = 0.0

    @validator('depth', 'relevancy', pre=True)
    def as_grid(cls, v):
        grid = np.array(v, dtype=float)
        if grid.ndim != 2:
            raise ValueError(f"expected an HxW grid, got {grid.ndim} dimensions")
        return grid

    @validator('depth', 'relevancy')
    def finite_and_non_negative(cls, v, field):
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"{field.name} values must be finite and >= 0")
        return v

    @root_validator(skip_on_failure=True)
    def grids_match_intrinsics(cls, values):
        shape = values['intrinsics'].shape
        for name in ('depth', 'relevancy'):
            if values[name].shape != shape:
                raise ValueError(f"{name} grid is {values[name].shape}, intrinsics say {shape}")
        return values


class RelevancyPointCloud(ArrayModel):
    points: np.ndarray  # (n, 3) world frame, meters
    weights: np.ndarray  # (n,)
    label: str = ""
    source_view_ids: List[str] = []

    @validator('points', pre=True)
    def as_points(cls, v):
        points = np.array(v, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise ValueError("point coordinates must be finite")
        return points

    @validator('weights', pre=True)
    def as_weights(cls, v):
        weights = np.array(v, dtype=float).reshape(-1)
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and >= 0")
        return weights

    @root_validator(skip_on_failure=True)
    def one_weight_per_point(cls, values):
        if len(values['points']) != len(values['weights']):
            raise ValueError(f"{len(values['points'])} points but {len(values['weights'])} weights")
        return values

    @classmethod
    def empty(cls, label: str = "") -> 'RelevancyPointCloud':
        return cls(points=np.empty((0, 3)), weights=np.empty(0), label=label)

    def __len__(self):
        return len(self.weights)


class SyntheticSphere(BaseModel):
    label: constr(min_length=1)
    center: Point3
    radius: confloat(gt=0)


class SyntheticScene(BaseModel):
    spheres: List[SyntheticSphere]
    ground_plane_z: Optional[float] = 0.0  # None renders no plane


# ==== gmm ====
class BicDefinition(str, enum.Enum):
    COMPONENT_COUNT = "component_count"  # k = number of Gaussians
    FREE_PARAMETER_COUNT = "free_parameter_count"  # k = K*(3 + 6) + (K - 1)

    @classmethod
    def _missing_(cls, value):
        if value == "paper_literal":
            return cls.COMPONENT_COUNT
        return None


class EmConfig(BaseModel):
    max_iterations: conint(ge=1) = 200
    tolerance: confloat(gt=0) = 1e-6  # absolute change in log-likelihood
    restarts: conint(ge=1) = 10
    covariance_floor: confloat(gt=0) = 1e-6  # m^2, added to every covariance
    seed: conint(ge=0) = config.DEFAULT_SEED
    bic_definition: BicDefinition = BicDefinition.COMPONENT_COUNT


class GaussianComponent(ArrayModel):
    weight: confloat(gt=0, le=1)
    mean: np.ndarray  # (3,)
    covariance: np.ndarray  # (3, 3)

    @validator('mean', pre=True)
    def as_mean(cls, v):
        mean = np.array(v, dtype=float)
        if mean.shape != (3,) or not np.all(np.isfinite(mean)):
            raise ValueError("mean must be 3 finite numbers")
        return mean

    @validator('covariance', pre=True)
    def spd_covariance(cls, v):
        cov = np.array(v, dtype=float)
        if cov.shape == (9,):
            cov = cov.reshape(3, 3)
        if cov.shape != (3, 3) or not np.all(np.isfinite(cov)):
            raise ValueError("covariance must be a finite 3x3 matrix")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOLERANCE:
            raise ValueError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise ValueError("covariance is not positive definite")
        return cov


class GmmModel(BaseModel):
    components: conlist(GaussianComponent, min_items=1)
    log_likelihood: float
    bic: float
    bic_definition: BicDefinition = BicDefinition.COMPONENT_COUNT
    n_train: conint(ge=1)
    iterations: conint(ge=0) = 0
    converged: bool = True
    label: str = ""
    config_echo: Optional[EmConfig] = None
    # per-iteration log-likelihood of the winning restart; not persisted
    trace: List[float] = []

    @root_validator(skip_on_failure=True)
    def weights_sum_to_one(cls, values):
        total = math.fsum(c.weight for c in values['components'])
        if abs(total - 1) > SUM_TOLERANCE:
            raise ValueError(f"component weights sum to {total}")
        return values

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.stack([c.covariance for c in self.components])


class ResponsibilityMatrix(ArrayModel):
    """values[i, k]: posterior probability that point i came from component k."""
    values: np.ndarray

    @validator('values', pre=True)
    def stochastic_rows(cls, v):
        values = np.array(v, dtype=float)
        if values.ndim != 2:
            raise ValueError("responsibilities must be an n x K grid")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("responsibilities must lie in [0, 1]")
        if np.any(np.abs(values.sum(axis=1) - 1) > SUM_TOLERANCE):
            raise ValueError("responsibility rows must sum to 1")
        return values


# ==== memory ====
class ObservationRecord(BaseModel):
    label: constr(min_length=1)
    location: Point3  # meters
    timestamp: float  # seconds since epoch
    source_view_ids: List[str] = []

    _finite_location = validator('location', allow_reuse=True)(_finite_point)

    @validator('timestamp')
    def finite_timestamp(cls, v):
        if not math.isfinite(v):
            raise ValueError("timestamp must be finite")
        return v


# ==== search ====
class SearchStrategy(str, enum.Enum):
    MODE_RANKED = "mode_ranked"
    GMM_SAMPLE = "gmm_sample"
    RANDOM_BASELINE = "random_baseline"


class SearchPlan(ArrayModel):
    candidates: np.ndarray  # (m, 3), visit in order
    strategy: SearchStrategy
    seed: Optional[int] = None

    @validator('candidates', pre=True)
    def finite_candidates(cls, v):
        candidates = np.array(v, dtype=float).reshape(-1, 3)
        if len(candidates) == 0:
            raise ValueError("a search plan needs at least one candidate")
        if not np.all(np.isfinite(candidates)):
            raise ValueError("candidate coordinates must be finite")
        return candidates

    @property
    def first(self) -> np.ndarray:
        return self.candidates[0]


class HitCriterion(BaseModel):
    radius: confloat(gt=0) = DEFAULT_HIT_RADIUS


# ==== sim ====
class Cluster(BaseModel):
    center: Point3
    prior: confloat(ge=0, le=1)

    _finite_center = validator('center', allow_reuse=True)(_finite_point)


class GroundTruthDistribution(BaseModel):
    clusters: conlist(Cluster, min_items=1)
    noise_sigma: confloat(ge=0) = 0.1  # meters, per axis

    @root_validator(skip_on_failure=True)
    def priors_sum_to_one(cls, values):
        clusters = values['clusters']
        total = math.fsum(c.prior for c in clusters)
        if abs(total - 1) > PRIOR_SUM_TOLERANCE:
            raise ValueError(f"cluster priors sum to {total}")
        for a, b in combinations(range(len(clusters)), 2):
            if math.dist(clusters[a].center, clusters[b].center) <= 2 * DEFAULT_HIT_RADIUS:
                log.warning(f"clusters {a} and {b} are closer than {2 * DEFAULT_HIT_RADIUS} m "
                            f"and may not be resolvable")
        return values

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.clusters], dtype=float)

    @property
    def priors(self) -> np.ndarray:
        return np.array([c.prior for c in self.clusters], dtype=float)


class ExperimentConfig(BaseModel):
    distribution: GroundTruthDistribution
    training_sizes: conlist(conint(ge=1), min_items=1) = DEFAULT_TRAINING_SIZES
    n_trials: conint(ge=1) = 100_000
    hit_radius: confloat(gt=0) = DEFAULT_HIT_RADIUS
    em: EmConfig = EmConfig()
    strategy: SearchStrategy = SearchStrategy.MODE_RANKED
    seed: conint(ge=0) = config.DEFAULT_SEED
    # None selects K by BIC over [k_min, k_max]
    fixed_k: Optional[conint(ge=1)] = None
    k_min: conint(ge=1) = 1
    k_max: conint(ge=1) = 6

    @validator('strategy')
    def searchable_strategy(cls, v):
        if v is SearchStrategy.RANDOM_BASELINE:
            raise ValueError("the random baseline is always run alongside; pick mode_ranked or gmm_sample")
        return v

    @root_validator(skip_on_failure=True)
    def ordered_k_range(cls, values):
        if values['k_min'] > values['k_max']:
            raise ValueError(f"k_min={values['k_min']} exceeds k_max={values['k_max']}")
        return values


class TrialOutcome(NamedTuple):
    training_size: int
    trial_index: int
    gmm_hit: bool
    baseline_hit: bool


class AccuracyPoint(BaseModel):
    training_size: int
    gmm_accuracy: confloat(ge=0, le=1)
    baseline_accuracy: confloat(ge=0, le=1)
    gmm_ci: float  # Wilson 95% half-width
    baseline_ci: float
    n_trials: int
    selected_k: int


class AccuracyCurve(BaseModel):
    points: List[AccuracyPoint] = []
    skipped_sizes: List[int] = []
