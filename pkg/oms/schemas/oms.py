from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, conint, conlist, constr

from .. import config, models


# ==== store ====
class ObservationLine(BaseModel):
    """One line of observations.jsonl."""
    label: str
    x: float
    y: float
    z: float
    t: float
    views: List[str] = []

    @classmethod
    def from_record(cls, record: models.ObservationRecord) -> 'ObservationLine':
        x, y, z = record.location
        return cls(label=record.label, x=x, y=y, z=z, t=record.timestamp, views=record.source_view_ids)

    def to_record(self) -> models.ObservationRecord:
        return models.ObservationRecord(
            label=self.label,
            location=(self.x, self.y, self.z),
            timestamp=self.t,
            source_view_ids=self.views
        )


class ComponentDocument(BaseModel):
    weight: float
    mean: conlist(float, min_items=3, max_items=3)
    cov: conlist(float, min_items=9, max_items=9)  # row-major


class ModelDocument(BaseModel):
    """model_<label>.json. Floats are written in shortest round-trip form, so reading back is bit-exact."""
    label: str
    n_train: int
    components: List[ComponentDocument]
    log_likelihood: float
    bic: float
    bic_definition: models.BicDefinition
    iterations: int
    converged: bool
    config_echo: Optional[models.EmConfig] = None

    @classmethod
    def from_model(cls, label: str, model: models.GmmModel) -> 'ModelDocument':
        return cls(
            label=label,
            n_train=model.n_train,
            components=[ComponentDocument(weight=float(c.weight), mean=c.mean.tolist(),
                                          cov=c.covariance.reshape(-1).tolist())
                        for c in model.components],
            log_likelihood=model.log_likelihood,
            bic=model.bic,
            bic_definition=model.bic_definition,
            iterations=model.iterations,
            converged=model.converged,
            config_echo=model.config_echo
        )

    def to_model(self) -> models.GmmModel:
        return models.GmmModel(
            components=[models.GaussianComponent(weight=c.weight, mean=c.mean, covariance=c.cov)
                        for c in self.components],
            log_likelihood=self.log_likelihood,
            bic=self.bic,
            bic_definition=self.bic_definition,
            n_train=self.n_train,
            iterations=self.iterations,
            converged=self.converged,
            label=self.label,
            config_echo=self.config_echo
        )


# ==== http ====
class ObservationIn(BaseModel):
    label: constr(min_length=1)
    location: Tuple[float, float, float]
    timestamp: float
    views: List[str] = []

    def to_record(self) -> models.ObservationRecord:
        return models.ObservationRecord(label=self.label, location=self.location, timestamp=self.timestamp,
                                        source_view_ids=self.views)


class ObservationOut(ObservationIn):
    @classmethod
    def from_record(cls, record: models.ObservationRecord) -> 'ObservationOut':
        return cls(label=record.label, location=record.location, timestamp=record.timestamp,
                   views=record.source_view_ids)


class FitRequest(BaseModel):
    k_min: conint(ge=1) = 1
    k_max: conint(ge=1) = 6
    restarts: conint(ge=1) = 10
    seed: conint(ge=0) = config.DEFAULT_SEED
    bic_definition: models.BicDefinition = models.BicDefinition.COMPONENT_COUNT


class ModelSummary(BaseModel):
    label: str
    k: int
    n_train: int
    log_likelihood: float
    bic: float
    weights: List[float]
    means: List[Tuple[float, float, float]]

    @classmethod
    def from_model(cls, label: str, model: models.GmmModel) -> 'ModelSummary':
        return cls(
            label=label,
            k=model.k,
            n_train=model.n_train,
            log_likelihood=model.log_likelihood,
            bic=model.bic,
            weights=model.weights.tolist(),
            means=[tuple(m) for m in model.means.tolist()]
        )


class PlanOut(BaseModel):
    label: str
    strategy: models.SearchStrategy
    seed: Optional[int]
    candidates: List[Tuple[float, float, float]]

    @classmethod
    def from_plan(cls, label: str, plan: models.SearchPlan) -> 'PlanOut':
        return cls(label=label, strategy=plan.strategy, seed=plan.seed,
                   candidates=[tuple(c) for c in np.asarray(plan.candidates).tolist()])
