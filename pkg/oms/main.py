import logging
import sys
from typing import List, Optional

import numpy as np
import sentry_sdk
from fastapi import Depends, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from sentry_sdk.integrations.asgi import SentryAsgiMiddleware

from . import config, errors, gmm, memory, metrics, schemas, search
from .models import EmConfig, SearchStrategy

log = logging.getLogger(__name__)
if 'debug' in sys.argv:
    # noinspection PyArgumentList
    logging.basicConfig(stream=sys.stdout, encoding='utf-8', level=logging.DEBUG)

app = FastAPI(title="oms")

# ==== Middleware ====
# CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)
# Sentry
if config.SENTRY_DSN is not None:
    sentry_sdk.init(dsn=config.SENTRY_DSN, environment=config.SENTRY_ENV)
    app.add_middleware(SentryAsgiMiddleware)
# Prometheus
metrics.register(app)


# ==== HTTP ====
@app.post("/observations", status_code=201, response_model=schemas.oms.ObservationOut)
def append_observation(observation: schemas.oms.ObservationIn, store: memory.ObjectStore = Depends(memory.get_store)):
    log.debug(f"Received observation: {observation.json()}")
    record = observation.to_record()
    try:
        memory.append_observation(store, record)
    except errors.OrderingError as e:
        raise HTTPException(400, str(e))
    metrics.observations_appended.inc()
    return schemas.oms.ObservationOut.from_record(record)


@app.get("/objects/{label}/observations", response_model=List[schemas.oms.ObservationOut])
def list_observations(
        label: str,
        start: Optional[float] = None,
        end: Optional[float] = None,
        store: memory.ObjectStore = Depends(memory.get_store)):
    try:
        records = memory.query_observations(store, label, (start, end))
    except errors.InputError as e:
        raise HTTPException(400, str(e))
    return [schemas.oms.ObservationOut.from_record(r) for r in records]


@app.post("/objects/{label}/fit", response_model=schemas.oms.ModelSummary)
def fit_model(
        label: str,
        request: schemas.oms.FitRequest = schemas.oms.FitRequest(),
        store: memory.ObjectStore = Depends(memory.get_store)):
    records = memory.query_observations(store, label)
    if not records:
        raise HTTPException(404, f"No observations of {label}")
    n = len(records)
    if request.k_min > min(request.k_max, n):
        raise HTTPException(400, f"k_min={request.k_min} exceeds k_max={request.k_max} or the {n} observation(s)")

    em_config = EmConfig(restarts=request.restarts, seed=request.seed, bic_definition=request.bic_definition)
    points = np.array([r.location for r in records])
    try:
        model = gmm.select_model(points, request.k_min, min(request.k_max, n), em_config, label=label)
    except errors.NumericError as e:
        raise HTTPException(422, f"Could not fit {label}: {e}")
    memory.save_model(store, label, model)
    metrics.model_fits.inc()
    return schemas.oms.ModelSummary.from_model(label, model)


@app.get("/objects/{label}/model", response_model=schemas.oms.ModelSummary)
def get_model(label: str, store: memory.ObjectStore = Depends(memory.get_store)):
    try:
        model = memory.load_model(store, label)
    except errors.ModelNotFound as e:
        raise HTTPException(404, str(e))
    return schemas.oms.ModelSummary.from_model(label, model)


@app.get("/objects/{label}/plan", response_model=schemas.oms.PlanOut)
def plan_search(
        label: str,
        strategy: SearchStrategy = SearchStrategy.MODE_RANKED,
        n: int = 1,
        seed: int = config.DEFAULT_SEED,
        store: memory.ObjectStore = Depends(memory.get_store)):
    try:
        model = memory.load_model(store, label)
    except errors.ModelNotFound as e:
        raise HTTPException(404, str(e))
    try:
        plan = search.plan_search(model, strategy, seed=seed, n_candidates=n)
    except errors.InputError as e:
        raise HTTPException(400, str(e))
    return schemas.oms.PlanOut.from_plan(label, plan)
