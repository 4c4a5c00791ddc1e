"""
Prometheus metrics
"""
from prometheus_client import Counter, Gauge
from prometheus_fastapi_instrumentator import Instrumentator

from . import memory


def register(app):
    """Registers and exposes instrumentation on the given FastAPI instance."""
    Instrumentator().instrument(app).expose(app, include_in_schema=False)


observations_appended = Counter('oms_observations_appended', 'Observations appended to the store over HTTP')
model_fits = Counter('oms_model_fits', 'Models fitted over HTTP')

model_cache_size = Gauge('oms_model_cache_size', 'The number of models held in the model cache')
model_cache_size.set_function(lambda: len(memory.model_cache))
