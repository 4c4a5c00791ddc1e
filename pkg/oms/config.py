import os

STORE_PATH = os.getenv("OMS_STORE", "./oms_store/observations.jsonl")
DEFAULT_SEED = int(os.getenv("OMS_SEED", "42"))
MODEL_CACHE_SIZE = int(os.getenv("OMS_MODEL_CACHE_SIZE", "64"))
SENTRY_DSN = os.getenv("SENTRY_DSN")
SENTRY_ENV = os.getenv("SENTRY_ENV", "development")
