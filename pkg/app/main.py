import logging
import os

from fastapi import FastAPI
from app.routers import health, experiments, admin

logging.basicConfig(
    level=os.getenv("LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)

app = FastAPI(title="SOSI Out-of-Sample Extension API", version="1.0.0")

# Include routers
app.include_router(health.router)
app.include_router(experiments.router)
app.include_router(admin.router)
