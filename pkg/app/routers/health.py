from fastapi import APIRouter

from app.services.cache_service import CacheService

router = APIRouter(tags=["health"])


@router.get("/ping")
def health_check():
    """Liveness check for the experiment service"""
    return "pong"


@router.get("/health")
def readiness():
    """Readiness, including whether the report cache is reachable"""
    return {"status": "ok", "cache": CacheService().health_check()}
