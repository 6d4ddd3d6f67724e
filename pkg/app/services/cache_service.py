import os
import json
import hashlib
import logging
from typing import List, Dict, Optional
from datetime import timedelta

logger = logging.getLogger(__name__)

try:
    import redis
    REDIS_AVAILABLE = True
except ImportError:
    REDIS_AVAILABLE = False
    logger.warning("Redis package not installed. Caching will be disabled.")

KEY_PREFIX = "sosi:experiment:"


class CacheService:
    """Redis cache of experiment report rows, keyed by a hash of the configuration, with graceful fallback"""

    def __init__(self, redis_url: str = None):
        if redis_url is None:
            redis_url = os.getenv("REDIS_URL", "redis://localhost:6379")

        self.redis_url = redis_url
        self.redis_client = None
        self.default_ttl = timedelta(hours=24)
        self.enabled = REDIS_AVAILABLE

        if self.enabled:
            self._connect()
        else:
            logger.warning("Cache service disabled - Redis package not available")

    def _connect(self):
        if not REDIS_AVAILABLE:
            return

        try:
            self.redis_client = redis.from_url(self.redis_url, decode_responses=True)
            self.redis_client.ping()
            logger.info(f"Connected to Redis at {self.redis_url}")
        except Exception as e:
            logger.warning(f"Failed to connect to Redis at {self.redis_url}: {e}")
            self.redis_client = None
            self.enabled = False

    def _is_connected(self) -> bool:
        if not self.enabled or not self.redis_client:
            return False
        try:
            self.redis_client.ping()
            return True
        except Exception:
            logger.warning("Redis connection lost, attempting to reconnect...")
            self._connect()
            return self.redis_client is not None

    @staticmethod
    def config_key(kind: str, config: Dict) -> str:
        """Stable key for an experiment kind and its configuration"""
        canonical = json.dumps({"kind": kind, "config": config}, sort_keys=True)
        return KEY_PREFIX + hashlib.md5(canonical.encode()).hexdigest()

    def get_rows(self, kind: str, config: Dict) -> Optional[List[Dict]]:
        if not self._is_connected():
            return None

        try:
            cached_data = self.redis_client.get(self.config_key(kind, config))
            if cached_data:
                logger.info(f"Cache HIT for experiment {config.get('name')!r} ({kind})")
                return json.loads(cached_data)
            logger.info(f"Cache MISS for experiment {config.get('name')!r} ({kind})")
            return None
        except Exception as e:
            logger.warning(f"Cache get error: {e}")
            return None

    def set_rows(self, kind: str, config: Dict, rows: List[Dict]) -> bool:
        if not self._is_connected():
            return False

        try:
            self.redis_client.setex(self.config_key(kind, config), self.default_ttl, json.dumps(rows))
            logger.info(f"Cached {len(rows)} rows for experiment {config.get('name')!r}")
            return True
        except Exception as e:
            logger.warning(f"Cache set error: {e}")
            return False

    def clear(self) -> bool:
        if not self._is_connected():
            return False

        try:
            keys = self.redis_client.keys(KEY_PREFIX + "*")
            if keys:
                self.redis_client.delete(*keys)
                logger.info(f"Cleared {len(keys)} cache entries")
            return True
        except Exception as e:
            logger.warning(f"Cache clear error: {e}")
            return False

    def get_cache_stats(self) -> Dict:
        if not REDIS_AVAILABLE:
            return {
                "redis_connected": False,
                "error": "Redis package not installed"
            }

        if not self._is_connected():
            return {
                "redis_connected": False,
                "error": f"Cannot connect to Redis at {self.redis_url}",
                "redis_url": self.redis_url
            }

        try:
            info = self.redis_client.info()
            keys = self.redis_client.keys(KEY_PREFIX + "*")
            return {
                "redis_connected": True,
                "redis_url": self.redis_url,
                "cached_experiments": len(keys),
                "memory_used": info.get("used_memory_human", "Unknown"),
                "uptime_seconds": info.get("uptime_in_seconds", 0)
            }
        except Exception as e:
            return {
                "redis_connected": False,
                "error": str(e),
                "redis_url": self.redis_url
            }

    def health_check(self) -> bool:
        return self._is_connected()
