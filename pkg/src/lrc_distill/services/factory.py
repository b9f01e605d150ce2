from functools import lru_cache

from lrc_distill.services.run_service import RunService
from lrc_distill.settings import settings


@lru_cache
def get_run_service() -> RunService:
    """Process-wide run service bound to the runtime settings."""
    return RunService(settings)
