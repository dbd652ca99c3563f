from celery import shared_task
from celery.utils.log import get_task_logger

from .replication import execute_replication

logger = get_task_logger(__name__)


@shared_task
def run_replication(config_data: dict, index: int, run_dir: str) -> dict:
    """Run one replication on a celery worker and return its summary."""
    logger.info("Replication %d of %s", index, config_data.get("preset") or config_data["network"])
    return execute_replication(config_data, index, run_dir)
