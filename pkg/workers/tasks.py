"""
Celery Task Definitions
Solves and scores one comparative-statics point from a JSON configuration.
"""

import logging
from typing import Any, Dict

from models.config_models import RunConfig
from services.montecarlo_service import ExperimentService, evaluate_sweep_point
from workers.celery_app import celery_app

logger = logging.getLogger(__name__)


@celery_app.task(bind=True)
def solve_sweep_point_task(self, config_data: Dict[str, Any], param: str, value: float) -> Dict[str, Any]:
    """
    Regenerate the shared path batch from the configured seed, then solve and score one value.

    Args:
        config_data: RunConfig in JSON form
        param: Swept parameter name
        value: Parameter value

    Returns:
        SweepPoint in JSON form
    """
    task_id = self.request.id
    logger.info(f"Starting sweep point task {task_id}: {param}={value}")
    try:
        self.update_state(state="PROCESSING", meta={"status": "Simulating paths", "progress": 0})
        config = RunConfig.model_validate(config_data)
        service = ExperimentService(config, executor="threads")
        batch = service.paths()

        self.update_state(state="PROCESSING", meta={"status": "Solving", "progress": 25})
        point = evaluate_sweep_point(config, param, value, batch, service.workers)

        logger.info(f"Sweep point task {task_id} finished (converged={point.converged})")
        return point.model_dump(mode="json")
    except Exception as e:
        logger.error(f"Sweep point task {task_id} failed: {str(e)}")
        raise
