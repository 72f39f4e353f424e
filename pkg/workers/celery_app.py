"""
Celery Application Configuration
Celery app for solving sweep points on remote workers.
"""

from celery import Celery

from core.config import get_settings

settings = get_settings()

# Create Celery app instance
celery_app = Celery(
    "hjb_exec",
    broker=settings.celery_broker_url,
    backend=settings.celery_result_backend,
    include=["workers.tasks"],
)

celery_app.conf.update(
    task_routes={
        "workers.tasks.solve_sweep_point_task": {"queue": "solves"},
    },
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    timezone="UTC",
    enable_utc=True,
    result_expires=settings.celery_task_timeout,
    task_default_queue="default",
    # one solve per worker process at a time
    worker_prefetch_multiplier=1,
    task_acks_late=True,
    worker_max_tasks_per_child=50,
    task_annotations={
        "workers.tasks.solve_sweep_point_task": {
            "time_limit": settings.celery_task_timeout,
            "soft_time_limit": int(settings.celery_task_timeout * 0.9),
        },
    },
    worker_send_task_events=True,
    task_send_sent_event=True,
)

if __name__ == "__main__":
    celery_app.start()
