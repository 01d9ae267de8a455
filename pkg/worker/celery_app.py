"""Celery application configuration."""

from celery import Celery

from jrrelp.settings import get_settings

settings = get_settings()

celery_app = Celery(
    "jrrelp_worker",
    broker=settings.redis_url,
    backend=settings.redis_url,
    include=["worker.tasks"]
)

# Configure Celery
celery_app.conf.update(
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    timezone="UTC",
    enable_utc=True,
    task_track_started=True,
    task_time_limit=3600,  # 1 hour max per arm
    task_soft_time_limit=3300,
    task_always_eager=settings.celery_eager,
    task_acks_late=True,
    result_expires=7 * 24 * 3600,
    worker_prefetch_multiplier=1,
    worker_max_tasks_per_child=50,
)
