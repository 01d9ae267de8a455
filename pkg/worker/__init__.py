"""Celery worker that runs ablation arms out of process."""
