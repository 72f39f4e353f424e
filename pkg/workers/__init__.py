"""
Workers Package
Celery application and tasks for distributed sweep points.
"""
