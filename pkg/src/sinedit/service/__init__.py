"""Local HTTP job service wrapping training, editing and scoring."""

from .app import create_app

__all__ = ["create_app"]
