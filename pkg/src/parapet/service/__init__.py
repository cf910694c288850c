"""HTTP service wrapper around the runner."""

from .app import app, create_app

__all__ = ["app", "create_app"]
