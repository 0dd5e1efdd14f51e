"""HTTP service wrapping the estimation pipeline."""

from .app import app

__all__ = ["app"]
