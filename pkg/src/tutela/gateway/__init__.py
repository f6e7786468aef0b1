"""Query surfaces: precomputed indexes, HTTP JSON service, and the CLI."""

from .indexes import ServingIndexes
from .service import create_app

__all__ = ["ServingIndexes", "create_app"]
