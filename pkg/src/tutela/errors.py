"""Shared exception types."""


class TutelaError(Exception):
    """Base class for engine errors."""


class ConfigurationError(TutelaError):
    """A required registry or setting is missing or invalid."""


class IngestError(TutelaError):
    """An input stream could not be read at all (not a per-row rejection)."""


class StoreError(TutelaError):
    """Store-level invariant violated (mutation after seal, broken ordering)."""


class NotFoundError(TutelaError):
    """Lookup of an unknown pool, address, or embedding."""
