"""Exception types shared across the package."""


class NarrativeEnrichError(Exception):
    """Base class for all package errors."""


class CorpusError(NarrativeEnrichError):
    """Unreadable, empty, or malformed corpus input."""


class ConfigError(NarrativeEnrichError):
    """Invalid run configuration; message lists the offending fields."""


class BackendError(NarrativeEnrichError):
    """Transport or remote failure of an embedding/generation backend.

    Distinct from pipeline non-expansion outcomes: a BackendError aborts the
    run, it never masquerades as a sentinel result.
    """


class CapabilityError(BackendError):
    """Backend does not support the requested capability (e.g. token
    probabilities); callers may fall back to a coarser path."""


class TemplateError(NarrativeEnrichError):
    """Prompt template rendering failed (unbound placeholder)."""


class ArchiveError(NarrativeEnrichError):
    """Digital-library client failure (network, malformed response, or no
    downloadable text)."""
