from __future__ import annotations


class ExtractionFailed(ValueError):
    """A detected flow lacks the attributes its protocol requires."""
