"""Exception types shared across the package."""


class MetadataError(ValueError):
    """Volume or image metadata is missing, zero, or inconsistent."""


class FormatError(ValueError):
    """File content does not match the expected format."""


class ShapeError(ValueError):
    """Array shape violates an operation's contract."""
