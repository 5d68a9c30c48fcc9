"""Exception types shared across the library.

Every error carries a stable ``kind`` string so the CLI can emit
machine-readable error reports without string-matching messages.
"""


class SplatFuseError(Exception):
    kind = "error"


class ParseError(SplatFuseError):
    """Malformed file content: bad header, type mismatch, count mismatch."""

    kind = "parse_error"


class TruncatedFileError(ParseError):
    """File ended before the declared element counts were satisfied."""

    kind = "truncated_file"


class MissingInputError(SplatFuseError):
    kind = "missing_input"


class ColorlessCloudError(SplatFuseError):
    """An operation that needs per-point colors received a cloud without them."""

    kind = "colorless_input"


class DegenerateGeometryError(SplatFuseError):
    """Geometry too degenerate to proceed: collinear correspondences,
    zero robust radius, zero surviving ICP matches."""

    kind = "degenerate_geometry"


class InstanceTooLargeError(SplatFuseError):
    kind = "instance_too_large"


class UnknownImageIdError(SplatFuseError):
    kind = "unknown_image_id"


class ConfigError(SplatFuseError):
    kind = "invalid_config"
