"""Exception types raised across the package."""


class Lane3DError(Exception):
    """Base class for all errors raised by lane3d."""


class InvalidCamera(Lane3DError, ValueError):
    pass


class PointBehindCamera(Lane3DError, ValueError):
    pass


class DegenerateHomography(Lane3DError, ValueError):
    pass


class HeightAtCameraCenter(Lane3DError, ValueError):
    """A point at (or above) camera height has no top-view image."""


class InvalidLane(Lane3DError, ValueError):
    pass


class LaneDoesNotCoverYref(Lane3DError, ValueError):
    pass


class ShapeMismatch(Lane3DError, ValueError):
    pass


class LengthMismatch(Lane3DError, ValueError):
    pass


class EmptyDataset(Lane3DError, ValueError):
    pass


class InvalidSpec(Lane3DError, ValueError):
    pass


class ParseError(Lane3DError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(Lane3DError, ValueError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
