"""Exception hierarchy shared by the geometry modules."""


class GeometryError(ValueError):
    """Base class for all geometric domain errors."""


class DegeneratePointError(GeometryError):
    """Point at the origin, or on the camera Y axis where azimuth is undefined."""


class BehindCameraError(GeometryError):
    """Point with z <= 0 handed to a pinhole projection."""


class BeyondFovError(GeometryError):
    """Direction outside the admissible field of view of a camera model."""


class OutOfDomainError(GeometryError):
    """Pixel that does not map to an admissible viewing direction."""


class InvalidDepthError(GeometryError):
    """Non-positive virtual depth."""


class AzimuthRangeError(GeometryError):
    """Virtual point whose implied azimuth falls outside (-pi, pi)."""


class InvalidFovError(GeometryError):
    """Field-of-view specification that cannot produce a valid image."""


class NotVisibleError(GeometryError):
    """Box whose sampled outline lies entirely outside the field of view."""
