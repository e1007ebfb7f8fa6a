"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class QidError(Exception):
    """Base class for all qidkit errors."""


class ZeroAxis(QidError, ValueError):
    """Rotation axis has zero norm, so its direction is undefined."""


class TiltOutOfRange(QidError, ValueError):
    """Reference tilt outside [pi/4, 3pi/4]; equatorial prep impossible."""


class NoOscillation(QidError):
    """Spectrum shows no oscillation above the noise floor (axis near vertical)."""


class AliasingRisk(QidError, ValueError):
    """Requested frequency bound exceeds the Nyquist limit of the sampling."""


class DegenerateFit(QidError):
    """Least-squares fit is ill-posed (collinear points, equal abscissae)."""


class NoCrossing(QidError):
    """No sign change found in the scanned range."""


class DimensionMismatch(QidError, ValueError):
    """Pulse segment field count differs from the model's control count."""


class NoUsableReference(QidError):
    """No measured axis has a tilt in [pi/4, 3pi/4]."""


class TiltTooVertical(QidError):
    """Axis too close to +-z for a well-conditioned azimuth."""


class StageFailed(QidError):
    """A pipeline stage failed for a specific (control, grid index) axis."""

    def __init__(self, stage: str, m: int | None, ell: int | None, cause: Exception):
        self.stage = stage
        self.m = m
        self.ell = ell
        self.cause = cause
        super().__init__(f"stage {stage} failed at m={m}, l={ell}: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        # default pickling replays only the message; sweep workers need all fields
        return (type(self), (self.stage, self.m, self.ell, self.cause))

    def as_dict(self) -> dict:
        return {
            "error": "StageFailed",
            "stage": self.stage,
            "m": self.m,
            "ell": self.ell,
            "cause": type(self.cause).__name__,
            "message": str(self.cause),
        }


class ConfigInvalid(QidError, ValueError):
    """Run configuration failed validation."""


class MissingRawData(QidError):
    """Figure export requested from a run without retained raw scans."""
