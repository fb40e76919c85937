from __future__ import annotations

import enum


class CullReason(str, enum.Enum):
    NONE = "None"
    OVER_UNDER_EXPOSED = "OverUnderExposed"
    TOO_TRANSPARENT = "TooTransparent"
    TOO_DESTROYED = "TooDestroyed"
    LOW_VARIANCE = "LowVariance"
    WHITE_SHIFT = "WhiteShift"
    GEOMETRY_CULL = "GeometryCull"
    AWB_FAILURE = "AwbFailure"


class CullSignal(Exception):
    """A candidate cannot be simulated or is rejected before mixing."""

    def __init__(self, reason: CullReason, message: str = ""):
        super().__init__(message or reason.value)
        self.reason = reason
