"""Exception hierarchy.  Each class carries a short machine-readable code."""

from __future__ import annotations


class LapsewickError(Exception):
    code = "error"


class InvalidGeometryError(LapsewickError):
    code = "invalid-geometry"


class ContractViolation(LapsewickError):
    code = "contract-violation"


class ConeViolationError(LapsewickError):
    code = "cone-violation"


class OutsideConeError(LapsewickError):
    code = "outside-cone"


class InternalConsistencyError(LapsewickError):
    code = "internal-consistency"


class SizeLimitError(LapsewickError):
    code = "size-limit"


class ContourBreakdownError(LapsewickError):
    code = "contour-breakdown"


class FitWindowError(LapsewickError):
    code = "fit-window"


class ConfigError(LapsewickError):
    code = "config-schema"
