"""Exception hierarchy shared by every pipeline stage."""


class LaneSenseError(Exception):
    """Base class for all errors raised by lanesense."""


class InvalidInput(LaneSenseError, ValueError):
    pass


class ConfigError(LaneSenseError, ValueError):
    """A configuration file is missing a key, has an unknown key, or a bad value."""


class AboveHorizon(LaneSenseError, ValueError):
    pass


class BehindCamera(LaneSenseError, ValueError):
    pass


class NonFinite(LaneSenseError, ArithmeticError):
    pass


class EmptyGrid(LaneSenseError):
    pass


class NoModel(LaneSenseError):
    """RANSAC could not find a model with enough inliers."""


class NoEgoLane(LaneSenseError):
    pass


class MissingClass(LaneSenseError, ValueError):
    pass


class NoRoad(LaneSenseError):
    pass


class DimensionMismatch(LaneSenseError, ValueError):
    pass


class InsufficientFlow(LaneSenseError):
    pass


class GridMismatch(LaneSenseError, ValueError):
    pass


class MissingCamera(LaneSenseError, FileNotFoundError):
    pass


class MalformedTruth(LaneSenseError, ValueError):
    def __init__(self, path, line_no, text):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: malformed truth entry {text!r}")
