"""Exception types shared across the package."""


class HallsimError(Exception):
    """Base class for all package errors."""


class GridMismatch(HallsimError):
    """The grid does not fit the geometry (e.g. Dirichlet wall not at y=0)."""


class NonConvergence(HallsimError):
    """An eigensolver failed to deliver a converged pair."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class FactorizationSingular(HallsimError):
    """The shifted operator could not be factorized."""


class WindowNotInGap(HallsimError):
    """An energy or window touches the bulk Landau spectrum."""


class WindowAboveWall(HallsimError):
    """Window energy is at or above the height of a bounded wall."""


class OutOfTable(HallsimError):
    """A requested point lies outside a computed table."""


class NoEdgeStatesInWindow(HallsimError):
    pass


class InvalidCutoff(HallsimError):
    """The cutoff violates sup|j V| <= eps."""


class DegenerateWall(HallsimError):
    """V0' vanishes somewhere on the support of 1 - j."""


class NoPositiveThreshold(HallsimError):
    pass


class WrongGeometry(HallsimError):
    pass


class CoincidentPoints(HallsimError):
    pass


class OnLandauLevel(HallsimError):
    """Energy sits on a Landau level, where the free resolvent does not exist."""


class InsufficientDecayRange(HallsimError):
    """The decay fit range does not sample an exponentially small tail."""


class ConfigError(HallsimError):
    """Invalid run configuration; ``key`` is the offending dotted path."""

    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key
