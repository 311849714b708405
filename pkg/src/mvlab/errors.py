"""Exception hierarchy.  Input problems derive from ``ValueError``; numerical
failures from ``ArithmeticError`` so callers can catch either family."""


class MvlabError(Exception):
    pass


class InputError(MvlabError, ValueError):
    pass


class ConfigError(InputError):
    pass


class UnsupportedDimensionError(InputError):
    pass


class DensityRequiredError(InputError):
    """A Nemytskii-type drift was evaluated against a measure without a density."""


class CutoffError(InputError):
    pass


class GridError(InputError):
    pass


class CoverageError(InputError):
    pass


class PeriodizationError(InputError):
    pass


class FitError(MvlabError):
    pass


class NumericError(MvlabError, ArithmeticError):
    pass


class BlowupError(NumericError):
    def __init__(self, message, *, particle=None, rep_id=None, t=None):
        super().__init__(message)
        self.particle = particle
        self.rep_id = rep_id
        self.t = t
