"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its documented exit statuses without inspecting types.
"""


class ClimlagError(Exception):
    exit_code = 1


class ConfigError(ClimlagError):
    exit_code = 2


class DataError(ClimlagError):
    exit_code = 3


class ModelError(ClimlagError):
    exit_code = 4


# -- data ------------------------------------------------------------------

class SchemaError(DataError):
    pass


class GapError(DataError):
    pass


class EmptyOverlap(DataError):
    pass


class InsufficientLength(DataError):
    pass


class SplitTooLarge(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ConstantSeries(DataError):
    pass


class NetworkError(DataError):
    pass


# -- numerics / models -----------------------------------------------------

class BadWindow(ModelError):
    pass


class NumericalSingularity(ModelError):
    pass


class InsufficientHistory(ModelError):
    pass


class NonStationaryParams(ModelError):
    pass


class FilterDivergence(ModelError):
    pass


class OptimizationFailed(ModelError):
    pass


class HorizonMismatch(ModelError):
    pass


class AllCandidatesFailed(ModelError):
    pass


class RankDeficient(ModelError):
    pass


class Diverged(ModelError):
    pass


class ColumnMismatch(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class NonFiniteLoss(ModelError):
    pass


class AllRunsFailed(ModelError):
    pass


class EmptyInput(ModelError):
    pass


class TooFewRows(ModelError):
    pass


class NoValidRecords(ModelError):
    pass
