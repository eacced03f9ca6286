"""Exception hierarchy shared by all modules."""


class PodsError(Exception):
    """Base class for every error raised by this package."""


class DataError(PodsError):
    """Problems with input data (prices, returns, masks)."""


class MissingData(DataError):
    def __init__(self, row, col):
        super().__init__(f"missing value at row {row}, column {col}")
        self.row = row
        self.col = col


class InvalidPrice(DataError):
    pass


class DuplicateDate(DataError):
    pass


class DegenerateAsset(DataError):
    def __init__(self, ticker):
        super().__init__(f"asset {ticker!r} has zero return variance")
        self.ticker = ticker


class SplitTooSmall(DataError):
    pass


class EmptyMask(DataError):
    pass


class DimensionError(DataError, ValueError):
    pass


class SolverError(PodsError):
    """Numerical failure inside one of the optimizers."""


class IndefiniteRisk(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, msg, lam=None):
        super().__init__(msg if lam is None else f"{msg} (lambda={lam:g})")
        self.lam = lam


class FactorizationFailure(SolverError):
    pass


class MaxLambdaUnbounded(SolverError):
    pass


class ScheduleDomain(PodsError, ValueError):
    pass


class CyclingAbort(SolverError):
    pass


class TargetUnreachable(PodsError):
    pass


class NumericalOverflow(SolverError):
    pass


class TrainingDiverged(SolverError):
    pass


class IncompleteBundle(PodsError):
    pass
