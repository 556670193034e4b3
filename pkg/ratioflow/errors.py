from typing import Any, List, Optional, Union


class RatioflowError(Exception):
    """Base class of every error raised by ratioflow."""


'''BOOK'''

class BookError(RatioflowError):
    """
    A book-engine failure tied to one input event.

    Attributes:
        event_index (int | None): Position of the offending event in the
            replayed stream.
        line (int | None): Line number in the source file, when known.
    """

    def __init__(
        self,
        msg: str,
        event_index: Optional[int] = None,
        line: Optional[int] = None
    ):
        self.event_index = event_index
        self.line = line
        where = []
        if event_index is not None:
            where.append(f"event {event_index}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            msg = f"{msg} ({', '.join(where)})"
        super().__init__(msg)


class CrossedBookError(BookError):
    pass


class NegativeQuantityError(BookError):
    pass


class EmptySideError(BookError):
    pass


class OutOfOrderError(BookError):
    pass


class InputFormatError(RatioflowError):
    """Malformed input file. Carries the path and the 1-based line."""

    def __init__(self, msg: str, path: Any = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix = f"{prefix}{line}:"
            prefix = prefix + " "
        super().__init__(prefix + msg)


'''FEATURES'''

class InsufficientHistoryError(RatioflowError):
    pass


class ModelNotFoundError(RatioflowError, KeyError):
    pass


'''ESTIMATION'''

class EstimationError(RatioflowError):
    pass


class EmptyDatasetError(EstimationError):
    pass


class DimensionMismatchError(EstimationError):
    pass


class InsufficientSamplesError(EstimationError):
    pass


class SingularHessianError(EstimationError):
    """
    Raised when the feature matrix is rank deficient.

    Attributes:
        directions (list): Unit vectors spanning the null space of the
            empirical information, one per offending direction.
    """

    def __init__(self, msg: str, directions: Union[List[Any], None] = None):
        self.directions = directions if directions is not None else []
        super().__init__(msg)


class SingularGammaError(EstimationError):
    pass


class DidNotConvergeError(EstimationError):
    """Raised on demand for a fit that stopped before convergence."""

    def __init__(self, msg: str, result: Any = None):
        self.result = result
        super().__init__(msg)


'''SELECTION'''

class MixedTError(RatioflowError):
    pass


'''BACKTEST'''

class ScheduleError(RatioflowError):
    pass


class InsufficientSessionsError(ScheduleError):
    pass


class WindowFitFailure(RatioflowError):
    pass


class LookAheadError(RatioflowError):
    pass


'''SIMULATION'''

class SimulationError(RatioflowError):
    pass


class EnvelopeViolation(SimulationError, AssertionError):
    pass


class ConfigInvalid(SimulationError, ValueError):
    pass
