"""Exception types raised across the package."""


class PblsgmmError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PblsgmmError, ValueError):
    pass


class EmptyMomentsError(InvalidInputError):
    pass


class NumericalFailure(PblsgmmError, ArithmeticError):
    """A covariance that should be positive definite is not.

    ``class_index`` (1-based) and ``individual_id`` are filled in when known.
    """

    def __init__(self, message, class_index=None, individual_id=None):
        super().__init__(message)
        self.class_index = class_index
        self.individual_id = individual_id

    def __str__(self):
        parts = [super().__str__()]
        if self.class_index is not None:
            parts.append(f"class={self.class_index}")
        if self.individual_id is not None:
            parts.append(f"individual={self.individual_id}")
        return " ".join(parts)


class EstimationFailure(PblsgmmError, RuntimeError):
    pass


class InvalidConditionError(InvalidInputError):
    pass


class UndefinedKappaError(PblsgmmError, ValueError):
    pass


class IngestionError(InvalidInputError):
    def __init__(self, message, individual_id=None, line=None):
        where = []
        if individual_id is not None:
            where.append(f"id={individual_id}")
        if line is not None:
            where.append(f"line={line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.individual_id = individual_id
        self.line = line
