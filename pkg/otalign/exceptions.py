# Base exception class for the project to make all exceptions easy to catch selectively
class AlignException(Exception):
    pass


class InvalidParameter(AlignException):
    pass


class ShapeError(InvalidParameter):
    pass


class ConstraintSignError(InvalidParameter):
    pass


class BoundError(InvalidParameter):
    pass


class SizeError(InvalidParameter):
    pass


class ParseError(InvalidParameter):
    pass


class FormatError(ParseError):
    pass


class SolverError(AlignException):
    pass


class RoundingError(SolverError):
    pass


class DecompositionError(SolverError):
    pass


class VerificationFailure(AlignException):
    pass


EXIT_CODES = (
    (InvalidParameter, 1),
    (SolverError, 2),
    (VerificationFailure, 3),
)


def exit_code_for(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1
