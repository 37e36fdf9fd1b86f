class PuTRError(Exception):
    """Base class for every error raised by this package"""


class DataError(PuTRError, ValueError):
    """Malformed input files, invalid boxes or infeasible configurations"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(DataError):
    """Unreadable, truncated or mismatching checkpoint container"""


class NumericError(PuTRError, ArithmeticError):
    """Non-finite values where finite ones are required"""
