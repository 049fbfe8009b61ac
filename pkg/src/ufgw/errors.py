"""Exception hierarchy shared by the library and the command line."""


class UfgwError(Exception):
    """Base class for all errors raised by :mod:`ufgw`."""

    exit_code = 1


class InputError(UfgwError):
    """Malformed input file or argument."""

    exit_code = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(UfgwError):
    """Well-formed input that violates a structural requirement."""

    exit_code = 2


class NumericalError(UfgwError):
    """Non-finite values or kernel underflow inside a solver."""

    exit_code = 3

    def __init__(self, message, details=None):
        self.message = message
        self.details = dict(details or {})
        if self.details:
            parts = ", ".join(f"{k}={v!r}" for k, v in self.details.items())
            message = f"{message} ({parts})"
        super().__init__(message)
