"""Exception hierarchy shared by every module."""


class FockError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(FockError, ValueError):
    pass


class CapacityError(FockError):
    """An exact kernel or queue was asked to exceed its configured cap."""

    def __init__(self, message, cap=None):
        super().__init__(message)
        self.cap = cap


class DegenerateStateError(FockError):
    """Conditioning on an outcome left a state of zero norm."""


class TopologyError(FockError):
    pass


class ConfigError(FockError):
    """Netlist problem; carries an optional source position."""

    def __init__(self, message, path=None, line=None):
        self.message = message
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
