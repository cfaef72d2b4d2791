"""Exception types raised across the simulator."""


class SimError(Exception):
    pass


class PastEventError(SimError):
    pass


class NoHandlerError(SimError):
    pass


class CapacityError(SimError):
    pass


class StateError(SimError):
    pass


class ConcurrencyError(SimError):
    pass


class FloorError(SimError):
    pass


class EmptyRunError(SimError):
    pass


class ParseError(SimError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)


class ConfigError(SimError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
