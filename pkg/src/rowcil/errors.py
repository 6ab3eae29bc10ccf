"""Exception hierarchy shared by every rowcil module."""


class RowError(Exception):
    """Base class for all library errors."""


class ShapeError(RowError, ValueError):
    pass


class NumericError(RowError, ValueError):
    pass


class InputError(RowError, ValueError):
    pass


class StateError(RowError, RuntimeError):
    pass


class CapacityExhaustedError(RowError, RuntimeError):
    """Every maskable unit is already claimed by earlier tasks."""


class EmptyMemoryError(RowError, LookupError):
    pass


class QuotaError(InputError):
    """Replay budget is smaller than the number of classes seen."""


class ConfigError(RowError, ValueError):
    """Bad experiment configuration; the message names the offending key."""


class CsvParseError(InputError):
    pass
