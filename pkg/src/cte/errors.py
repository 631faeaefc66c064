"""Exception hierarchy shared by every module."""


class CteError(Exception):
    """Base class for all library errors."""


class FormatError(CteError, ValueError):
    pass


class BoundsError(CteError, IndexError):
    pass


class MissingMappingError(CteError, KeyError):
    def __init__(self, symbols, game=None, what="affordance mapping"):
        self.symbols = sorted(set(symbols))
        where = f" in game {game!r}" if game else ""
        super().__init__(f"no {what}{where} for symbol(s): {', '.join(map(repr, self.symbols))}")

    def __str__(self):
        return self.args[0]


class DimensionError(CteError, ValueError):
    pass


class NumericError(CteError, ArithmeticError):
    pass


class TuningError(CteError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ModeError(CteError, ValueError):
    pass


class ConfigError(CteError, ValueError):
    pass


class DependencyError(CteError, RuntimeError):
    pass
