"""Exception hierarchy.  Everything raised on purpose derives from ``CoolwalkError``."""


class CoolwalkError(Exception):
    pass


class NonTransientError(CoolwalkError, ValueError):
    """The environment law is not right-transient (``<log rho> >= 0``)."""


class NoRootError(CoolwalkError, ValueError):
    pass


class NonFiniteMomentError(CoolwalkError, ArithmeticError):
    pass


class CalibrationError(CoolwalkError, ValueError):
    pass


class OracleSizeError(CoolwalkError, ValueError):
    pass


class WindowError(CoolwalkError, ValueError):
    """Requested points fall outside an asymptotic validity window."""


class NormExceededError(CoolwalkError, ValueError):
    pass


class IllPosedError(CoolwalkError, ValueError):
    pass


class SeriesInstabilityError(CoolwalkError, ArithmeticError):
    pass


class MissingVarianceError(CoolwalkError, KeyError):
    pass


class ZeroVarianceError(CoolwalkError, ZeroDivisionError):
    pass


class ConfigError(CoolwalkError, ValueError):
    pass


class CoolingOverflowError(CoolwalkError, OverflowError):
    """A cooling time or increment does not fit in a signed 64-bit integer."""


class HorizonError(CoolwalkError, ValueError):
    """A finite cooling map was asked about times past its last block."""


class InsufficientHorizonError(CoolwalkError, ValueError):
    """Estimates are inconsistent at the simulated horizons (e.g. a negative ``K0 v``)."""


class MissingConstantsError(CoolwalkError, ValueError):
    pass
