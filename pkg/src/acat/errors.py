"""Exception types shared across the cell twin."""


class AcatError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(AcatError):
    """A textual token (pin label, pin-map line) could not be parsed."""


class InputError(AcatError):
    """An argument violates a documented precondition."""


class ConfigError(AcatError):
    """A configuration object is incomplete or inconsistent."""


class ScenarioError(AcatError):
    """A scenario file failed validation; message carries field context."""


class NotHomed(AcatError):
    """Motion was requested on an axis without a position reference."""


class LimitError(AcatError):
    """A motion target lies outside the axis soft limits."""


class HomingTimeout(AcatError):
    """The limit switch never asserted within the homing travel budget."""


class ActuatorFault(AcatError):
    """A confirmation sensor did not report within its deadline."""


class DryDispense(AcatError):
    """Dispense requested with insufficient reservoir volume."""


class PositionError(AcatError):
    """Dispense requested while the dispenser axis is out of position."""


class StateError(AcatError):
    """An operation conflicts with the current device state."""


class DegenerateCap(AcatError):
    """Cap geometry is undefined at the requested contact angle."""


class FitError(AcatError):
    """Circle fitting failed or produced an unusable result."""


class MeasurementFault(AcatError):
    """The measurement pipeline failed for one part."""
