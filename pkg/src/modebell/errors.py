"""Exception types shared across the package.

The CLI maps each family onto its own exit code, so new errors should
subclass one of ``ConfigError``, ``PhysicsError`` or ``DegenerateEnsemble``.
"""


class ModebellError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ModebellError, ValueError):
    """Invalid user configuration (bad keys, out-of-range values)."""


class PhysicsError(ModebellError):
    """A numerical or physical precondition failed."""


class NoGuidedMode(PhysicsError):
    pass


class GridTooCoarse(PhysicsError):
    pass


class GridMismatch(PhysicsError, ValueError):
    pass


class SingleMode(PhysicsError):
    pass


class NonFiniteField(PhysicsError):
    pass


class GeometryError(PhysicsError, ValueError):
    pass


class CalibrationError(PhysicsError):
    pass


class DegenerateEnsemble(ModebellError):
    """The weighted RMS of an intensity difference vanished."""


class MissingCell(ModebellError, KeyError):
    pass


class EmptySurface(ModebellError, ValueError):
    pass
