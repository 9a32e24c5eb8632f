"""Exception hierarchy shared by all modules."""


class FluidLiftError(Exception):
    """Base class for all errors raised by the package."""


class NumericalError(FluidLiftError):
    """A computation hit a singular or degenerate configuration."""


class InputError(FluidLiftError):
    """Caller supplied data violating a precondition."""


class NonSkew(InputError):
    pass


class SingularMassMatrix(NumericalError):
    pass


class SingularInertia(NumericalError):
    pass


class RankDeficientAllocation(NumericalError):
    pass


class DegenerateTension(NumericalError):
    pass


class DegenerateThrust(NumericalError):
    pass


class HypothesisUnmet(InputError):
    pass


class DegenerateKnots(InputError):
    pass


class CapExceeded(InputError):
    pass


class MassBelowEmpty(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)


class ValidationError(InputError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))
