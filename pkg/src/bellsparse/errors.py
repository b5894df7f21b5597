"""Exception types raised across the package."""


class BellError(ValueError):
    """Base class for all input and solver errors."""


class ShapeMismatch(BellError):
    pass


class NegativeEntry(BellError):
    def __init__(self, index, value):
        super().__init__(f"negative entry {float(value)!r} at index {index}")
        self.index = index
        self.value = value


class NotNormalized(BellError):
    def __init__(self, x, y, total):
        super().__init__(f"column (x={x}, y={y}) sums to {float(total)!r}, expected 1")
        self.x = x
        self.y = y
        self.total = total


class SignallingInput(BellError):
    pass


class UnsupportedScenario(BellError):
    pass


class WeightMismatch(BellError):
    pass


class ScenarioMismatch(BellError):
    pass


class InvalidDimension(BellError):
    pass


class NotConstantColumnSums(BellError):
    pass


class LengthMismatch(BellError):
    pass


class ProblemTooLarge(BellError):
    pass


class Infeasible(BellError):
    pass


class TooManyVertices(BellError):
    pass


class TargetAlreadyLocal(BellError):
    pass


class FitDiverged(BellError):
    pass


class InsufficientData(BellError):
    pass
