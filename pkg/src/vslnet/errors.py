"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateInputError(ValueError):
    """An input leaves nothing to normalize (e.g. a fully masked softmax slice)."""


class NumericalError(ArithmeticError):
    """A computation produced NaN or Inf."""


class ConfigError(ValueError):
    pass


class AnnotationError(ValueError):
    pass


class ParseError(ValueError):
    pass


class LabelError(ValueError):
    pass


class UsageError(RuntimeError):
    pass
