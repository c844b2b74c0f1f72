class HyperplantError(Exception):
    """Base class for every error the library raises on purpose"""


class DimensionError(HyperplantError, ValueError):
    """Shapes do not match, or an index/mode is out of range"""


class SymmetryError(DimensionError):
    """Tensor rejected because it is not symmetric (strict mode)"""


class ParameterError(HyperplantError, ValueError):
    """Parameters violate an operation's preconditions"""


class InvariantError(HyperplantError):
    """An internal invariant does not hold"""


class NumericalError(HyperplantError, ArithmeticError):
    """Non-finite intermediate or an inconsistent numerical step"""


class BudgetExceededError(HyperplantError):
    """Combinatorial enumeration refused because it is too large"""


class ParseError(HyperplantError, ValueError):
    """Malformed input file"""

    def __init__(self, message: str, line: int = None, path: str = None):
        self.line = line
        self.path = path
        where = ''
        if path:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class OutputError(HyperplantError, OSError):
    """Result file cannot be written"""
