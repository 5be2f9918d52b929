"""Exception hierarchy shared by every pairdis module."""

from typing import Optional


class PairdisError(Exception):
    """Base class for all pairdis errors."""


class DimensionError(PairdisError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(PairdisError, ValueError):
    """A precondition of an operation or a config invariant was violated."""


class DomainError(PairdisError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class FormatError(PairdisError, ValueError):
    """A tensor container, table or checkpoint could not be parsed."""


class NonFiniteError(PairdisError, ArithmeticError):
    """A primitive produced NaN or Inf."""

    def __init__(self, op: str, message: Optional[str] = None):
        self.op = op
        super().__init__(message or f"non-finite value produced by '{op}'")


class DivergenceError(PairdisError, RuntimeError):
    """The training loss stopped being finite."""

    def __init__(self, epoch: int, step: int, detail: str = ""):
        self.epoch = epoch
        self.step = step
        message = f"training diverged at epoch {epoch}, step {step}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
