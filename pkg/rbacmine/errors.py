from __future__ import annotations
from os import PathLike

__all__ = ('ShapeError', 'DomainError', 'FormatError', 'ConvergenceWarning',)


class ShapeError(ValueError):
    """Matrix or vector dimensions do not conform."""

    @classmethod
    def mismatch(cls, what: str, *shapes: tuple[int, ...]) -> ShapeError:
        listed = ' and '.join(str(tuple(s)) for s in shapes)
        return cls(f'Shapes {listed} do not conform for {what}.')


class DomainError(ValueError):
    """A parameter lies outside of its allowed range."""


class FormatError(ValueError):
    """A file could not be parsed."""

    def __init__(self, message: str,
                 path: str | PathLike[str] | None = None,
                 line: int | None = None) -> None:
        self.message = message
        self.path = None if path is None else str(path)
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.path or '<input>'
        if self.line is not None:
            where += f':{self.line}'
        return f'{where}: {self.message}'


class ConvergenceWarning(UserWarning):
    """An iterative fit stopped at its iteration limit."""
