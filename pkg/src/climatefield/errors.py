"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Caller handed us arguments that violate an operation's contract."""


class FormatError(ValueError):
    """A file on disk does not match the expected binary/JSON layout."""


class GeometryMismatchError(InvalidInputError):
    """Baked grids were produced from a field with different geometry."""


class TrainingDivergedError(RuntimeError):
    """Training hit a non-finite loss; message names the offending tensor."""
