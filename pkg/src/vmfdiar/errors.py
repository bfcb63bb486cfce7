"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, shapes, masks)."""


class NumericalError(RuntimeError):
    """A numerically degenerate situation the caller must handle."""


class DegenerateAnchorsError(NumericalError):
    """Anchor embeddings coincide; every interpolation weight is optimal."""


class DegenerateMidpointError(NumericalError):
    """Interpolation collapsed to (numerically) zero length; the geodesic
    between antipodal anchors is not unique."""
