"""Exception types raised across the package."""

from __future__ import annotations


class GeometryError(ValueError):
    """Invalid cross-section parameters or inconsistent layout."""


class MeshError(ValueError):
    """A mesh could not be generated for the requested resolution."""

    def __init__(self, message: str, estimated_cells: int | None = None):
        super().__init__(message)
        self.estimated_cells = estimated_cells


class SolverError(RuntimeError):
    """Linear solve failed or did not reach the requested residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class FitError(RuntimeError):
    """A nonlinear fit did not converge or produced unusable parameters."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class NoDecayError(FitError):
    """The series carries no resolvable decay above its noise floor."""


class IngestError(ValueError):
    """An input file is malformed; the message names the row/column or file."""


class StageError(RuntimeError):
    """A pipeline stage failed. Carries the stage name and partial report."""

    def __init__(self, stage: str, message: str, partial: dict | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial or {}
