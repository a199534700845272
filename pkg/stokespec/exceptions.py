from __future__ import annotations

from typing import Any


class StokespecError(Exception):
    ...


class DomainError(StokespecError):
    ...


class SingularityError(StokespecError):
    ...


class InputError(StokespecError):
    ...


class ConfigError(InputError):
    ...


class ResourceError(StokespecError):
    ...


class ConvergenceError(StokespecError):
    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AccuracyError(StokespecError):
    def __init__(self, message: str, achieved: float) -> None:
        super().__init__(message)
        self.achieved = achieved


class FitError(StokespecError):
    def __init__(self, message: str, data: Any = None) -> None:
        super().__init__(message)
        self.data = data
