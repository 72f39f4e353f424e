"""
Error Hierarchy
Every failure the tool reports carries the process exit code it maps to.
"""

from typing import Any, Dict, Optional


class HjbExecError(Exception):
    """Base class for all reported failures."""

    exit_code: int = 5

    def __init__(self, detail: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        if not self.diagnostics:
            return self.detail
        extras = ", ".join(f"{key}={value}" for key, value in self.diagnostics.items())
        return f"{self.detail} ({extras})"


class ConfigParseError(HjbExecError):
    """The configuration file is not valid TOML."""

    exit_code = 2


class UsageError(HjbExecError):
    """Bad command-line usage or mismatched inputs."""

    exit_code = 2


class ConfigurationError(HjbExecError):
    """A value is out of range, unknown or inconsistent."""

    exit_code = 3

    def __init__(self, detail: str, field_path: str = "", diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(detail, diagnostics)
        self.field_path = field_path

    def __str__(self) -> str:
        base = super().__str__()
        return f"{self.field_path}: {base}" if self.field_path else base


class OutputError(HjbExecError):
    """Results could not be written."""

    exit_code = 4


class NumericalError(HjbExecError):
    """A numerical routine failed (singular system, non-finite values, divergence)."""

    exit_code = 5


class DomainError(NumericalError):
    """An argument lies outside the mathematical domain of a formula."""


class InfeasibleBoundError(NumericalError):
    """The bounding ODE violates its solvability condition b*A^r - a > 0."""
