"""
ISALT – Error Types
Every failure the CLI can report maps to one exit code.
"""

import config as cfg


class IsaltError(Exception):
    exit_code = 1


# ── configuration ───────────────────────────────────────

class ConfigError(IsaltError, ValueError):
    exit_code = cfg.EXIT_CONFIG


class ShapeMismatch(ConfigError):
    """Dataset, basis or coefficient shapes disagree."""


# ── numerics ────────────────────────────────────────────

class NumericalFailure(IsaltError, ArithmeticError):
    exit_code = cfg.EXIT_NUMERICAL


class BlowUp(NumericalFailure):
    """A trajectory left the finite region or its implicit solve failed."""

    def __init__(self, trajectory: int, step: int, reason: str = ""):
        self.trajectory = trajectory
        self.step = step
        self.reason = reason
        msg = f"trajectory {trajectory} blew up at step {step}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class NonConvergence(NumericalFailure):
    def __init__(self, iterations: int, rows=None):
        self.iterations = iterations
        self.rows = rows
        super().__init__(f"Newton iteration did not converge in {iterations} iterations")


class SingularNewtonMatrix(NumericalFailure):
    """(I - δ∇f) is numerically singular inside the Newton solve."""


class SingularLinearization(NumericalFailure):
    """(I - δ∇f) is numerically singular in the SSBE basis term."""


class NoInvariantDensity(NumericalFailure):
    pass


# ── artifacts ───────────────────────────────────────────

class MissingArtifact(IsaltError, FileNotFoundError):
    exit_code = cfg.EXIT_MISSING_ARTIFACT


class DatasetFormatError(IsaltError):
    exit_code = cfg.EXIT_MISSING_ARTIFACT
