"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid configuration, plan, or operand shapes. Fatal; exit code 1 at the CLI."""


class ShapeMismatch(ConfigurationError):
    """Operand shapes do not conform for an op."""


class NonFiniteError(ArithmeticError):
    """A computation produced NaN or infinity.

    ``op`` names the trace node that first produced the non-finite value,
    ``context`` carries extra diagnostics (iteration index, per-term losses).
    """

    def __init__(self, message, op=None, context=None):
        super().__init__(message)
        self.op = op
        self.context = context or {}


class UnsatisfiablePlanError(ConfigurationError):
    """A decremental plan that cannot be executed (e.g. no classes left for the memory bank)."""


class MissingArtifactError(ConfigurationError):
    """A pipeline command was run before its prerequisite produced the needed artifact."""


class TrainingBudgetError(RuntimeError):
    """A training run exhausted its budget without reaching the required quality floor."""
