"""Exception hierarchy.

Every error carries a short ``code`` so the CLI can print a single
machine-parsable line before exiting.
"""

from __future__ import annotations


class CausalEmbedError(Exception):
    code = "error"


class NotPositiveDefinite(CausalEmbedError):
    code = "not_positive_definite"


class DimensionMismatch(CausalEmbedError, ValueError):
    code = "dimension_mismatch"


class EmptyInput(CausalEmbedError, ValueError):
    code = "empty_input"


class EmptyBatch(EmptyInput):
    code = "empty_batch"


class MissingColumn(CausalEmbedError, KeyError):
    code = "missing_column"

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class NonFiniteLoss(CausalEmbedError, FloatingPointError):
    code = "non_finite_loss"


class RoleMismatch(CausalEmbedError, ValueError):
    code = "role_mismatch"


class MissingRegressor(CausalEmbedError, ValueError):
    code = "missing_regressor"


class InvalidDistribution(CausalEmbedError, ValueError):
    code = "invalid_distribution"


class DataError(CausalEmbedError, ValueError):
    code = "data_error"


class ConfigError(CausalEmbedError, ValueError):
    code = "config_error"
