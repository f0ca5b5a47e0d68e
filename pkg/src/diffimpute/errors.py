"""Exception types shared across the package.

The CLI maps these onto exit codes (config error -> 2, data error -> 3,
numeric failure -> 4). Programming-contract violations (bad shapes, indices
out of range) raise plain ValueError.
"""


class ConfigError(Exception):
    """Invalid, unknown, or inconsistent configuration."""


class DataError(Exception):
    """Malformed input data, degenerate datasets, or broken checkpoint files."""


class NumericError(Exception):
    """Non-finite values encountered where the computation cannot continue."""
