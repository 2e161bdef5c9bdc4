"""Shared exception types (mapped to CLI exit codes in cli.py)."""


class DataError(Exception):
    """Malformed or insufficient data: parse failures, hash mismatches,
    impossible generation requests."""


class GenerationError(DataError):
    """Could not produce the requested corpus (e.g. scenario space exhausted)."""


class OracleError(Exception):
    """The rule-based bot found no applicable rule for a history."""


class NumericError(Exception):
    """Training diverged (non-finite loss or parameters)."""
