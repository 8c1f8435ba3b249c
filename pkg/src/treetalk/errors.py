"""Exception taxonomy shared across the package.

ValidationError and its subclasses map to CLI exit code 1; plain OSError
(file problems) maps to exit code 2.
"""


class ValidationError(ValueError):
    """Bad user input: out-of-range values, schema violations, misuse."""


class SchemaError(ValidationError):
    """A document or table does not match its declared schema."""


class CategorizationError(ValidationError):
    """A value cannot be assigned to any declared category bin."""
