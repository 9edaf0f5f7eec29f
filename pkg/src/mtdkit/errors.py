"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes (config 2, capacity 3,
file format 4, model hypothesis 5).
"""


class MtdError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MtdError):
    """Invalid configuration: bad schema, unknown key, violated constraint."""


class CapacityError(MtdError):
    """Requested placement does not fit: N occurrences at the required
    separation exceed the observation length."""


class FormatError(MtdError):
    """Malformed serialized artifact (bad magic, truncation, wrong sizes)."""


class HypothesisViolation(MtdError):
    """A recovery hypothesis does not hold for the given data, e.g. a
    vanishing DFT coefficient or an all-zero coefficient ring."""


class DomainError(MtdError, ValueError):
    """Arguments outside an operation's domain (mismatched lengths,
    incompatible group element / signal type, zero-norm reference)."""
