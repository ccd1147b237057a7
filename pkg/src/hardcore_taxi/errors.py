"""Exception types shared across the package.

Each family maps to one CLI exit code, see ``hardcore_taxi.cli``.
"""


class ContractError(ValueError):
    """An operation was called outside its documented precondition."""


class ResourceCapError(RuntimeError):
    """A configured size or enumeration budget would be exceeded."""


class DataFormatError(ValueError):
    """An input file or literal could not be parsed."""


class CheckpointError(DataFormatError):
    """A checkpoint is corrupt or belongs to a different run."""
