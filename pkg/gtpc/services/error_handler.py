# gtpc/services/error_handler.py
from pydantic import ValidationError

from gtpc.errors import ConfigError, DatasetError, DimensionError, DivergenceError, SplitError, UsageError


def generate_error_response(error: BaseException) -> str:
    """Turns an exception into a short message for the command line."""
    if isinstance(error, UsageError):
        return f"Invalid arguments: {error}"
    if isinstance(error, (ConfigError, ValidationError)):
        return f"Configuration problem: {error}"
    if isinstance(error, SplitError):
        return f"Cannot split the dataset: {error}. Try a larger ratio or more samples."
    if isinstance(error, DatasetError):
        return f"Dataset problem: {error}"
    if isinstance(error, DimensionError):
        return f"Shape mismatch: {error}"
    if isinstance(error, DivergenceError):
        where = f" State written to {error.dump_path}." if error.dump_path else ""
        return f"Training diverged: {error}.{where} Try a lower learning rate."
    if isinstance(error, FileNotFoundError):
        return f"File not found: {error.filename or error}"
    if isinstance(error, ValueError):
        return f"Invalid value: {error}"
    return f"An unexpected error occurred: {type(error).__name__}: {error}"
