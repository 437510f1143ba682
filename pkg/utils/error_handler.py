import json
import logging
import sys
from functools import wraps
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

DEFAULT_LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class NavError(Exception):
    """Base error class for the navigation toolkit"""
    def __init__(self, message: str, exit_code: int = EXIT_RUNTIME, error_code: str = None):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code or f"ERR_{exit_code}"

    def details(self) -> Dict[str, Any]:
        return {}

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable error record for harnesses"""
        record = {
            'success': False,
            'error': self.message,
            'error_code': self.error_code,
            'exit_code': self.exit_code,
        }
        record.update(self.details())
        return record

    def __reduce__(self):
        # subclasses take extra constructor arguments; rebuild from state across processes
        return _rebuild_error, (self.__class__, dict(self.__dict__))


class DegenerateVector(NavError):
    """Zero-norm vector where a direction is required"""
    def __init__(self, message: str = "Zero-norm vector has no direction"):
        super().__init__(message, EXIT_RUNTIME, "DEGENERATE_VECTOR")


class ShapeError(NavError):
    def __init__(self, message: str, expected: Any = None, actual: Any = None):
        super().__init__(message, EXIT_RUNTIME, "SHAPE_ERROR")
        self.expected = expected
        self.actual = actual

    def details(self) -> Dict[str, Any]:
        return {'expected': _jsonable(self.expected), 'actual': _jsonable(self.actual)}


class InvalidImage(NavError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_RUNTIME, "INVALID_IMAGE")


class InvalidKernel(NavError):
    def __init__(self, message: str, kernel: int = None):
        super().__init__(message, EXIT_RUNTIME, "INVALID_KERNEL")
        self.kernel = kernel

    def details(self) -> Dict[str, Any]:
        return {'kernel': self.kernel}


class BatchShapeError(NavError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_RUNTIME, "BATCH_SHAPE_ERROR")


class EmptySample(NavError):
    def __init__(self, message: str = "Sample is empty"):
        super().__init__(message, EXIT_RUNTIME, "EMPTY_SAMPLE")


class NoNavigableViews(NavError):
    def __init__(self, message: str = "Navigable view set is empty"):
        super().__init__(message, EXIT_RUNTIME, "NO_NAVIGABLE_VIEWS")


class NavigableNeedsNoThreshold(NavError):
    """Rank 0 means a navigable view, which is always fully processed"""
    def __init__(self, message: str = "Rank 0 views are navigable and take no exit threshold"):
        super().__init__(message, EXIT_RUNTIME, "NAVIGABLE_NEEDS_NO_THRESHOLD")


class RangeError(NavError):
    def __init__(self, message: str, value: Any = None):
        super().__init__(message, EXIT_RUNTIME, "RANGE_ERROR")
        self.value = value

    def details(self) -> Dict[str, Any]:
        return {'value': _jsonable(self.value)}


class NotADistribution(NavError):
    def __init__(self, message: str, total: float = None):
        super().__init__(message, EXIT_RUNTIME, "NOT_A_DISTRIBUTION")
        self.total = total

    def details(self) -> Dict[str, Any]:
        return {'total': self.total}


class ConvergenceError(NavError):
    def __init__(self, message: str, residual: float, iterations: int = None):
        super().__init__(message, EXIT_RUNTIME, "CONVERGENCE_ERROR")
        self.residual = residual
        self.iterations = iterations

    def details(self) -> Dict[str, Any]:
        return {'residual': self.residual, 'iterations': self.iterations}


class GenError(NavError):
    """Environment generation parameters cannot be satisfied"""
    def __init__(self, message: str):
        super().__init__(message, EXIT_CONFIG, "GEN_ERROR")


class ConfigError(NavError):
    def __init__(self, message: str, field: str = None):
        super().__init__(message, EXIT_CONFIG, "CONFIG_ERROR")
        self.field = field

    def details(self) -> Dict[str, Any]:
        return {'field': self.field}


class UsageError(NavError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_CONFIG, "USAGE_ERROR")


class InvalidEpisode(NavError):
    def __init__(self, message: str, start: int = None, goal: int = None):
        super().__init__(message, EXIT_RUNTIME, "INVALID_EPISODE")
        self.start = start
        self.goal = goal

    def details(self) -> Dict[str, Any]:
        return {'start': self.start, 'goal': self.goal}


class PolicyDegenerate(NavError):
    def __init__(self, message: str = "All navigable embeddings are zero"):
        super().__init__(message, EXIT_RUNTIME, "POLICY_DEGENERATE")


def _rebuild_error(cls, state: Dict[str, Any]) -> "NavError":
    error = cls.__new__(cls)
    Exception.__init__(error, state.get('message'))
    error.__dict__.update(state)
    return error


def _jsonable(value: Any) -> Any:
    if isinstance(value, tuple):
        return list(value)
    return value


def error_record(error: Exception) -> Dict[str, Any]:
    if isinstance(error, NavError):
        return error.to_record()
    return {
        'success': False,
        'error': 'Internal error',
        'error_code': 'INTERNAL_ERROR',
        'exit_code': EXIT_RUNTIME,
        'detail': str(error),
    }


def handle_errors(f):
    """Decorator for CLI commands: log, emit a JSON error record on stderr, return the exit code"""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            result = f(*args, **kwargs)
            return EXIT_OK if result is None else result
        except NavError as e:
            logger.error(f"Command failed: {e.message}", exc_info=True)
            sys.stderr.write(json.dumps(e.to_record(), sort_keys=True) + "\n")
            return e.exit_code
        except Exception as e:
            logger.error(f"Unexpected error: {str(e)}", exc_info=True)
            sys.stderr.write(json.dumps(error_record(e), sort_keys=True) + "\n")
            return EXIT_RUNTIME
    return decorated_function


def setup_logging(level: str = "INFO", log_file: Optional[str] = None,
                  fmt: str = DEFAULT_LOG_FORMAT, max_size: int = 10 * 1024 * 1024,
                  backup_count: int = 5) -> None:
    """Configure the root logger once; logs go to stderr and optionally a rotating file"""
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(RotatingFileHandler(log_file, maxBytes=max_size, backupCount=backup_count))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=fmt,
        handlers=handlers,
        force=True,
    )


def validate_required_fields(data: Dict[str, Any], required_fields: list) -> None:
    """Validate that required fields are present in data"""
    missing_fields = []
    for field in required_fields:
        if field not in data or data[field] is None or data[field] == "":
            missing_fields.append(field)

    if missing_fields:
        raise ConfigError(f"Missing required fields: {', '.join(missing_fields)}",
                          missing_fields[0])
