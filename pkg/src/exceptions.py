class AppBaseException(Exception):
    """Base class for all application-specific exceptions."""
    exit_code = 1

    def __init__(self, message, *args, **kwargs):
        self.message = message
        super().__init__(message, *args, **kwargs)

    def __str__(self):
        return f"{self.__class__.__name__}: {self.message}"


class ConfigError(AppBaseException):
    """Raised when configuration is invalid or missing."""
    exit_code = 2

    def __init__(self, section=None, key=None, value=None, message=None):
        if not message:
            if section and key:
                message = f"Invalid config value for [{section}]->{key}"
                if value:
                    message += f" = '{value}'"
            else:
                message = "Configuration error"
        super().__init__(message)
        self.section = section
        self.key = key


class ValidationError(AppBaseException):
    """Raised when a domain invariant or a config field is violated."""
    exit_code = 2

    def __init__(self, field, reason):
        super().__init__(f"Invalid '{field}': {reason}")
        self.field = field
        self.reason = reason


class DegenerateReferenceError(ValidationError):
    """Raised when a reference sample is too small to divide by."""

    def __init__(self, subcarrier, frame, magnitude):
        super().__init__(
            "reference",
            f"magnitude {magnitude:.3e} at subcarrier {subcarrier}, frame {frame}",
        )
        self.subcarrier = subcarrier
        self.frame = frame
        self.magnitude = magnitude


class ContractError(ValidationError):
    """Raised when a tensor does not have the shape an operation expects."""

    def __init__(self, operation, expected, actual):
        super().__init__("shape", f"{operation} expects {expected}, got {actual}")
        self.operation = operation
        self.expected = expected
        self.actual = actual


class CorruptTraceError(AppBaseException):
    """Raised for unreadable trace, sample or model files."""
    exit_code = 3

    def __init__(self, path, reason):
        super().__init__(f"Corrupt input '{path}': {reason}")
        self.path = path
        self.reason = reason


class InsufficientDataError(AppBaseException):
    """Raised when there is not enough data for an operation."""
    exit_code = 4

    def __init__(self, operation, required, actual):
        super().__init__(f"{operation} needs at least {required}, got {actual}")
        self.operation = operation
        self.required = required
        self.actual = actual


class NoUsableSubcarrierError(InsufficientDataError):
    """Raised when every subcarrier is masked or excluded."""

    def __init__(self, candidates=0):
        super().__init__("subcarrier selection", "1 usable subcarrier", candidates)


class BandResolutionError(InsufficientDataError):
    """Raised when no FFT bin falls inside the band."""

    def __init__(self, low_hz, high_hz, resolution_hz):
        super().__init__(
            "spectral concentration",
            f"a bin inside [{low_hz}, {high_hz}] Hz",
            f"bin spacing {resolution_hz:.4f} Hz",
        )


class CalibrationError(InsufficientDataError):
    """Raised when the motion-free baseline is missing or too short."""

    def __init__(self, required_s, actual_s):
        super().__init__("energy threshold calibration", f"{required_s} s baseline", f"{actual_s} s")


class FileSystemError(AppBaseException):
    """Raised for filesystem-related errors."""

    def __init__(self, operation, path, reason):
        message = f"File error during {operation} '{path}': {reason}"
        super().__init__(message)
        self.path = path
        self.operation = operation
