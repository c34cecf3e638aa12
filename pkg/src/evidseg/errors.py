"""Exception types shared across the package."""


class EvidsegError(Exception):
    """Base class for all package-specific errors."""


class InvalidEvidence(EvidsegError):
    """Evidence values must be finite and non-negative."""


class DegenerateOpinion(EvidsegError):
    """Opinion with zero uncertainty cannot be mapped back to Dirichlet parameters."""


class TotalConflict(EvidsegError):
    """Two opinions are in (near-)total conflict; the fusion normalizer is undefined."""


class EmptyFusion(EvidsegError):
    """Fusion or phase-wise reduction called with no operands."""


class ShapeError(EvidsegError):
    """Array arguments have incompatible shapes."""


class DomainError(EvidsegError):
    """Scalar argument outside the function's domain."""


class EmptyInput(EvidsegError):
    """Metric aggregation called with no records."""


class DegenerateCorrelation(EvidsegError):
    """Correlation undefined for constant or too-short inputs."""


class ConfigError(EvidsegError):
    """Invalid configuration value or CLI argument."""


class ParseError(EvidsegError):
    """Malformed input file."""


class GraphError(EvidsegError):
    """Autodiff graph misuse, e.g. optimizer step before any backward pass."""
