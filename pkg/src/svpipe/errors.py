"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes: usage/config problems exit 2, data and
format problems exit 3, numerical failures exit 4.
"""


class PipelineError(Exception):
    """Base class for all svpipe errors."""


class ShapeError(PipelineError, ValueError):
    """Array dimensions do not match what an operation requires."""


class InputError(PipelineError, ValueError):
    """Input data violates an operation's preconditions."""


class StateError(PipelineError, RuntimeError):
    """Cached state (e.g. stored activations) inconsistent with the model."""


class OptimizerError(PipelineError, RuntimeError):
    """Non-finite gradients or invalid optimizer configuration."""


class ModelError(PipelineError, RuntimeError):
    """Model parameters are invalid (non-PD covariance, failed self-check)."""


class ObjectiveError(PipelineError, ValueError):
    """A training objective cannot be evaluated on the given batch."""


class MetricError(PipelineError, ValueError):
    """Detection metrics need both trial classes present."""


class ConfigError(PipelineError, ValueError):
    """Bad configuration value or missing required setting."""


class FormatError(PipelineError, RuntimeError):
    """Corrupt or unsupported file content; carries a byte offset if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
