"""Exception types shared across the package.

The command line layer maps these onto process exit codes, so library code
should raise the most specific type that applies.
"""


class PolymerlabError(Exception):
    """Base class for all package errors."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = dict(context)


class ValidationError(PolymerlabError):
    """Bad parameter values or malformed configuration."""


class CapacityError(PolymerlabError):
    """A requested computation exceeds the configured size budget."""


class InfeasibleLayerError(PolymerlabError):
    """A layer of the environment admits no path through it.

    ``context['layer']`` names the first offending layer.
    """

    def __init__(self, layer, message=None, **context):
        if message is None:
            message = f"no admissible site in layer {layer}"
        super().__init__(message, layer=layer, **context)
        self.layer = layer
