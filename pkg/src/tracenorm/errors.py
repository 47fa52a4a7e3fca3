"""Exception types surfaced to the command line with distinct exit codes."""


class FormatError(ValueError):
    """Input file does not follow the expected text/WAV/manifest format."""


class DimensionError(ValueError):
    """Sample shapes disagree. ``index`` names the offending sample, if known."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
