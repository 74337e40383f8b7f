"""Error taxonomy shared by the library and the CLI.

Exit codes: config failures exit 2, data failures 3, runtime failures 4.
Library-level misuse (bad arguments to a pure function) raises plain
ValueError and is not expected to surface through the CLI.
"""


class DefectMatchError(Exception):
    """Base class for errors the CLI turns into exit codes."""

    exit_code = 4


class ConfigError(DefectMatchError):
    """Invalid configuration value or combination."""

    exit_code = 2


class DataError(DefectMatchError):
    """Malformed or inconsistent dataset input."""

    exit_code = 3


class PipelineError(DefectMatchError):
    """A pipeline stage failed at runtime."""

    exit_code = 4

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
