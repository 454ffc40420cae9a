"""Exception hierarchy shared by the pipeline.

Every error carries the process exit code the command line maps it to.
"""


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 3


class ParameterDomainError(ConfigError):
    pass


class SchemaError(PipelineError):
    exit_code = 4

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(f"field '{field}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class StructuralError(PipelineError):
    exit_code = 4


class NumericalError(PipelineError):
    exit_code = 5


class RankDeficientError(NumericalError):
    pass


class OraclePrecisionError(NumericalError):
    def __init__(self, message, required_draws=None):
        self.required_draws = required_draws
        super().__init__(message)


class DesignError(PipelineError):
    exit_code = 6


class OverwriteRefusedError(PipelineError):
    exit_code = 7
