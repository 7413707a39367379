from __future__ import annotations

import typing

class ModeMonitorError(RuntimeError):
    """Base class of every error raised by mode_monitor"""
    exit_code: int = 1

class ValidationError(ModeMonitorError):
    """Input or contract violation; the command line maps these to exit code 2"""
    exit_code = 2

class ComputationError(ModeMonitorError):
    exit_code = 1

class FormatError(ValidationError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset

class DataError(ValidationError):
    def __init__(self, message: str, records: typing.Sequence[int]):
        shown = ', '.join(str(index) for index in list(records)[:20])
        more = '' if len(records) <= 20 else f' (+{len(records) - 20} more)'
        super().__init__(f"{message}: records {shown}{more}")
        self.records = list(records)

class SchemaError(ValidationError):
    def __init__(self, message: str, line: None|int = None):
        super().__init__(message if line is None else f"{message} on line {line}")
        self.line = line

class DomainError(ValidationError):
    pass

class ConfigurationError(ValidationError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field

class ScenarioError(ValidationError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field

class AliasingError(ScenarioError):
    pass

class ProportionalityError(ValidationError):
    pass

class NumericError(ComputationError):
    def __init__(self, message: str, iterations: None|int = None):
        super().__init__(message if iterations is None else f"{message} after {iterations} iterations")
        self.iterations = iterations

class ResonanceError(ComputationError):
    def __init__(self, frequency: float):
        super().__init__(f"system matrix is singular at omega = {frequency:.9g} rad/s")
        self.frequency = frequency

class TrainingError(ComputationError):
    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
