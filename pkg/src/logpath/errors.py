"""Exception hierarchy shared by the model, log, and matcher layers."""


class LogPathError(Exception):
    """Base class for every error raised by this package."""


class ModelParseError(LogPathError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ModelValidationError(LogPathError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class LogParseError(LogPathError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class LogValidationError(LogParseError):
    pass


class ContractError(LogPathError):
    """A precondition of an operation was violated by the caller."""


class UnknownTargetError(LogPathError):
    """A reflective or ICC target could not be resolved against the model."""


class NoMatchError(LogPathError):
    def __init__(self, message, deepest_index=0, budget_exceeded=False, visited_count=0):
        super().__init__(message)
        self.deepest_index = deepest_index
        self.budget_exceeded = budget_exceeded
        self.visited_count = visited_count


class CombineError(LogPathError):
    def __init__(self, message, segment_index):
        super().__init__(message)
        self.segment_index = segment_index


class GenerationError(LogPathError):
    pass
