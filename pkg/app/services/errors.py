from typing import Optional


class ManifoldError(Exception):
    """Base class for every failure raised by the numerical services"""


class ArgumentError(ManifoldError, ValueError):
    pass


class IngestError(ManifoldError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"Cannot read {self.path}: {reason}")


class StructuralError(ManifoldError):
    pass


class ParseError(ManifoldError):
    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SplitError(ManifoldError):
    pass


class EmbeddingError(ManifoldError):
    pass


class FitError(ManifoldError):
    pass


class DegenerateRegularizerError(ManifoldError):
    pass


class ScaleSelectionError(ManifoldError):
    pass


class ExtensionError(ManifoldError):
    pass


class SslError(ManifoldError):
    pass


class ReportError(ManifoldError):
    pass
