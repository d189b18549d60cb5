from typing import Dict, List, Optional

import numpy as np


class CensoredGlmError(Exception):
    exit_code = 1


class DataParseError(CensoredGlmError):
    exit_code = 2

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EmptyDatasetError(DataParseError):
    pass


class SchemaError(CensoredGlmError):
    exit_code = 3

    def __init__(self, message: str, fields: Optional[Dict[str, List[str]]] = None):
        self.fields = fields or {}
        if self.fields:
            details = "; ".join(
                f"{name}: {', '.join(str(m) for m in messages)}"
                for name, messages in sorted(self.fields.items())
            )
            message = f"{message} ({details})"
        super().__init__(message)


class EstimationError(CensoredGlmError):
    exit_code = 4


class SingularMatrixError(EstimationError):
    pass


class DomainError(EstimationError):
    pass


class NoCompleteCasesError(EstimationError):
    pass


class NonIdentifiableError(EstimationError):
    pass


class CalibrationError(EstimationError):
    pass


class ConvergenceError(CensoredGlmError):
    exit_code = 5

    def __init__(self, message: str, last_iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SeparationError(ConvergenceError):
    pass


class DivergenceError(ConvergenceError):
    pass
