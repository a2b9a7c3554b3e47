"""
Hierarquia de exceções do vaforge.

Todas herdam de VaForgeError (que é um ValueError), para que a CLI consiga
distinguir falha de validação (exit 2) de falha de execução (exit 1).
"""
from typing import List, Optional


class ValidationIssue:
    def __init__(self, line: Optional[int], record_id: str, reason: str, kind: str = "schema"):
        self.line = line
        self.record_id = record_id
        self.reason = reason
        self.kind = kind

    def to_dict(self) -> dict:
        return {"line": self.line, "id": self.record_id, "kind": self.kind, "reason": self.reason}

    def __repr__(self):
        return f"<ValidationIssue line={self.line} id='{self.record_id}' reason='{self.reason}'>"


class VaForgeError(ValueError):
    def __init__(self, message: str = "", issues: Optional[List[ValidationIssue]] = None):
        self.issues = list(issues or [])
        super().__init__(message)


class ConfigError(VaForgeError):
    pass


class ParseError(VaForgeError):
    def __init__(self, message: str, line: Optional[int] = None,
                 issues: Optional[List[ValidationIssue]] = None):
        self.line = line
        prefix = f"linha {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}", issues)


class SchemaError(VaForgeError):
    pass


class LabelError(VaForgeError):
    pass


class EmptyClassError(VaForgeError):
    pass


class FoldError(VaForgeError):
    pass


class EmptyVocabularyError(VaForgeError):
    pass


class DimensionError(VaForgeError):
    pass


class UnknownIndicatorError(VaForgeError):
    pass


class DegenerateDataError(VaForgeError):
    pass


class NonFiniteError(VaForgeError):
    pass


class StochasticityError(VaForgeError):
    pass


class DuplicateIdError(VaForgeError):
    pass


class AlignmentError(VaForgeError):
    pass


class EmptyEnsembleError(VaForgeError):
    pass


class DegenerateError(VaForgeError):
    pass


class AllTrialsPrunedError(VaForgeError):
    pass


class RangeError(VaForgeError):
    pass


class DegenerateGainError(VaForgeError):
    pass
