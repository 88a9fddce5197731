from dataclasses import dataclass
from enum import Enum
from typing import Optional


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """A finding about a document; errors prevent compilation, warnings do not."""
    severity: Severity
    code: str
    location: str
    message: str
    object_id: Optional[str] = None

    @classmethod
    def error(cls, code: str, location: str, message: str, object_id: Optional[str] = None) -> "Diagnostic":
        return cls(Severity.ERROR, code, location, message, object_id)

    @classmethod
    def warning(cls, code: str, location: str, message: str, object_id: Optional[str] = None) -> "Diagnostic":
        return cls(Severity.WARNING, code, location, message, object_id)

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def __str__(self) -> str:
        where = self.location
        if self.object_id:
            where += f"[@id={self.object_id}]"
        return f"{self.severity.value}: {self.code}: {where}: {self.message}"


def has_errors(diagnostics) -> bool:
    return any(d.is_error for d in diagnostics)
