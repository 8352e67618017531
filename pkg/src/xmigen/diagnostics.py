"""Diagnostics shared by the parsers, the instance compiler and the evaluator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Optional


class Severity(str, Enum):
    WARNING = "warning"
    ERROR = "error"


class Code(str, Enum):
    # metamodel loading
    UNSUPPORTED_CONSTRUCT = "UnsupportedConstruct"
    UNKNOWN_DATA_TYPE = "UnknownDataType"
    # conceptual instance model parsing
    UNKNOWN_KEY = "UnknownKey"
    ALIASED_SECTION = "AliasedSection"
    MISSING_TYPE_FIELD = "MissingTypeField"
    MALFORMED_OBJECT = "MalformedObject"
    MALFORMED_ATTRIBUTE = "MalformedAttribute"
    MALFORMED_LINK = "MalformedLink"
    LIST_VALUE_EXPANDED = "ListValueExpanded"
    NULL_VALUE = "NullValue"
    DANGLING_TARGET_ID = "DanglingTargetId"
    SELF_COMPOSITION = "SelfComposition"
    # compilation
    UNKNOWN_CLASS = "UnknownClass"
    ABSTRACT_CLASS = "AbstractClass"
    OWNER_MISSING = "OwnerMissing"
    UNKNOWN_ATTRIBUTE = "UnknownAttribute"
    TYPE_MISMATCH_DECLARED = "TypeMismatchDeclared"
    VALUE_COERCION_FAILED = "ValueCoercionFailed"
    UPPER_BOUND_EXCEEDED = "UpperBoundExceeded"
    LOWER_BOUND_VIOLATED = "LowerBoundViolated"
    UNKNOWN_REFERENCE = "UnknownReference"
    KIND_MISMATCH = "KindMismatch"
    CLASS_NAME_MISMATCH = "ClassNameMismatch"
    DANGLING_TARGET = "DanglingTarget"
    TYPE_NON_CONFORMING = "TypeNonConforming"
    SECOND_CONTAINER = "SecondContainer"
    CONTAINMENT_CYCLE = "ContainmentCycle"
    DUPLICATE_LINK = "DuplicateLink"
    # evaluation
    AMBIGUOUS_OBJECT_KEY = "AmbiguousObjectKey"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: Code
    detail: str
    instance_id: Optional[str] = None
    feature_name: Optional[str] = None
    # position of the offending entry within its CIM section
    index: Optional[int] = None

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def to_dict(self) -> dict:
        return {
            "severity": self.severity.value,
            "code": self.code.value,
            "instanceId": self.instance_id,
            "featureName": self.feature_name,
            "index": self.index,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostic":
        return cls(
            severity=Severity(data["severity"]),
            code=Code(data["code"]),
            detail=data.get("detail", ""),
            instance_id=data.get("instanceId"),
            feature_name=data.get("featureName"),
            index=data.get("index"),
        )

    def __str__(self) -> str:
        where = ""
        if self.instance_id is not None:
            where = f" [{self.instance_id}"
            if self.feature_name is not None:
                where += f".{self.feature_name}"
            where += "]"
        return f"{self.severity.value}: {self.code.value}{where}: {self.detail}"


def warning(code: Code, detail: str, **where) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, detail, **where)


def error(code: Code, detail: str, **where) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, detail, **where)


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


def write_jsonl(diagnostics: Iterable[Diagnostic], fp: IO[str]) -> None:
    """Write one JSON object per line, in emission order."""
    for diag in diagnostics:
        fp.write(json.dumps(diag.to_dict(), sort_keys=True) + "\n")
