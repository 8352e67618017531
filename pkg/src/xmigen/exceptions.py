from __future__ import annotations


class XmigenError(Exception):
    """Base class for every error raised by this package."""


# -- metamodel ---------------------------------------------------------------


class EcoreError(XmigenError):
    pass


class MalformedXml(EcoreError):
    pass


class MissingNsURI(EcoreError):
    pass


class UnresolvableTypeRef(EcoreError):
    def __init__(self, href: str, where: str = ""):
        self.href = href
        msg = f"cannot resolve eType reference {href!r}"
        if where:
            msg += f" (in {where})"
        super().__init__(msg)


class InheritanceCycle(EcoreError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("inheritance cycle: " + " -> ".join(cycle))


class DuplicateName(EcoreError):
    pass


# -- conceptual instance model ----------------------------------------------


class CimError(XmigenError):
    code = "CimError"


class NoJsonFound(CimError):
    code = "NoJsonFound"


class InvalidJson(CimError):
    code = "InvalidJson"


class NotAJsonObject(CimError):
    code = "NotAJsonObject"


# -- XMI ---------------------------------------------------------------------


class XmiError(XmigenError):
    pass


class MalformedXmi(XmiError, MalformedXml):
    pass


class NamespaceMismatch(XmiError):
    pass


class UnknownElementClass(XmiError):
    pass


class UnresolvableFragmentPath(XmiError):
    pass


class XmiConformanceError(XmiError):
    """The document is well-formed but violates the metamodel."""


class NoNamespace(XmiError):
    pass


# -- LLM ---------------------------------------------------------------------


class LlmError(XmigenError):
    pass


class ConfigError(LlmError):
    pass


class TransportError(LlmError):
    pass


class LlmTimeout(TransportError):
    pass


class HttpStatusError(LlmError):
    def __init__(self, status_code: int, body: str):
        self.status_code = status_code
        self.body = body[:500]
        super().__init__(f"HTTP {status_code}: {self.body}")


class EmptyCompletion(LlmError):
    pass


class GenerationFailed(LlmError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


# -- evaluation --------------------------------------------------------------


class DatasetLayoutError(XmigenError):
    pass
