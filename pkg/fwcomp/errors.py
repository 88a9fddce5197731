from typing import Optional


class FwcompError(Exception):
    """Base class for every error raised by fwcomp."""
    code: str = "error"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code

    def __str__(self) -> str:
        return self.message


# model
class UnknownId(FwcompError):
    code = "unknown-id"

    def __init__(self, object_id: str):
        super().__init__(f"Unknown object id: {object_id}")
        self.object_id = object_id


class WrongObjectType(FwcompError):
    code = "wrong-object-type"


class OpaqueSet(FwcompError):
    """The match set of an object is not known at compile time."""
    code = "opaque-set"


class CyclicGroup(FwcompError):
    code = "group-cycle"

    def __init__(self, chain: list[str]):
        super().__init__("Group reference cycle: " + " -> ".join(chain))
        self.chain = chain


class NonProductRegion(FwcompError):
    code = "non-product-region"


class InvalidTranslation(FwcompError):
    code = "nat-translation-not-single"


# fwbxml
class XmlError(FwcompError):
    code = "xml-malformed"


class SchemaError(FwcompError):
    code = "schema"


class DuplicateId(FwcompError):
    code = "duplicate-id"

    def __init__(self, object_id: str):
        super().__init__(f"Duplicate object id: {object_id}")
        self.object_id = object_id


class DanglingRef(FwcompError):
    code = "dangling-ref"

    def __init__(self, ref: str, location: str = ""):
        where = f" in {location}" if location else ""
        super().__init__(f"Reference to unknown id {ref}{where}")
        self.ref = ref
        self.location = location


class TableIoError(FwcompError):
    code = "table-io"


class TableParseError(FwcompError):
    code = "table-parse"

    def __init__(self, message: str, line: int, path: str = ""):
        super().__init__(f"{path or '<table>'}:{line}: {message}")
        self.line = line
        self.path = path


# analysis
class UniverseTooLarge(FwcompError):
    code = "universe-too-large"


# transform / backends
class UnsupportedFeature(FwcompError):
    """The target platform cannot express a construct used by the policy."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or f"Unsupported feature: {code}", code=code)


class UnknownTarget(FwcompError):
    code = "unknown-target"


class InvariantViolation(FwcompError):
    code = "invariant-violation"


class UnparseableScript(FwcompError):
    code = "unparseable-script"

    def __init__(self, line: str, line_number: int):
        super().__init__(f"line {line_number}: cannot parse {line!r}")
        self.line = line
        self.line_number = line_number


class PacketSyntaxError(FwcompError):
    code = "packet-syntax"
