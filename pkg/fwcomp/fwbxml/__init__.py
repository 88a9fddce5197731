from .diagnostic import Diagnostic, Severity, has_errors
from .address_table import load_address_table, resolve_table_path
from .parser import parse, parse_file
from .serializer import serialize
from .validator import validate_schema

__all__ = [
    "Diagnostic", "Severity", "has_errors",
    "load_address_table", "resolve_table_path",
    "parse", "parse_file", "serialize", "validate_schema",
]
