from .config import config
from .errors import FwcompError, UnsupportedFeature
from .model import Firewall, ObjectDatabase, Platform
from .fwbxml import parse, parse_file, serialize, validate_schema
from .semantics import Packet, Verdict, VerdictAction, evaluate
from .analysis import Universe, detect_shadowing, equivalent, optimize
from .transform import capabilities, run_pipeline
from .backends import emit, interpret

__all__ = [
    'config', 'FwcompError', 'UnsupportedFeature', 'Firewall', 'ObjectDatabase', 'Platform',
    'parse', 'parse_file', 'serialize', 'validate_schema',
    'Packet', 'Verdict', 'VerdictAction', 'evaluate',
    'Universe', 'detect_shadowing', 'equivalent', 'optimize',
    'capabilities', 'run_pipeline', 'emit', 'interpret',
]
