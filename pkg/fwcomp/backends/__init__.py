from typing import Mapping, Optional, Sequence, Union

from fwcomp.model.types import Platform
from fwcomp.semantics.packet import Packet, Verdict
from fwcomp.transform.capabilities import as_platform, capabilities
from fwcomp.transform.ir import FlatRule
from .base import BaseBackend, Script
from .iptables import IptablesBackend
from .ipfilter import IpfilterBackend
from .pf import PfBackend

BACKENDS = {
    Platform.IPTABLES: IptablesBackend,
    Platform.PF: PfBackend,
    Platform.IPFILTER: IpfilterBackend,
}
_instances = {}


def get_backend(target: Union[str, Platform]) -> BaseBackend:
    platform = as_platform(target)
    if platform not in _instances:
        _instances[platform] = BACKENDS[platform]()
    return _instances[platform]


def emit(target: Union[str, Platform], filter_ir: Sequence[FlatRule], nat_ir: Sequence[FlatRule] = ()) -> Script:
    return get_backend(target).emit(filter_ir, nat_ir)


def interpret(target: Union[str, Platform], script: Script, packet: Packet,
              bindings: Optional[Mapping[str, int]] = None) -> Verdict:
    return get_backend(target).interpret(script, packet, bindings)


__all__ = [
    "BACKENDS", "BaseBackend", "Script", "IptablesBackend", "PfBackend", "IpfilterBackend",
    "capabilities", "emit", "get_backend", "interpret",
]
