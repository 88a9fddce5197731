from typing import Union

from fwcomp.errors import UnknownTarget
from fwcomp.model.types import Platform
from .ir import Capabilities, DefaultPolicy, MatchStrategy, NatOrder

CAPABILITIES = {
    Platform.IPTABLES: Capabilities(
        match_strategy=MatchStrategy.FIRST,
        default_policy=DefaultPolicy.CONFIGURABLE,
        nat_order=NatOrder.SPLIT_DNAT_SNAT,
        supports_single_negation=True,
        supports_group_negation=False,
        supports_address_ranges=True,
        supports_dynamic_iface_address=False,
        supports_time=True,
        supports_mac=True,
        supports_range_negation=False,
    ),
    Platform.PF: Capabilities(
        match_strategy=MatchStrategy.LAST_WITH_QUICK,
        default_policy=DefaultPolicy.PASS,
        nat_order=NatOrder.NAT_FIRST,
        supports_single_negation=True,
        supports_group_negation=True,
        supports_address_ranges=False,
        supports_dynamic_iface_address=True,
        supports_time=False,
        supports_mac=False,
        supports_deploy_tables=True,
    ),
    Platform.IPFILTER: Capabilities(
        match_strategy=MatchStrategy.LAST_WITH_QUICK,
        default_policy=DefaultPolicy.PASS,
        nat_order=NatOrder.NAT_FIRST,
        supports_single_negation=True,
        supports_group_negation=False,
        supports_address_ranges=False,
        supports_dynamic_iface_address=True,
        supports_time=False,
        supports_mac=False,
        supports_nat_exclusion=False,
    ),
}


def as_platform(target: Union[str, Platform]) -> Platform:
    try:
        return Platform(target)
    except ValueError:
        choices = ", ".join(p.value for p in Platform)
        raise UnknownTarget(f"Unknown target: {target}. Available: {choices}") from None


def capabilities(target: Union[str, Platform]) -> Capabilities:
    """Fixed capability record of a target."""
    return CAPABILITIES[as_platform(target)]
