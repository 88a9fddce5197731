from typing import List, Union

from fwcomp.model.intervals import AddressSet, Cidr, interval_to_cidrs
from fwcomp.model.objects import AddressRange


def range_to_cidrs(address_range: Union[AddressRange, tuple]) -> List[Cidr]:
    """Minimal ascending list of CIDR blocks whose union is the range."""
    if isinstance(address_range, AddressRange):
        first, last = address_range.first, address_range.last
    else:
        first, last = address_range
    if first > last:
        raise ValueError(f"range start {first} after end {last}")
    return interval_to_cidrs(first, last)


def set_to_cidrs(addresses: AddressSet) -> List[Cidr]:
    return [block for lo, hi in addresses for block in range_to_cidrs((lo, hi))]
