"""Canonical sets of integers stored as sorted, disjoint, non-adjacent
inclusive intervals, and the address/MAC/time spaces built on them."""

import re
from bisect import bisect_right
from typing import ClassVar, Iterable, Iterator, NamedTuple

import netaddr

Interval = tuple[int, int]

_DOTTED_QUAD = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")

MAX_ADDRESS = 2 ** 32 - 1
NO_MAC = 2 ** 48
UNTIMED = 7 * 1440
MINUTES_PER_DAY = 1440


def canonical_intervals(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    """Sort, merge overlapping and adjacent intervals; drop empty ones."""
    ordered = sorted((lo, hi) for lo, hi in intervals if lo <= hi)
    merged: list[list[int]] = []
    for lo, hi in ordered:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return tuple((lo, hi) for lo, hi in merged)


class IntervalSet:
    """Immutable set of integers inside the UNIVERSE bounds."""
    UNIVERSE: ClassVar[Interval] = (0, MAX_ADDRESS)
    __slots__ = ("intervals", "_starts")

    def __init__(self, intervals: Iterable[Interval] = ()):
        canon = canonical_intervals(intervals)
        lo, hi = self.UNIVERSE
        if canon and (canon[0][0] < lo or canon[-1][1] > hi):
            raise ValueError(f"{type(self).__name__} interval outside [{lo}, {hi}]")
        self.intervals = canon
        self._starts = [start for start, _ in canon]

    @classmethod
    def full(cls):
        return cls([cls.UNIVERSE])

    @classmethod
    def empty(cls):
        return cls()

    @classmethod
    def single(cls, value: int):
        return cls([(value, value)])

    def is_empty(self) -> bool:
        return not self.intervals

    def is_full(self) -> bool:
        return self.intervals == (self.UNIVERSE,)

    def size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.intervals)

    def __contains__(self, value: int) -> bool:
        i = bisect_right(self._starts, value) - 1
        return i >= 0 and value <= self.intervals[i][1]

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.intervals == other.intervals

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.intervals))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({list(self.intervals)!r})"

    def union(self, other: "IntervalSet"):
        return type(self)(self.intervals + other.intervals)

    def intersection(self, other: "IntervalSet"):
        out = []
        i = j = 0
        a, b = self.intervals, other.intervals
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return type(self)(out)

    def complement(self):
        lo, hi = self.UNIVERSE
        out = []
        cursor = lo
        for start, end in self.intervals:
            if start > cursor:
                out.append((cursor, start - 1))
            cursor = end + 1
        if cursor <= hi:
            out.append((cursor, hi))
        return type(self)(out)

    def difference(self, other: "IntervalSet"):
        return self.intersection(other.complement())

    def issubset(self, other: "IntervalSet") -> bool:
        return self.difference(other).is_empty()

    def isdisjoint(self, other: "IntervalSet") -> bool:
        return self.intersection(other).is_empty()

    __or__ = union
    __and__ = intersection
    __sub__ = difference
    __le__ = issubset


class Cidr(NamedTuple):
    network: int
    prefixlen: int

    @property
    def first(self) -> int:
        return self.network

    @property
    def last(self) -> int:
        return self.network + (1 << (32 - self.prefixlen)) - 1

    def __str__(self) -> str:
        return f"{format_ip(self.network)}/{self.prefixlen}"


def parse_ip(text: str) -> int:
    """Strict dotted-quad to integer; raises ValueError."""
    text = text.strip()
    if not _DOTTED_QUAD.match(text):
        raise ValueError(f"invalid IPv4 address: {text!r}")
    try:
        return int(netaddr.IPAddress(text, 4))
    except netaddr.AddrFormatError as e:
        raise ValueError(f"invalid IPv4 address: {text!r}") from e


def format_ip(value: int) -> str:
    return str(netaddr.IPAddress(value, 4))


def prefix_of_mask(mask: int) -> int:
    """Prefix length of a contiguous netmask; ValueError otherwise."""
    inverted = ~mask & MAX_ADDRESS
    if inverted & (inverted + 1):
        raise ValueError(f"non-contiguous netmask {format_ip(mask)}")
    return 32 - inverted.bit_length()


def mask_of_prefix(prefixlen: int) -> int:
    return (MAX_ADDRESS << (32 - prefixlen)) & MAX_ADDRESS


def parse_cidr(text: str) -> Cidr:
    """`a.b.c.d` or `a.b.c.d/n`, canonicalized to the network base."""
    address, _, prefix = text.strip().partition("/")
    value = parse_ip(address)
    if prefix:
        if not prefix.isdigit() or int(prefix) > 32:
            raise ValueError(f"invalid prefix length in {text!r}")
        prefixlen = int(prefix)
    else:
        prefixlen = 32
    return Cidr(value & mask_of_prefix(prefixlen), prefixlen)


def interval_to_cidrs(first: int, last: int) -> list[Cidr]:
    """Minimal ascending list of CIDR blocks covering [first, last]."""
    blocks = netaddr.iprange_to_cidrs(netaddr.IPAddress(first, 4), netaddr.IPAddress(last, 4))
    return sorted(Cidr(int(block.network), block.prefixlen) for block in blocks)


def parse_mac(text: str) -> int:
    try:
        return int(netaddr.EUI(text.strip()))
    except (netaddr.AddrFormatError, TypeError, ValueError) as e:
        raise ValueError(f"invalid MAC address: {text!r}") from e


def format_mac(value: int) -> str:
    return str(netaddr.EUI(value, dialect=netaddr.mac_unix_expanded))


class AddressSet(IntervalSet):
    """Set of IPv4 addresses."""
    UNIVERSE = (0, MAX_ADDRESS)
    __slots__ = ()

    @classmethod
    def from_cidr(cls, text: str) -> "AddressSet":
        block = parse_cidr(text)
        return cls([(block.first, block.last)])

    @classmethod
    def from_network(cls, address: int, netmask: int) -> "AddressSet":
        base = address & netmask
        return cls([(base, base | (~netmask & MAX_ADDRESS))])

    def to_cidrs(self) -> list[Cidr]:
        blocks = []
        for lo, hi in self.intervals:
            blocks.extend(interval_to_cidrs(lo, hi))
        return blocks

    def __str__(self) -> str:
        if self.is_empty():
            return "{}"
        parts = []
        for lo, hi in self.intervals:
            parts.append(format_ip(lo) if lo == hi else f"{format_ip(lo)}-{format_ip(hi)}")
        return "{" + ", ".join(parts) + "}"


class MacSet(IntervalSet):
    """Set of 48-bit MAC values plus the NO_MAC point for untagged packets."""
    UNIVERSE = (0, NO_MAC)
    __slots__ = ()


class TimeSet(IntervalSet):
    """Minute-of-week points (Mon 00:00 = 0) plus the UNTIMED point."""
    UNIVERSE = (0, UNTIMED)
    __slots__ = ()
