"""Canonical service sets: per IP protocol, a list of pairwise disjoint
boxes over that protocol's header dimensions."""

from typing import Iterable, Iterator, Mapping, Optional

from .types import ALL_TCP_FLAGS, PROTO_ICMP, PROTO_TCP, PROTO_UDP

Range = tuple[int, int]
Box = tuple[Range, ...]

PORTS: Range = (0, 65535)
FLAG_VALUES: Range = (0, ALL_TCP_FLAGS)
ICMP_VALUES: Range = (0, 255)

# header dimensions per protocol: tcp (sport, dport, flags), udp (sport, dport),
# icmp (type, code); every other protocol has none
DIMENSIONS: dict[int, Box] = {
    PROTO_TCP: (PORTS, PORTS, FLAG_VALUES),
    PROTO_UDP: (PORTS, PORTS),
    PROTO_ICMP: (ICMP_VALUES, ICMP_VALUES),
}
PROTOCOLS = range(256)


def full_box(protocol: int) -> Box:
    return DIMENSIONS.get(protocol, ())


def _intersect(a: Box, b: Box) -> Optional[Box]:
    out = []
    for (alo, ahi), (blo, bhi) in zip(a, b):
        lo, hi = max(alo, blo), min(ahi, bhi)
        if lo > hi:
            return None
        out.append((lo, hi))
    return tuple(out)


def _subtract(a: Box, b: Box) -> list[Box]:
    inter = _intersect(a, b)
    if inter is None:
        return [a]
    pieces = []
    rest = list(a)
    for dim, (ilo, ihi) in enumerate(inter):
        lo, hi = rest[dim]
        if lo < ilo:
            pieces.append(tuple(rest[:dim] + [(lo, ilo - 1)] + rest[dim + 1:]))
        if ihi < hi:
            pieces.append(tuple(rest[:dim] + [(ihi + 1, hi)] + rest[dim + 1:]))
        rest[dim] = (ilo, ihi)
    return pieces


def _boxes_minus(boxes: list[Box], others: Iterable[Box]) -> list[Box]:
    for other in others:
        boxes = [piece for box in boxes for piece in _subtract(box, other)]
        if not boxes:
            break
    return boxes


def flag_ranges(mask: int, value: int) -> list[Range]:
    """Flag values v in 0..63 with v & mask == value, as maximal runs."""
    matching = [v for v in range(ALL_TCP_FLAGS + 1) if v & mask == value]
    runs: list[list[int]] = []
    for v in matching:
        if runs and v == runs[-1][1] + 1:
            runs[-1][1] = v
        else:
            runs.append([v, v])
    return [(lo, hi) for lo, hi in runs]


class ServiceSet:
    """Immutable set of (protocol, header-point) values."""
    __slots__ = ("components",)

    def __init__(self, components: Mapping[int, Iterable[Box]] = ()):
        canon = {}
        for protocol, boxes in dict(components).items():
            disjoint: list[Box] = []
            for box in boxes:
                disjoint.extend(_boxes_minus([tuple(box)], disjoint))
            if disjoint:
                canon[protocol] = tuple(sorted(disjoint))
        self.components: dict[int, tuple[Box, ...]] = dict(sorted(canon.items()))

    @classmethod
    def universe(cls) -> "ServiceSet":
        return cls({p: [full_box(p)] for p in PROTOCOLS})

    @classmethod
    def empty(cls) -> "ServiceSet":
        return cls()

    @classmethod
    def ip(cls, protocol: int) -> "ServiceSet":
        return cls({protocol: [full_box(protocol)]})

    @classmethod
    def tcp(cls, sport: Range = PORTS, dport: Range = PORTS,
            flags_mask: int = 0, flags_set: int = 0) -> "ServiceSet":
        return cls({PROTO_TCP: [(sport, dport, run) for run in flag_ranges(flags_mask, flags_set)]})

    @classmethod
    def udp(cls, sport: Range = PORTS, dport: Range = PORTS) -> "ServiceSet":
        return cls({PROTO_UDP: [(sport, dport)]})

    @classmethod
    def icmp(cls, icmp_type: Optional[int] = None, icmp_code: Optional[int] = None) -> "ServiceSet":
        t = ICMP_VALUES if icmp_type is None else (icmp_type, icmp_type)
        c = ICMP_VALUES if icmp_code is None else (icmp_code, icmp_code)
        return cls({PROTO_ICMP: [(t, c)]})

    def boxes(self, protocol: int) -> tuple[Box, ...]:
        return self.components.get(protocol, ())

    def protocols(self) -> Iterator[int]:
        return iter(self.components)

    def is_empty(self) -> bool:
        return not self.components

    def contains(self, protocol: int, point: tuple[int, ...]) -> bool:
        for box in self.components.get(protocol, ()):
            if all(lo <= v <= hi for (lo, hi), v in zip(box, point)):
                return True
        return False

    def union(self, other: "ServiceSet") -> "ServiceSet":
        merged = {}
        for protocol in set(self.components) | set(other.components):
            mine = list(self.boxes(protocol))
            merged[protocol] = mine + _boxes_minus(list(other.boxes(protocol)), mine)
        return ServiceSet(merged)

    def intersection(self, other: "ServiceSet") -> "ServiceSet":
        out = {}
        for protocol in set(self.components) & set(other.components):
            pieces = [_intersect(a, b) for a in self.boxes(protocol) for b in other.boxes(protocol)]
            out[protocol] = [p for p in pieces if p is not None]
        return ServiceSet(out)

    def difference(self, other: "ServiceSet") -> "ServiceSet":
        return ServiceSet({
            protocol: _boxes_minus(list(boxes), other.boxes(protocol))
            for protocol, boxes in self.components.items()
        })

    def complement(self) -> "ServiceSet":
        return ServiceSet.universe().difference(self)

    def issubset(self, other: "ServiceSet") -> bool:
        return self.difference(other).is_empty()

    def is_universe(self) -> bool:
        return ServiceSet.universe().issubset(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ServiceSet):
            return NotImplemented
        return self.issubset(other) and other.issubset(self)

    __hash__ = None

    def __repr__(self) -> str:
        return f"ServiceSet({self.components!r})"
