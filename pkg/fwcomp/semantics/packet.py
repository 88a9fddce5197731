from dataclasses import dataclass, field, replace
from datetime import date as Date
from enum import Enum
from typing import Optional, Tuple

from fwcomp.errors import PacketSyntaxError
from fwcomp.model.intervals import MINUTES_PER_DAY, UNTIMED, format_ip, format_mac, parse_ip, parse_mac
from fwcomp.model.types import PROTO_ICMP, PROTO_TCP, PROTO_UDP, PROTOCOL_NAMES, Direction, TcpFlag, Weekday, protocol_number

DIRECTIONS = {"in": Direction.INBOUND, "inbound": Direction.INBOUND,
              "out": Direction.OUTBOUND, "outbound": Direction.OUTBOUND}
REQUIRED_KEYS = ("proto", "src", "dst", "iface", "dir")
KNOWN_KEYS = REQUIRED_KEYS + ("sport", "dport", "type", "code", "flags", "mac", "day", "time", "date")


@dataclass(frozen=True)
class Timestamp:
    """Arrival time: weekday and minute of day, plus the calendar date when known."""
    weekday: Weekday
    minute: int
    date: Optional[Date] = None

    def __post_init__(self):
        if not 0 <= self.minute < MINUTES_PER_DAY:
            raise ValueError(f"minute of day out of range: {self.minute}")
        if self.date is not None and Weekday.from_index(self.date.weekday()) is not self.weekday:
            raise ValueError(f"{self.date} is not a {self.weekday.value}")

    @classmethod
    def on(cls, day: Date, minute: int) -> "Timestamp":
        return cls(Weekday.from_index(day.weekday()), minute, day)

    @property
    def minute_of_week(self) -> int:
        return self.weekday.index * MINUTES_PER_DAY + self.minute

    def __str__(self) -> str:
        text = f"day={self.weekday.value} time={self.minute // 60:02d}:{self.minute % 60:02d}"
        return f"{text} date={self.date.isoformat()}" if self.date else text


@dataclass(frozen=True)
class Packet:
    """Simulated IPv4 header as seen by the firewall.

    Port fields only mean something for tcp/udp, type/code only for icmp.
    """
    src_ip: int
    dst_ip: int
    protocol: int
    interface: str
    direction: Direction
    src_port: int = 0
    dst_port: int = 0
    icmp_type: int = 0
    icmp_code: int = 0
    tcp_flags: int = 0
    src_mac: Optional[int] = None
    timestamp: Optional[Timestamp] = None

    def __post_init__(self):
        if self.direction is Direction.BOTH:
            raise ValueError("a packet travels in exactly one direction")
        if not 0 <= self.protocol <= 255:
            raise ValueError(f"protocol out of range: {self.protocol}")

    def service_point(self) -> Tuple[int, ...]:
        """Coordinates of the packet in its protocol's ServiceSet dimensions."""
        if self.protocol == PROTO_TCP:
            return self.src_port, self.dst_port, self.tcp_flags
        if self.protocol == PROTO_UDP:
            return self.src_port, self.dst_port
        if self.protocol == PROTO_ICMP:
            return self.icmp_type, self.icmp_code
        return ()

    @property
    def has_ports(self) -> bool:
        return self.protocol in (PROTO_TCP, PROTO_UDP)

    @property
    def time_point(self) -> int:
        return UNTIMED if self.timestamp is None else self.timestamp.minute_of_week

    def with_fields(self, **changes) -> "Packet":
        return replace(self, **changes)

    @classmethod
    def parse(cls, literal: str) -> "Packet":
        """Parse `proto=udp src=10.0.0.5 dst=10.86.81.7 sport=50 dport=91 iface=if0 dir=in [day=Mon time=13:30]`."""
        values = {}
        for token in literal.split():
            key, sep, value = token.partition("=")
            if not sep or not value:
                raise PacketSyntaxError(f"expected key=value, got {token!r}")
            if key not in KNOWN_KEYS:
                raise PacketSyntaxError(f"unknown packet field {key!r}")
            values[key] = value
        missing = [key for key in REQUIRED_KEYS if key not in values]
        if missing:
            raise PacketSyntaxError(f"packet literal lacks {', '.join(missing)}")
        try:
            return cls._from_values(values)
        except (ValueError, KeyError) as e:
            raise PacketSyntaxError(f"invalid packet literal {literal!r}: {e}") from e

    @classmethod
    def _from_values(cls, values: dict) -> "Packet":
        protocol = protocol_number(values["proto"])
        direction = DIRECTIONS[values["dir"].lower()]

        def number(key: str, hi: int) -> int:
            value = int(values.get(key, 0))
            if not 0 <= value <= hi:
                raise ValueError(f"{key}={value} out of range")
            return value

        flags = 0
        for name in filter(None, values.get("flags", "").split(",")):
            flags |= TcpFlag[name.upper()]
        return cls(
            src_ip=parse_ip(values["src"]),
            dst_ip=parse_ip(values["dst"]),
            protocol=protocol,
            interface=values["iface"],
            direction=direction,
            src_port=number("sport", 65535),
            dst_port=number("dport", 65535),
            icmp_type=number("type", 255),
            icmp_code=number("code", 255),
            tcp_flags=flags,
            src_mac=parse_mac(values["mac"]) if "mac" in values else None,
            timestamp=cls._timestamp(values),
        )

    @staticmethod
    def _timestamp(values: dict) -> Optional[Timestamp]:
        if not {"day", "time", "date"} & set(values):
            return None
        hours, _, minutes = values.get("time", "00:00").partition(":")
        minute = int(hours) * 60 + int(minutes or 0)
        if "date" in values:
            stamp = Timestamp.on(Date.fromisoformat(values["date"]), minute)
            if "day" in values and Weekday(values["day"].capitalize()) is not stamp.weekday:
                raise ValueError(f"date {values['date']} is not a {values['day']}")
            return stamp
        if "day" not in values:
            raise ValueError("time needs a day or a date")
        return Timestamp(Weekday(values["day"].capitalize()), minute)

    def __str__(self) -> str:
        proto = PROTOCOL_NAMES.get(self.protocol, str(self.protocol))
        parts = [f"proto={proto}", f"src={format_ip(self.src_ip)}", f"dst={format_ip(self.dst_ip)}"]
        if self.has_ports:
            parts += [f"sport={self.src_port}", f"dport={self.dst_port}"]
        if self.protocol == PROTO_ICMP:
            parts += [f"type={self.icmp_type}", f"code={self.icmp_code}"]
        if self.protocol == PROTO_TCP and self.tcp_flags:
            parts.append("flags=" + ",".join(f.name for f in TcpFlag if self.tcp_flags & f))
        parts += [f"iface={self.interface}", "dir=" + ("in" if self.direction is Direction.INBOUND else "out")]
        if self.src_mac is not None:
            parts.append(f"mac={format_mac(self.src_mac)}")
        if self.timestamp is not None:
            parts.append(str(self.timestamp))
        return " ".join(parts)


class VerdictAction(str, Enum):
    ACCEPT = "Accept"
    DENY = "Deny"
    REJECT = "Reject"
    DEFAULT_DROP = "DefaultDrop"

    @property
    def accepted(self) -> bool:
        return self is VerdictAction.ACCEPT


@dataclass(frozen=True)
class Verdict:
    """Decision for one packet; matched_rule is absent exactly for DefaultDrop."""
    action: VerdictAction
    egress_packet: Packet
    matched_rule: Optional[int] = None
    counters_hit: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "counters_hit", tuple(self.counters_hit))
        if (self.action is VerdictAction.DEFAULT_DROP) != (self.matched_rule is None):
            raise ValueError("DefaultDrop verdicts, and only those, have no matched rule")

    def __str__(self) -> str:
        text = self.action.value
        if self.matched_rule is not None:
            text += f" (rule {self.matched_rule})"
        if self.counters_hit:
            text += " counted by " + ", ".join(str(p) for p in self.counters_hit)
        return text
