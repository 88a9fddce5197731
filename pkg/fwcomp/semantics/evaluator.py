"""Reference processing model: NAT on the original header, then the policy
in position order with first terminal match, accounting continuation and a
default drop."""

import logging
from datetime import datetime, timedelta
from typing import List, Optional, Sequence

from fwcomp.errors import InvalidTranslation
from fwcomp.model.database import ObjectDatabase
from fwcomp.model.intervals import NO_MAC
from fwcomp.model.objects import AnyInterval, Firewall, FwObject, MatchElement, NATRule, PolicyRule, TimeInterval, UDPService
from fwcomp.model.types import Action
from .packet import Packet, Timestamp, Verdict, VerdictAction

logger = logging.getLogger(__name__)

VERDICT_ACTIONS = {
    Action.ACCEPT: VerdictAction.ACCEPT,
    Action.DENY: VerdictAction.DENY,
    Action.REJECT: VerdictAction.REJECT,
}


def interval_matches(interval: FwObject, timestamp: Optional[Timestamp], db: ObjectDatabase) -> bool:
    """Conjunction of absolute bounds, weekdays and daily window; untimed packets only match Any."""
    if isinstance(interval, AnyInterval):
        return True
    if timestamp is None:
        return False
    if isinstance(interval, TimeInterval) and interval.is_absolute:
        if timestamp.date is None:
            return False
        moment = datetime.combine(timestamp.date, datetime.min.time()) + timedelta(minutes=timestamp.minute)
        if interval.start is not None and moment < interval.start:
            return False
        if interval.end is not None and moment > interval.end:
            return False
        weekly = db.derived(("weekly", interval), lambda: db.time_set_of(
            TimeInterval(id=interval.id, weekdays=interval.weekdays,
                         daily_start=interval.daily_start, daily_end=interval.daily_end)))
        return timestamp.minute_of_week in weekly
    return timestamp.minute_of_week in db.time_set_of(interval)


class ElementMatcher:
    """Precomputed membership test for one rule field."""

    def __init__(self, element: MatchElement, db: ObjectDatabase):
        self.element = element
        self.negated = element.negated

    def hit(self, packet: Packet) -> bool:
        raise NotImplementedError

    def __call__(self, packet: Packet) -> bool:
        return self.hit(packet) != self.negated


class SourceMatcher(ElementMatcher):
    """Source field; IP objects match the address, physical ones the MAC."""

    def __init__(self, element, db):
        super().__init__(element, db)
        self.addresses, self.macs = db.layer_sets(element)

    def hit(self, packet):
        mac = NO_MAC if packet.src_mac is None else packet.src_mac
        return packet.src_ip in self.addresses or mac in self.macs


class DestinationMatcher(ElementMatcher):
    def __init__(self, element, db):
        super().__init__(element, db)
        self.addresses, _ = db.layer_sets(element)

    def hit(self, packet):
        return packet.dst_ip in self.addresses


class ServiceMatcher(ElementMatcher):
    def __init__(self, element, db):
        super().__init__(element, db)
        self.services = db.element_service_set(MatchElement(element.refs))

    def hit(self, packet):
        return self.services.contains(packet.protocol, packet.service_point())


class InterfaceMatcher(ElementMatcher):
    def __init__(self, element, db):
        super().__init__(element, db)
        self.names = db.interface_names(element)

    def hit(self, packet):
        return self.names is None or packet.interface in self.names


class TimeMatcher(ElementMatcher):
    def __init__(self, element, db):
        super().__init__(element, db)
        self.db = db
        self.intervals = db.element_leaves(element)

    def hit(self, packet):
        return any(interval_matches(i, packet.timestamp, self.db) for i in self.intervals)


class RuleMatcher:
    """All field matchers of a PolicyRule or NATRule, built once per database."""

    def __init__(self, rule, db: ObjectDatabase):
        self.rule = rule
        if isinstance(rule, PolicyRule):
            self.fields = [SourceMatcher(rule.src, db), DestinationMatcher(rule.dst, db),
                           ServiceMatcher(rule.srv, db), InterfaceMatcher(rule.itf, db), TimeMatcher(rule.when, db)]
        else:
            self.fields = [SourceMatcher(rule.osrc, db), DestinationMatcher(rule.odst, db),
                           ServiceMatcher(rule.osrv, db), TimeMatcher(rule.when, db)]

    def __call__(self, packet: Packet) -> bool:
        if isinstance(self.rule, PolicyRule) and not self.rule.direction.covers(packet.direction):
            return False
        return all(field(packet) for field in self.fields)


def rule_matcher(rule, db: ObjectDatabase) -> RuleMatcher:
    return db.derived(("matcher", rule), lambda: RuleMatcher(rule, db))


def match_rule(rule: PolicyRule, packet: Packet, db: ObjectDatabase) -> bool:
    """True iff every field of the rule and its direction match the packet."""
    return rule_matcher(rule, db)(packet)


def single_address(ref: str, db: ObjectDatabase) -> int:
    addresses = db.address_set_of(db.resolve(ref))
    if addresses.size() != 1:
        raise InvalidTranslation(f"translation target {ref} must denote a single address, "
                                 f"got {addresses}")
    return addresses.intervals[0][0]


def translate(rule: NATRule, packet: Packet, db: ObjectDatabase) -> Packet:
    """Rewrite the fields the rule translates; empty translations keep the original."""
    changes = {}
    if rule.tsrc is not None:
        changes["src_ip"] = single_address(rule.tsrc, db)
    if rule.tdst is not None:
        changes["dst_ip"] = single_address(rule.tdst, db)
    if rule.tsrv is not None and packet.has_ports:
        service = db.resolve(rule.tsrv)
        # a TCP service rewrites TCP ports only, a UDP service UDP ports only
        if isinstance(service, UDPService) and packet.protocol == service.protocol:
            for key, (lo, hi) in (("src_port", service.src_range), ("dst_port", service.dst_range)):
                if lo == hi and lo != 0:
                    changes[key] = lo
    return packet.with_fields(**changes) if changes else packet


def apply_nat(rules: Sequence[NATRule], packet: Packet, db: ObjectDatabase) -> Packet:
    """First matching rule (by position, on the original header) rewrites the packet once."""
    for rule in sorted(rules, key=lambda r: r.position):
        if rule.disabled:
            continue
        if rule_matcher(rule, db)(packet):
            logger.debug(f"NAT rule {rule.position} translates {packet}")
            return translate(rule, packet, db)
    return packet


def evaluate_policy(rules: Sequence[PolicyRule], packet: Packet, db: ObjectDatabase) -> Verdict:
    counters: List[int] = []
    for rule in sorted(rules, key=lambda r: r.position):
        if rule.disabled or not match_rule(rule, packet, db):
            continue
        if rule.action is Action.ACCOUNTING:
            counters.append(rule.position)
            continue
        return Verdict(VERDICT_ACTIONS[rule.action], packet, rule.position, counters)
    return Verdict(VerdictAction.DEFAULT_DROP, packet, None, counters)


def evaluate(firewall: Firewall, packet: Packet, db: ObjectDatabase) -> Verdict:
    """NAT first, then the policy against the translated header."""
    translated = apply_nat(firewall.nat_rules, packet, db)
    return evaluate_policy(firewall.rules, translated, db)
